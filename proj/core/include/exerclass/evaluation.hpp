#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exerclass/landmarks.hpp"
#include "exerclass/model.hpp"
#include "exerclass/rng.hpp"

namespace exerclass {

/// k x k tally; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void record(int truth, int predicted);

  std::size_t num_classes() const noexcept { return k_; }
  std::uint64_t count(int truth, int predicted) const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct EvalReport {
  std::string split_name;
  ClassRegistry registry;
  ConfusionMatrix confusion{4};
  std::vector<std::uint64_t> support;
  std::vector<std::optional<double>> per_class_accuracy;  // absent for empty rows
  double overall_accuracy = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Builds a report from (truth, predicted) pairs.
EvalReport make_report(std::span<const int> truth, std::span<const int> predicted,
                       const ClassRegistry& registry, std::string split_name);

/// Infer-mode argmax for every sequence.
std::vector<int> predict(std::span<const PoseSequence> sequences, const ModelParams& params,
                         const ModelConfig& config);

/// Classifies every labeled sequence and tallies the results.
/// Throws MalformedInput on an empty list, ContractViolation on an unlabeled sequence.
EvalReport evaluate(const ModelParams& params, const ModelConfig& config,
                    std::span<const PoseSequence> sequences, const ClassRegistry& registry,
                    std::string split_name = "all");

/// Randomly permutes the frames up to and including the last real frame,
/// leaving the tail padding in place. Destroys temporal order while keeping
/// the multiset of poses.
PoseSequence shuffle_frames(const PoseSequence& sequence, Rng& rng);

enum class ReportFormat { Table, Json };

/// Table: per-class and overall accuracy in percent to two decimals, then
/// the integer confusion grid. Json: lossless machine-readable record.
std::string render_report(const EvalReport& report, ReportFormat format);

/// Inverse of render_report(..., Json).
EvalReport parse_report_json(std::string_view text);

}  // namespace exerclass
