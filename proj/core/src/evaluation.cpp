#include "exerclass/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "exerclass/errors.hpp"

namespace exerclass {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {}

void ConfusionMatrix::record(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= k_ ||
      static_cast<std::size_t>(predicted) >= k_) {
    throw ContractViolation("confusion matrix index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted));
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += count(truth, static_cast<int>(p));
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += counts_[i * k_ + i];
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

EvalReport make_report(std::span<const int> truth, std::span<const int> predicted,
                       const ClassRegistry& registry, std::string split_name) {
  if (truth.size() != predicted.size()) throw ContractViolation("truth/prediction length mismatch");
  if (truth.empty()) throw MalformedInput("cannot evaluate an empty set of sequences");
  EvalReport report;
  report.split_name = std::move(split_name);
  report.registry = registry;
  report.confusion = ConfusionMatrix(registry.size());
  for (std::size_t i = 0; i < truth.size(); ++i) report.confusion.record(truth[i], predicted[i]);
  const auto k = static_cast<int>(registry.size());
  for (int c = 0; c < k; ++c) {
    const auto support = report.confusion.row_sum(c);
    report.support.push_back(support);
    if (support == 0) {
      report.per_class_accuracy.emplace_back(std::nullopt);
    } else {
      report.per_class_accuracy.emplace_back(static_cast<double>(report.confusion.count(c, c)) /
                                             static_cast<double>(support));
    }
  }
  report.overall_accuracy =
      static_cast<double>(report.confusion.trace()) / static_cast<double>(report.confusion.total());
  return report;
}

std::vector<int> predict(std::span<const PoseSequence> sequences, const ModelParams& params,
                         const ModelConfig& config) {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) out.push_back(classify(seq, params, config).probabilities.argmax);
  return out;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config,
                    std::span<const PoseSequence> sequences, const ClassRegistry& registry,
                    std::string split_name) {
  if (sequences.empty()) throw MalformedInput("cannot evaluate an empty set of sequences");
  if (registry.size() != static_cast<std::size_t>(config.num_classes)) {
    throw ContractViolation("class registry size does not match num_classes");
  }
  std::vector<int> truth;
  truth.reserve(sequences.size());
  for (const auto& seq : sequences) {
    if (!seq.label) throw ContractViolation("evaluation requires labeled sequences");
    truth.push_back(*seq.label);
  }
  const auto predicted = predict(sequences, params, config);
  return make_report(truth, predicted, registry, std::move(split_name));
}

PoseSequence shuffle_frames(const PoseSequence& sequence, Rng& rng) {
  PoseSequence out = sequence;
  auto last_real = out.frames.end();
  for (auto it = out.frames.begin(); it != out.frames.end(); ++it) {
    if (!it->is_padding) last_real = it;
  }
  if (last_real != out.frames.end()) rng.shuffle(out.frames.begin(), last_real + 1);
  return out;
}

namespace {

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  const auto k = report.registry.size();
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json j;
    j["split"] = report.split_name;
    j["classes"] = report.registry.names();
    j["support"] = report.support;
    auto acc = nlohmann::ordered_json::array();
    for (const auto& a : report.per_class_accuracy) {
      acc.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json());
    }
    j["per_class_accuracy"] = acc;
    j["overall_accuracy"] = report.overall_accuracy;
    j["correct"] = report.confusion.trace();
    j["total"] = report.confusion.total();
    auto grid = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < k; ++t) {
      auto row = nlohmann::ordered_json::array();
      for (std::size_t p = 0; p < k; ++p) {
        row.push_back(report.confusion.count(static_cast<int>(t), static_cast<int>(p)));
      }
      grid.push_back(row);
    }
    j["confusion"] = grid;
    return j.dump(2) + "\n";
  }

  std::size_t name_width = 10;
  for (const auto& n : report.registry.names()) name_width = std::max(name_width, n.size());
  const std::size_t label_width = 22;

  std::ostringstream os;
  os << "split: " << report.split_name << "  (" << report.confusion.trace() << "/"
     << report.confusion.total() << " correct)\n";
  os << std::left << std::setw(static_cast<int>(label_width)) << "";
  for (const auto& n : report.registry.names()) {
    os << std::right << std::setw(static_cast<int>(name_width) + 2) << n;
  }
  os << std::right << std::setw(12) << "Overall" << '\n';
  os << std::left << std::setw(static_cast<int>(label_width)) << "Accuracy [%]";
  for (const auto& a : report.per_class_accuracy) {
    os << std::right << std::setw(static_cast<int>(name_width) + 2) << percent(a);
  }
  os << std::right << std::setw(12) << percent(report.overall_accuracy) << '\n';
  os << std::left << std::setw(static_cast<int>(label_width)) << "Support";
  for (auto s : report.support) os << std::right << std::setw(static_cast<int>(name_width) + 2) << s;
  os << std::right << std::setw(12) << report.confusion.total() << "\n\n";

  os << "confusion (rows = true, columns = predicted)\n";
  os << std::left << std::setw(static_cast<int>(label_width)) << "";
  for (const auto& n : report.registry.names()) {
    os << std::right << std::setw(static_cast<int>(name_width) + 2) << n;
  }
  os << '\n';
  for (std::size_t t = 0; t < k; ++t) {
    os << std::left << std::setw(static_cast<int>(label_width)) << report.registry.name(t);
    for (std::size_t p = 0; p < k; ++p) {
      os << std::right << std::setw(static_cast<int>(name_width) + 2)
         << report.confusion.count(static_cast<int>(t), static_cast<int>(p));
    }
    os << '\n';
  }
  return os.str();
}

EvalReport parse_report_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  const auto names = j.at("classes").get<std::vector<std::string>>();
  ClassRegistry registry(names);
  const auto grid = j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
  if (grid.size() != names.size()) throw MalformedInput("confusion grid size mismatch");
  std::vector<int> truth, predicted;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    if (grid[t].size() != names.size()) throw MalformedInput("confusion grid size mismatch");
    for (std::size_t p = 0; p < grid[t].size(); ++p) {
      for (std::uint64_t n = 0; n < grid[t][p]; ++n) {
        truth.push_back(static_cast<int>(t));
        predicted.push_back(static_cast<int>(p));
      }
    }
  }
  return make_report(truth, predicted, registry, j.at("split").get<std::string>());
}

}  // namespace exerclass
