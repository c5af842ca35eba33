#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "exerclass/model.hpp"
#include "exerclass/rng.hpp"

namespace exerclass {

/// Training hyperparameters. Defaults are the reference configuration:
/// batch 32, 50 epochs, RMSProp at 1e-4, recurrent dropout 0.3.
struct TrainConfig {
  int batch_size = 32;
  int epochs = 50;
  double learning_rate = 1e-4;
  double rmsprop_rho = 0.9;
  double rmsprop_epsilon = 1e-7;
  double recurrent_dropout = 0.3;
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  bool shuffle_each_epoch = true;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// -ln(probs[target]).
double cross_entropy(const ClassProbabilities& probs, int target);

/// Cross-entropy computed from logits with log-sum-exp.
template <typename T>
double cross_entropy_from_logits(std::span<const T> logits, int target);

/// One labeled model input.
template <typename T>
struct Example {
  SequenceTensor<T> input;
  int label = 0;
};

/// Converts padded, labeled pose sequences into model inputs. Throws
/// ContractViolation for an unlabeled sequence.
std::vector<Example<float>> make_examples(std::span<const PoseSequence> sequences,
                                          float pad_value = kDefaultPadValue);

/// Gradient of one sequence's loss.
template <typename T>
struct SequenceGradient {
  Params<T> params;
  std::vector<T> input;  // steps x input_dim; only filled when requested
  double loss = 0.0;
  bool correct = false;
};

/// Backpropagation through time for a single sequence. Masked steps carry
/// the state gradient through unchanged and receive zero input gradient.
template <typename T>
SequenceGradient<T> sequence_gradient(const SequenceTensor<T>& input, int target,
                                      const Params<T>& params, const ModelConfig& config,
                                      const DropoutMasks<T>& masks = {},
                                      bool with_input_gradient = false);

/// Samples one recurrent-dropout mask per layer: each entry is 0 with
/// probability p, otherwise 1/(1-p). Returns no masks when p == 0.
template <typename T>
DropoutMasks<T> sample_dropout_masks(const ModelConfig& config, double p, Rng& rng);

template <typename T>
struct BatchGradient {
  Params<T> grads;  // gradient of the mean batch loss
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean-loss gradients over a batch. With recurrent_dropout > 0 a fresh mask
/// set is drawn from rng for every sequence, in batch order.
template <typename T>
BatchGradient<T> compute_gradients(std::span<const Example<T>> batch, const Params<T>& params,
                                   const ModelConfig& config, double recurrent_dropout, Rng& rng);

/// Central differences (f(x+h) - f(x-h)) / 2h for every scalar of params.
std::vector<double> finite_diff_grad(const std::function<double(const Params<double>&)>& loss,
                                     const Params<double>& params, double h = 1e-5);

/// Same oracle over a flat vector of scalars.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> point, double h = 1e-5);

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double rho = 0.9;
  double epsilon = 1e-7;
};

template <typename T>
struct OptimizerState {
  Params<T> accumulators;  // running mean of squared gradients
  std::uint64_t step = 0;

  static OptimizerState zeros(const ModelConfig& config) { return {Params<T>::zeros(config), 0}; }
};

/// Plain RMSProp: s <- rho*s + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(s)+eps).
template <typename T>
void rmsprop_step(Params<T>& params, const Params<T>& grads, OptimizerState<T>& state,
                  const RmsPropConfig& config);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Per class, shuffles that class's indices and moves round(val_fraction*n)
/// of them (at most n-1) to validation. Both index lists are ascending.
DatasetSplit stratified_split(std::span<const int> labels, int num_classes, double val_fraction,
                              std::uint64_t seed);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  DatasetSplit split;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run; a pure function of (dataset, configs, seed).
/// Throws ConfigError when a class has no examples.
TrainResult train(std::span<const PoseSequence> dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// Same, with caller-provided initial parameters.
TrainResult train_from(ModelParams initial, std::span<const PoseSequence> dataset,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch = {});

/// Machine-readable history: one JSON object per line per epoch.
std::string format_history(const TrainHistory& history);

/// Seed streams derived from TrainConfig::seed.
enum class SeedStream : std::uint64_t { Split = 1, Init = 2, Shuffle = 3, Dropout = 4 };

}  // namespace exerclass
