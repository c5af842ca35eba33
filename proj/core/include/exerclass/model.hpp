#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "exerclass/landmarks.hpp"

namespace exerclass {

/// Network topology: masked input -> stacked LSTM layers -> dense softmax.
struct ModelConfig {
  int input_dim = static_cast<int>(kFrameFeatures);
  std::vector<int> lstm_units{64, 64};
  int num_classes = 4;
  int max_seq_len = 32;
  float pad_value = kDefaultPadValue;

  /// Throws ConfigError when any field is out of range.
  void validate() const;
  int layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : lstm_units[layer - 1];
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form parameter count: sum over layers of 4*(u*(d+u)+u), plus u_last*k + k.
std::size_t param_count(const ModelConfig& config);

/// One LSTM layer. Kernels are stored input-major: element (j, r) of the
/// input kernel multiplies input j into pre-activation r. The 4*units
/// pre-activations are packed in gate order [i, f, g, o].
template <typename T>
struct LstmLayerParams {
  int input_dim = 0;
  int units = 0;
  std::vector<T> input_kernel;      // input_dim x 4*units
  std::vector<T> recurrent_kernel;  // units x 4*units
  std::vector<T> bias;              // 4*units

  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

/// All trainable tensors. T = float for training/serving, double for
/// verification. Gradients and optimizer accumulators reuse this type.
template <typename T>
struct Params {
  std::vector<LstmLayerParams<T>> lstm;
  std::vector<T> dense_kernel;  // units_last x num_classes, input-major
  std::vector<T> dense_bias;    // num_classes

  /// Zero-filled tensors shaped for config.
  static Params zeros(const ModelConfig& config);

  std::size_t scalar_count() const;

  /// Visits every tensor in the fixed serialization order:
  /// lstm[0].input_kernel, lstm[0].recurrent_kernel, lstm[0].bias, ...,
  /// dense_kernel, dense_bias.
  template <typename F>
  void visit(F&& f) {
    for (auto& layer : lstm) {
      f(std::span<T>(layer.input_kernel));
      f(std::span<T>(layer.recurrent_kernel));
      f(std::span<T>(layer.bias));
    }
    f(std::span<T>(dense_kernel));
    f(std::span<T>(dense_bias));
  }
  template <typename F>
  void visit(F&& f) const {
    for (const auto& layer : lstm) {
      f(std::span<const T>(layer.input_kernel));
      f(std::span<const T>(layer.recurrent_kernel));
      f(std::span<const T>(layer.bias));
    }
    f(std::span<const T>(dense_kernel));
    f(std::span<const T>(dense_bias));
  }

  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    for (const auto& layer : lstm) {
      out.lstm.push_back({layer.input_dim, layer.units, conv(layer.input_kernel),
                          conv(layer.recurrent_kernel), conv(layer.bias)});
    }
    out.dense_kernel = conv(dense_kernel);
    out.dense_bias = conv(dense_bias);
    return out;
  }

  friend bool operator==(const Params&, const Params&) = default;
};

using ModelParams = Params<float>;

/// Throws ContractViolation unless every tensor matches config's shapes.
template <typename T>
void check_shapes(const Params<T>& params, const ModelConfig& config);

/// Glorot-uniform kernels (bound sqrt(6/(fan_in+fan_out))), zero biases, and
/// forget-gate bias 1.0. Deterministic in seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Model input: steps x input_dim features plus a per-step activity mask.
template <typename T>
struct SequenceTensor {
  int steps = 0;
  int input_dim = 0;
  std::vector<T> features;
  std::vector<std::uint8_t> active;  // 1 = real frame, 0 = masked

  std::span<const T> step(int t) const {
    return std::span<const T>(features).subspan(static_cast<std::size_t>(t) * input_dim,
                                                static_cast<std::size_t>(input_dim));
  }
};

template <typename T>
SequenceTensor<T> to_tensor(const PoseSequence& sequence, float pad_value = kDefaultPadValue);

struct ClassProbabilities {
  std::vector<double> probs;
  int argmax = 0;  // lowest index among ties
};

/// Numerically stable softmax. Throws ContractViolation on non-finite input.
std::vector<double> softmax(std::span<const double> logits);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax_lowest(std::span<const double> values);

/// Standard LSTM step, in place.
///
/// `gates` (4*units) receives the activated [i, f, g, o]; `h` and `c` are
/// overwritten with the new state. A non-empty `recurrent_mask` multiplies h
/// before it enters the recurrent kernel (training-time recurrent dropout).
template <typename T>
void lstm_cell_step(std::span<const T> x, std::span<T> h, std::span<T> c,
                    const LstmLayerParams<T>& layer, std::span<const T> recurrent_mask,
                    std::span<T> gates);

template <typename T>
struct CellState {
  std::vector<T> h;
  std::vector<T> c;
};

template <typename T>
CellState<T> lstm_cell_step(std::span<const T> x, std::span<const T> h, std::span<const T> c,
                            const LstmLayerParams<T>& layer,
                            std::span<const T> recurrent_mask = {});

enum class Mode { Train, Infer };

/// Per-layer recurrent dropout multipliers (0 or 1/(1-p)), one vector of
/// length units per LSTM layer. Empty means no dropout.
template <typename T>
using DropoutMasks = std::vector<std::vector<T>>;

/// Intermediate values of one LSTM layer over the active steps of a sequence.
/// Row 0 of hidden/cell is the zero initial state; row s+1 is the state after
/// the s-th active step.
template <typename T>
struct LayerTrace {
  std::vector<T> hidden;  // (S+1) x units
  std::vector<T> cell;    // (S+1) x units
  std::vector<T> gates;   // S x 4*units, activated [i, f, g, o]
};

template <typename T>
struct ForwardTrace {
  std::vector<int> active_steps;  // indices of unmasked time steps, ascending
  std::vector<LayerTrace<T>> layers;
  std::vector<T> logits;
  ClassProbabilities probabilities;
};

/// Full forward pass keeping everything backprop needs. Masked steps carry
/// every layer's (h, c) through unchanged. The sequence may have any number
/// of steps; only input_dim must match the config.
template <typename T>
ForwardTrace<T> forward_trace(const SequenceTensor<T>& sequence, const Params<T>& params,
                              const ModelConfig& config, Mode mode = Mode::Infer,
                              const DropoutMasks<T>& masks = {});

template <typename T>
struct ForwardResult {
  ClassProbabilities probabilities;
  std::vector<T> logits;
};

template <typename T>
ForwardResult<T> forward(const SequenceTensor<T>& sequence, const Params<T>& params,
                         const ModelConfig& config, Mode mode = Mode::Infer,
                         const DropoutMasks<T>& masks = {});

/// Infer-mode classification of a padded pose sequence (32-bit path).
ForwardResult<float> classify(const PoseSequence& sequence, const ModelParams& params,
                              const ModelConfig& config);

/// A model file's full contents.
struct LoadedModel {
  ModelConfig config;
  ClassRegistry registry;
  ModelParams params;
};

inline constexpr int kModelFormatVersion = 1;

/// Binary container: text header (format_version, config, class registry,
/// gate order, tensor table, CRC-32 checksum) terminated by "end_header\n",
/// followed by the raw little-endian float32 tensors in Params::visit order.
void save_model(const ModelParams& params, const ModelConfig& config,
                const ClassRegistry& registry, const std::string& path);
std::string serialize_model(const ModelParams& params, const ModelConfig& config,
                            const ClassRegistry& registry);

/// Throws ModelFormatError naming the field that failed validation.
LoadedModel load_model(const std::string& path);
LoadedModel deserialize_model(std::string_view bytes);

}  // namespace exerclass
