#include "exerclass/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "exerclass/errors.hpp"
#include "exerclass/rng.hpp"

namespace exerclass {

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (lstm_units.empty()) throw ConfigError("lstm_units must list at least one layer");
  for (int u : lstm_units) {
    if (u < 1) throw ConfigError("every lstm_units entry must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
  if (!std::isfinite(pad_value)) throw ConfigError("pad_value must be finite");
}

std::size_t param_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < config.lstm_units.size(); ++l) {
    const auto u = static_cast<std::size_t>(config.lstm_units[l]);
    const auto d = static_cast<std::size_t>(config.layer_input_dim(l));
    total += 4 * (u * (d + u) + u);
  }
  const auto u_last = static_cast<std::size_t>(config.lstm_units.back());
  const auto k = static_cast<std::size_t>(config.num_classes);
  return total + u_last * k + k;
}

template <typename T>
Params<T> Params<T>::zeros(const ModelConfig& config) {
  if (config.lstm_units.empty()) throw ConfigError("lstm_units must list at least one layer");
  Params<T> p;
  for (std::size_t l = 0; l < config.lstm_units.size(); ++l) {
    const int u = config.lstm_units[l];
    const int d = config.layer_input_dim(l);
    LstmLayerParams<T> layer;
    layer.input_dim = d;
    layer.units = u;
    layer.input_kernel.assign(static_cast<std::size_t>(d) * 4 * u, T(0));
    layer.recurrent_kernel.assign(static_cast<std::size_t>(u) * 4 * u, T(0));
    layer.bias.assign(static_cast<std::size_t>(4 * u), T(0));
    p.lstm.push_back(std::move(layer));
  }
  p.dense_kernel.assign(
      static_cast<std::size_t>(config.lstm_units.back()) * config.num_classes, T(0));
  p.dense_bias.assign(static_cast<std::size_t>(config.num_classes), T(0));
  return p;
}

template <typename T>
std::size_t Params<T>::scalar_count() const {
  std::size_t n = 0;
  visit([&n](std::span<const T> t) { n += t.size(); });
  return n;
}

template <typename T>
void check_shapes(const Params<T>& params, const ModelConfig& config) {
  auto fail = [](const std::string& what) { throw ContractViolation("params/config mismatch: " + what); };
  if (params.lstm.size() != config.lstm_units.size()) fail("layer count");
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    const auto& layer = params.lstm[l];
    const int u = config.lstm_units[l];
    const int d = config.layer_input_dim(l);
    const std::string name = "lstm" + std::to_string(l);
    if (layer.units != u || layer.input_dim != d) fail(name + " dimensions");
    if (layer.input_kernel.size() != static_cast<std::size_t>(d) * 4 * u) fail(name + ".input_kernel");
    if (layer.recurrent_kernel.size() != static_cast<std::size_t>(u) * 4 * u) fail(name + ".recurrent_kernel");
    if (layer.bias.size() != static_cast<std::size_t>(4 * u)) fail(name + ".bias");
  }
  if (params.dense_kernel.size() !=
      static_cast<std::size_t>(config.lstm_units.back()) * config.num_classes) {
    fail("dense.kernel");
  }
  if (params.dense_bias.size() != static_cast<std::size_t>(config.num_classes)) fail("dense.bias");
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  auto p = ModelParams::zeros(config);
  auto fill = [&rng](std::vector<float>& t, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& w : t) w = static_cast<float>(rng.uniform(-bound, bound));
  };
  for (auto& layer : p.lstm) {
    fill(layer.input_kernel, layer.input_dim, 4.0 * layer.units);
    fill(layer.recurrent_kernel, layer.units, 4.0 * layer.units);
    std::fill(layer.bias.begin() + layer.units, layer.bias.begin() + 2 * layer.units, 1.0f);
  }
  fill(p.dense_kernel, config.lstm_units.back(), config.num_classes);
  return p;
}

template <typename T>
SequenceTensor<T> to_tensor(const PoseSequence& sequence, float pad_value) {
  SequenceTensor<T> out;
  out.steps = static_cast<int>(sequence.frames.size());
  out.input_dim = static_cast<int>(kFrameFeatures);
  out.features.reserve(sequence.frames.size() * kFrameFeatures);
  out.active.reserve(sequence.frames.size());
  for (const auto& frame : sequence.frames) {
    const auto flat = flatten_frame(frame, pad_value);
    out.features.insert(out.features.end(), flat.begin(), flat.end());
    out.active.push_back(frame.is_padding ? 0 : 1);
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractViolation("softmax of an empty vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw ContractViolation("softmax input must be finite");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return out;
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

}  // namespace

template <typename T>
void lstm_cell_step(std::span<const T> x, std::span<T> h, std::span<T> c,
                    const LstmLayerParams<T>& layer, std::span<const T> recurrent_mask,
                    std::span<T> gates) {
  const auto u = static_cast<std::size_t>(layer.units);
  const auto d = static_cast<std::size_t>(layer.input_dim);
  const std::size_t width = 4 * u;
  if (x.size() != d || h.size() != u || c.size() != u || gates.size() != width ||
      (!recurrent_mask.empty() && recurrent_mask.size() != u)) {
    throw ContractViolation("lstm_cell_step: shape mismatch");
  }

  T* z = gates.data();
  std::copy(layer.bias.begin(), layer.bias.end(), z);
  for (std::size_t j = 0; j < d; ++j) {
    const T xj = x[j];
    const T* row = layer.input_kernel.data() + j * width;
    for (std::size_t r = 0; r < width; ++r) z[r] += row[r] * xj;
  }
  for (std::size_t j = 0; j < u; ++j) {
    const T hj = recurrent_mask.empty() ? h[j] : recurrent_mask[j] * h[j];
    const T* row = layer.recurrent_kernel.data() + j * width;
    for (std::size_t r = 0; r < width; ++r) z[r] += row[r] * hj;
  }
  for (std::size_t r = 0; r < u; ++r) {
    const T i = sigmoid(z[r]);
    const T f = sigmoid(z[u + r]);
    const T g = std::tanh(z[2 * u + r]);
    const T o = sigmoid(z[3 * u + r]);
    z[r] = i;
    z[u + r] = f;
    z[2 * u + r] = g;
    z[3 * u + r] = o;
    c[r] = f * c[r] + i * g;
    h[r] = o * std::tanh(c[r]);
  }
}

template <typename T>
CellState<T> lstm_cell_step(std::span<const T> x, std::span<const T> h, std::span<const T> c,
                            const LstmLayerParams<T>& layer, std::span<const T> recurrent_mask) {
  CellState<T> out{std::vector<T>(h.begin(), h.end()), std::vector<T>(c.begin(), c.end())};
  std::vector<T> gates(static_cast<std::size_t>(4 * layer.units));
  lstm_cell_step<T>(x, std::span<T>(out.h), std::span<T>(out.c), layer, recurrent_mask,
                    std::span<T>(gates));
  return out;
}

template <typename T>
ForwardTrace<T> forward_trace(const SequenceTensor<T>& sequence, const Params<T>& params,
                              const ModelConfig& config, Mode mode, const DropoutMasks<T>& masks) {
  check_shapes(params, config);
  if (sequence.input_dim != config.input_dim) {
    throw ContractViolation("sequence input_dim " + std::to_string(sequence.input_dim) +
                            " does not match model input_dim " + std::to_string(config.input_dim));
  }
  if (sequence.features.size() !=
          static_cast<std::size_t>(sequence.steps) * static_cast<std::size_t>(sequence.input_dim) ||
      sequence.active.size() != static_cast<std::size_t>(sequence.steps)) {
    throw ContractViolation("sequence tensor has inconsistent sizes");
  }
  if (!masks.empty()) {
    if (mode == Mode::Infer) throw ContractViolation("dropout masks are not allowed in infer mode");
    if (masks.size() != params.lstm.size()) throw ContractViolation("one dropout mask per layer");
    for (std::size_t l = 0; l < masks.size(); ++l) {
      if (masks[l].size() != static_cast<std::size_t>(params.lstm[l].units)) {
        throw ContractViolation("dropout mask width mismatch");
      }
    }
  }

  ForwardTrace<T> trace;
  for (int t = 0; t < sequence.steps; ++t) {
    if (sequence.active[static_cast<std::size_t>(t)]) trace.active_steps.push_back(t);
  }
  const std::size_t steps = trace.active_steps.size();

  trace.layers.resize(params.lstm.size());
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    const auto& layer = params.lstm[l];
    const auto u = static_cast<std::size_t>(layer.units);
    auto& lt = trace.layers[l];
    lt.hidden.assign((steps + 1) * u, T(0));
    lt.cell.assign((steps + 1) * u, T(0));
    lt.gates.assign(steps * 4 * u, T(0));
    const std::span<const T> mask =
        masks.empty() ? std::span<const T>{} : std::span<const T>(masks[l]);

    for (std::size_t s = 0; s < steps; ++s) {
      std::span<const T> x;
      if (l == 0) {
        x = sequence.step(trace.active_steps[s]);
      } else {
        const auto below = static_cast<std::size_t>(params.lstm[l - 1].units);
        x = std::span<const T>(trace.layers[l - 1].hidden).subspan((s + 1) * below, below);
      }
      std::copy_n(lt.hidden.begin() + s * u, u, lt.hidden.begin() + (s + 1) * u);
      std::copy_n(lt.cell.begin() + s * u, u, lt.cell.begin() + (s + 1) * u);
      lstm_cell_step<T>(x, std::span<T>(lt.hidden).subspan((s + 1) * u, u),
                        std::span<T>(lt.cell).subspan((s + 1) * u, u), layer, mask,
                        std::span<T>(lt.gates).subspan(s * 4 * u, 4 * u));
    }
  }

  const auto u_last = static_cast<std::size_t>(params.lstm.back().units);
  const auto k = static_cast<std::size_t>(config.num_classes);
  const T* h_top = trace.layers.back().hidden.data() + steps * u_last;
  trace.logits.assign(params.dense_bias.begin(), params.dense_bias.end());
  for (std::size_t j = 0; j < u_last; ++j) {
    const T* row = params.dense_kernel.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) trace.logits[c] += row[c] * h_top[j];
  }
  const std::vector<double> wide(trace.logits.begin(), trace.logits.end());
  trace.probabilities.probs = softmax(wide);
  trace.probabilities.argmax = argmax_lowest(trace.probabilities.probs);
  return trace;
}

template <typename T>
ForwardResult<T> forward(const SequenceTensor<T>& sequence, const Params<T>& params,
                         const ModelConfig& config, Mode mode, const DropoutMasks<T>& masks) {
  auto trace = forward_trace(sequence, params, config, mode, masks);
  return {std::move(trace.probabilities), std::move(trace.logits)};
}

ForwardResult<float> classify(const PoseSequence& sequence, const ModelParams& params,
                              const ModelConfig& config) {
  return forward(to_tensor<float>(sequence, config.pad_value), params, config, Mode::Infer);
}

#define EXERCLASS_INSTANTIATE(T)                                                               \
  template struct Params<T>;                                                                   \
  template void check_shapes<T>(const Params<T>&, const ModelConfig&);                         \
  template SequenceTensor<T> to_tensor<T>(const PoseSequence&, float);                         \
  template void lstm_cell_step<T>(std::span<const T>, std::span<T>, std::span<T>,              \
                                  const LstmLayerParams<T>&, std::span<const T>, std::span<T>); \
  template CellState<T> lstm_cell_step<T>(std::span<const T>, std::span<const T>,              \
                                          std::span<const T>, const LstmLayerParams<T>&,       \
                                          std::span<const T>);                                 \
  template ForwardTrace<T> forward_trace<T>(const SequenceTensor<T>&, const Params<T>&,        \
                                            const ModelConfig&, Mode, const DropoutMasks<T>&); \
  template ForwardResult<T> forward<T>(const SequenceTensor<T>&, const Params<T>&,             \
                                       const ModelConfig&, Mode, const DropoutMasks<T>&);

EXERCLASS_INSTANTIATE(float)
EXERCLASS_INSTANTIATE(double)

#undef EXERCLASS_INSTANTIATE

}  // namespace exerclass
