#include "exerclass/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "exerclass/errors.hpp"

namespace exerclass {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(rmsprop_rho >= 0.0 && rmsprop_rho < 1.0)) throw ConfigError("rmsprop_rho must be in [0, 1)");
  if (!(rmsprop_epsilon > 0.0)) throw ConfigError("rmsprop_epsilon must be > 0");
  if (!(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0)) {
    throw ConfigError("recurrent_dropout must be in [0, 1)");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
}

double cross_entropy(const ClassProbabilities& probs, int target) {
  return -std::log(probs.probs.at(static_cast<std::size_t>(target)));
}

template <typename T>
double cross_entropy_from_logits(std::span<const T> logits, int target) {
  double peak = static_cast<double>(logits[0]);
  for (T z : logits) peak = std::max(peak, static_cast<double>(z));
  double total = 0.0;
  for (T z : logits) total += std::exp(static_cast<double>(z) - peak);
  return peak + std::log(total) - static_cast<double>(logits[static_cast<std::size_t>(target)]);
}

std::vector<Example<float>> make_examples(std::span<const PoseSequence> sequences, float pad_value) {
  std::vector<Example<float>> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) {
    if (!seq.label) throw ContractViolation("training requires labeled sequences");
    out.push_back({to_tensor<float>(seq, pad_value), *seq.label});
  }
  return out;
}

namespace {

/// Adds d(loss)/d(params) for one sequence into `grads` (unscaled).
/// Returns the loss; `correct` reports whether argmax hit the target.
template <typename T>
double backprop_into(const SequenceTensor<T>& input, int target, const Params<T>& params,
                     const ModelConfig& config, const DropoutMasks<T>& masks, Params<T>& grads,
                     std::vector<T>* input_grad, bool& correct) {
  if (target < 0 || target >= config.num_classes) {
    throw ContractViolation("target label out of range");
  }
  const Mode mode = masks.empty() ? Mode::Infer : Mode::Train;
  const auto trace = forward_trace(input, params, config, mode, masks);
  correct = trace.probabilities.argmax == target;
  const double loss = cross_entropy_from_logits<T>(trace.logits, target);

  const std::size_t steps = trace.active_steps.size();
  const std::size_t layers = params.lstm.size();
  const auto k = static_cast<std::size_t>(config.num_classes);

  std::vector<T> dlogits(k);
  for (std::size_t c = 0; c < k; ++c) {
    dlogits[c] = static_cast<T>(trace.probabilities.probs[c] - (static_cast<int>(c) == target ? 1.0 : 0.0));
  }

  const auto u_top = static_cast<std::size_t>(params.lstm.back().units);
  const T* h_top = trace.layers.back().hidden.data() + steps * u_top;
  for (std::size_t j = 0; j < u_top; ++j) {
    T* row = grads.dense_kernel.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) row[c] += h_top[j] * dlogits[c];
  }
  for (std::size_t c = 0; c < k; ++c) grads.dense_bias[c] += dlogits[c];

  if (input_grad) input_grad->assign(input.features.size(), T(0));
  if (steps == 0) return loss;

  // External gradient flowing into each layer's h at each active step.
  std::vector<T> dh_ext(steps * u_top, T(0));
  for (std::size_t j = 0; j < u_top; ++j) {
    const T* row = params.dense_kernel.data() + j * k;
    T acc = T(0);
    for (std::size_t c = 0; c < k; ++c) acc += row[c] * dlogits[c];
    dh_ext[(steps - 1) * u_top + j] = acc;
  }

  for (std::size_t l = layers; l-- > 0;) {
    const auto& layer = params.lstm[l];
    auto& glayer = grads.lstm[l];
    const auto& lt = trace.layers[l];
    const auto u = static_cast<std::size_t>(layer.units);
    const auto d = static_cast<std::size_t>(layer.input_dim);
    const std::size_t width = 4 * u;
    const T* mask = masks.empty() ? nullptr : masks[l].data();

    std::vector<T> dh_below(l > 0 ? steps * d : 0, T(0));
    std::vector<T> dh_next(u, T(0));
    std::vector<T> dc_next(u, T(0));
    std::vector<T> dz(width);
    std::vector<T> h_prev(u);

    for (std::size_t s = steps; s-- > 0;) {
      const T* gates = lt.gates.data() + s * width;
      const T* c_prev = lt.cell.data() + s * u;
      const T* c_now = lt.cell.data() + (s + 1) * u;
      const T* dh_in = dh_ext.data() + s * u;
      for (std::size_t r = 0; r < u; ++r) {
        const T i = gates[r];
        const T f = gates[u + r];
        const T g = gates[2 * u + r];
        const T o = gates[3 * u + r];
        const T tc = std::tanh(c_now[r]);
        const T dh = dh_in[r] + dh_next[r];
        const T dc = dc_next[r] + dh * o * (T(1) - tc * tc);
        dz[r] = dc * g * i * (T(1) - i);
        dz[u + r] = dc * c_prev[r] * f * (T(1) - f);
        dz[2 * u + r] = dc * i * (T(1) - g * g);
        dz[3 * u + r] = dh * tc * o * (T(1) - o);
        dc_next[r] = dc * f;
      }

      for (std::size_t r = 0; r < width; ++r) glayer.bias[r] += dz[r];

      const T* x = l == 0 ? input.step(trace.active_steps[s]).data()
                          : trace.layers[l - 1].hidden.data() + (s + 1) * d;
      for (std::size_t j = 0; j < d; ++j) {
        const T xj = x[j];
        T* grow = glayer.input_kernel.data() + j * width;
        for (std::size_t r = 0; r < width; ++r) grow[r] += xj * dz[r];
      }

      const T* h_raw = lt.hidden.data() + s * u;
      for (std::size_t j = 0; j < u; ++j) h_prev[j] = mask ? mask[j] * h_raw[j] : h_raw[j];
      for (std::size_t j = 0; j < u; ++j) {
        const T hj = h_prev[j];
        T* grow = glayer.recurrent_kernel.data() + j * width;
        for (std::size_t r = 0; r < width; ++r) grow[r] += hj * dz[r];
      }

      for (std::size_t j = 0; j < u; ++j) {
        const T* row = layer.recurrent_kernel.data() + j * width;
        T acc = T(0);
        for (std::size_t r = 0; r < width; ++r) acc += row[r] * dz[r];
        dh_next[j] = mask ? mask[j] * acc : acc;
      }

      T* dx = nullptr;
      if (l > 0) {
        dx = dh_below.data() + s * d;
      } else if (input_grad) {
        dx = input_grad->data() + static_cast<std::size_t>(trace.active_steps[s]) * d;
      }
      if (dx) {
        for (std::size_t j = 0; j < d; ++j) {
          const T* row = layer.input_kernel.data() + j * width;
          T acc = T(0);
          for (std::size_t r = 0; r < width; ++r) acc += row[r] * dz[r];
          dx[j] = acc;
        }
      }
    }
    if (l > 0) dh_ext = std::move(dh_below);
  }
  return loss;
}

template <typename T>
void scale(Params<T>& p, T factor) {
  p.visit([factor](std::span<T> t) {
    for (auto& v : t) v *= factor;
  });
}

}  // namespace

template <typename T>
SequenceGradient<T> sequence_gradient(const SequenceTensor<T>& input, int target,
                                      const Params<T>& params, const ModelConfig& config,
                                      const DropoutMasks<T>& masks, bool with_input_gradient) {
  SequenceGradient<T> out;
  out.params = Params<T>::zeros(config);
  out.loss = backprop_into(input, target, params, config, masks, out.params,
                           with_input_gradient ? &out.input : nullptr, out.correct);
  return out;
}

template <typename T>
DropoutMasks<T> sample_dropout_masks(const ModelConfig& config, double p, Rng& rng) {
  DropoutMasks<T> masks;
  if (p <= 0.0) return masks;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (int u : config.lstm_units) {
    std::vector<T> m(static_cast<std::size_t>(u));
    for (auto& v : m) v = rng.bernoulli(p) ? T(0) : keep_scale;
    masks.push_back(std::move(m));
  }
  return masks;
}

template <typename T>
BatchGradient<T> compute_gradients(std::span<const Example<T>> batch, const Params<T>& params,
                                   const ModelConfig& config, double recurrent_dropout, Rng& rng) {
  if (batch.empty()) throw ContractViolation("compute_gradients needs a non-empty batch");
  BatchGradient<T> out;
  out.grads = Params<T>::zeros(config);
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (const auto& ex : batch) {
    if (ex.input.steps != config.max_seq_len) {
      throw ContractViolation("training sequences must be padded to max_seq_len");
    }
    const auto masks = sample_dropout_masks<T>(config, recurrent_dropout, rng);
    bool correct = false;
    loss_sum += backprop_into(ex.input, ex.label, params, config, masks, out.grads,
                              static_cast<std::vector<T>*>(nullptr), correct);
    hits += correct ? 1 : 0;
  }
  const auto n = static_cast<double>(batch.size());
  scale(out.grads, static_cast<T>(1.0 / n));
  out.loss = loss_sum / n;
  out.accuracy = static_cast<double>(hits) / n;
  return out;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> point, double h) {
  std::vector<double> probe(point.begin(), point.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = loss(probe);
    probe[i] = saved - h;
    const double down = loss(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<double> finite_diff_grad(const std::function<double(const Params<double>&)>& loss,
                                     const Params<double>& params, double h) {
  Params<double> probe = params;
  std::vector<double*> slots;
  probe.visit([&slots](std::span<double> t) {
    for (auto& v : t) slots.push_back(&v);
  });
  std::vector<double> grad(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    *slots[i] = saved + h;
    const double up = loss(probe);
    *slots[i] = saved - h;
    const double down = loss(probe);
    *slots[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

template <typename T>
void rmsprop_step(Params<T>& params, const Params<T>& grads, OptimizerState<T>& state,
                  const RmsPropConfig& config) {
  std::vector<std::span<T>> p_tensors, s_tensors;
  std::vector<std::span<const T>> g_tensors;
  params.visit([&](std::span<T> t) { p_tensors.push_back(t); });
  state.accumulators.visit([&](std::span<T> t) { s_tensors.push_back(t); });
  grads.visit([&](std::span<const T> t) { g_tensors.push_back(t); });
  if (p_tensors.size() != g_tensors.size() || p_tensors.size() != s_tensors.size()) {
    throw ContractViolation("rmsprop_step: tensor count mismatch");
  }
  const T lr = static_cast<T>(config.learning_rate);
  const T rho = static_cast<T>(config.rho);
  const T one_minus_rho = static_cast<T>(1.0 - config.rho);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    auto p = p_tensors[t];
    auto s = s_tensors[t];
    auto g = g_tensors[t];
    if (p.size() != g.size() || p.size() != s.size()) {
      throw ContractViolation("rmsprop_step: tensor shape mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      s[i] = rho * s[i] + one_minus_rho * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
    }
  }
  ++state.step;
}

DatasetSplit stratified_split(std::span<const int> labels, int num_classes, double val_fraction,
                              std::uint64_t seed) {
  Rng rng(seed);
  DatasetSplit split;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    rng.shuffle(members.begin(), members.end());
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(members.size())));
    if (!members.empty()) n_val = std::min(n_val, members.size() - 1);
    split.val.insert(split.val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.insert(split.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

TrainResult train(std::span<const PoseSequence> dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
  model_config.validate();
  return train_from(init_params(model_config, derive_seed(train_config.seed,
                                                           static_cast<std::uint64_t>(SeedStream::Init))),
                    dataset, model_config, train_config, on_epoch);
}

TrainResult train_from(ModelParams initial, std::span<const PoseSequence> dataset,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  check_shapes(initial, model_config);

  std::vector<int> labels;
  labels.reserve(dataset.size());
  std::vector<std::size_t> per_class(static_cast<std::size_t>(model_config.num_classes), 0);
  for (const auto& seq : dataset) {
    if (!seq.label) throw ContractViolation("training requires labeled sequences");
    if (*seq.label < 0 || *seq.label >= model_config.num_classes) {
      throw ConfigError("label index " + std::to_string(*seq.label) + " outside the class registry");
    }
    if (static_cast<int>(seq.frames.size()) != model_config.max_seq_len) {
      throw ContractViolation("training sequences must be padded to max_seq_len");
    }
    labels.push_back(*seq.label);
    ++per_class[static_cast<std::size_t>(*seq.label)];
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) {
      throw ConfigError("class " + std::to_string(c) + " has no training examples");
    }
  }

  TrainResult result;
  result.split = stratified_split(labels, model_config.num_classes, train_config.val_fraction,
                                  derive_seed(train_config.seed, static_cast<std::uint64_t>(SeedStream::Split)));
  const auto examples = make_examples(dataset, model_config.pad_value);

  std::vector<Example<float>> val_examples;
  for (auto i : result.split.val) val_examples.push_back(examples[i]);

  Rng shuffle_rng(derive_seed(train_config.seed, static_cast<std::uint64_t>(SeedStream::Shuffle)));
  Rng dropout_rng(derive_seed(train_config.seed, static_cast<std::uint64_t>(SeedStream::Dropout)));
  const RmsPropConfig rms{train_config.learning_rate, train_config.rmsprop_rho,
                          train_config.rmsprop_epsilon};

  ModelParams params = std::move(initial);
  auto state = OptimizerState<float>::zeros(model_config);
  std::vector<std::size_t> order = result.split.train;
  std::vector<Example<float>> batch;
  const auto batch_size = static_cast<std::size_t>(train_config.batch_size);

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    if (train_config.shuffle_each_epoch) shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    double hit_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const auto stop = std::min(order.size(), start + batch_size);
      batch.clear();
      for (auto i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
      auto step = compute_gradients<float>(batch, params, model_config,
                                           train_config.recurrent_dropout, dropout_rng);
      rmsprop_step(params, step.grads, state, rms);
      const auto n = static_cast<double>(batch.size());
      loss_sum += step.loss * n;
      hit_sum += step.accuracy * n;
    }

    EpochRecord record;
    record.epoch = epoch;
    const auto n_train = static_cast<double>(order.size());
    record.train_loss = loss_sum / n_train;
    record.train_acc = hit_sum / n_train;
    if (!val_examples.empty()) {
      double vloss = 0.0;
      std::size_t vhits = 0;
      for (const auto& ex : val_examples) {
        const auto out = forward(ex.input, params, model_config);
        vloss += cross_entropy_from_logits<float>(out.logits, ex.label);
        vhits += out.probabilities.argmax == ex.label ? 1 : 0;
      }
      record.val_loss = vloss / static_cast<double>(val_examples.size());
      record.val_acc = static_cast<double>(vhits) / static_cast<double>(val_examples.size());
    }
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  result.params = std::move(params);
  return result;
}

std::string format_history(const TrainHistory& history) {
  std::string out;
  for (const auto& r : history.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["train_acc"] = r.train_acc;
    j["val_loss"] = r.val_loss ? nlohmann::ordered_json(*r.val_loss) : nlohmann::ordered_json();
    j["val_acc"] = r.val_acc ? nlohmann::ordered_json(*r.val_acc) : nlohmann::ordered_json();
    out += j.dump();
    out += '\n';
  }
  return out;
}

#define EXERCLASS_INSTANTIATE(T)                                                                  \
  template double cross_entropy_from_logits<T>(std::span<const T>, int);                          \
  template SequenceGradient<T> sequence_gradient<T>(const SequenceTensor<T>&, int,                \
                                                    const Params<T>&, const ModelConfig&,         \
                                                    const DropoutMasks<T>&, bool);                \
  template DropoutMasks<T> sample_dropout_masks<T>(const ModelConfig&, double, Rng&);             \
  template BatchGradient<T> compute_gradients<T>(std::span<const Example<T>>, const Params<T>&,   \
                                                 const ModelConfig&, double, Rng&);               \
  template void rmsprop_step<T>(Params<T>&, const Params<T>&, OptimizerState<T>&,                 \
                                const RmsPropConfig&);

EXERCLASS_INSTANTIATE(float)
EXERCLASS_INSTANTIATE(double)

#undef EXERCLASS_INSTANTIATE

}  // namespace exerclass
