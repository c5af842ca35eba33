#pragma once

#include <random>
#include <vector>

#include "exerclass/training.hpp"
#include "support/oracles.hpp"

namespace exerclass::testing {

inline std::vector<double> flatten(const Params<double>& p) {
  std::vector<double> out;
  p.visit([&out](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

inline Params<double> unflatten(std::span<const double> flat, const ModelConfig& cfg) {
  auto p = Params<double>::zeros(cfg);
  std::size_t at = 0;
  p.visit([&](std::span<double> t) {
    for (auto& v : t) v = flat[at++];
  });
  return p;
}

struct GradCheckResult {
  double max_param_error = 0.0;
  double max_input_error = 0.0;
  std::size_t scalars = 0;
};

/// One random instance with d, u <= 3, t <= 5, k <= 3. Loss is evaluated by
/// the naive oracle, so the finite differences do not reuse library code.
/// With dropout > 0 a fixed mask set is drawn first and held constant.
inline GradCheckResult grad_check_instance(std::uint64_t seed, double dropout = 0.0) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> small(1, 3), steps(1, 5), layers(1, 2), cls(2, 3);
  std::vector<int> units(static_cast<std::size_t>(layers(gen)));
  for (auto& u : units) u = small(gen);
  const auto cfg = tiny_config(small(gen), units, cls(gen), 5);
  const auto params = random_params<double>(cfg, gen);
  auto seq = random_sequence<double>(steps(gen), cfg.input_dim, gen, 0.2);
  const int target = std::uniform_int_distribution<int>(0, cfg.num_classes - 1)(gen);

  Rng mask_rng(seed);
  const auto masks = sample_dropout_masks<double>(cfg, dropout, mask_rng);
  const auto analytic = sequence_gradient<double>(seq, target, params, cfg, masks, true);

  auto loss_of = [&](const Params<double>& p, const SequenceTensor<double>& s) {
    if (!masks.empty()) {
      return cross_entropy_from_logits<double>(forward(s, p, cfg, Mode::Train, masks).logits, target);
    }
    return cross_entropy_from_logits<double>(naive_logits(s, p), target);
  };

  GradCheckResult r;
  const auto numeric = finite_diff_grad(
      std::function<double(const Params<double>&)>([&](const Params<double>& p) { return loss_of(p, seq); }),
      params, 1e-5);
  const auto flat = flatten(analytic.params);
  r.scalars = flat.size();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    r.max_param_error = std::max(r.max_param_error, scaled_error(flat[i], numeric[i]));
  }

  const auto input_numeric = finite_diff_grad(
      std::function<double(std::span<const double>)>([&](std::span<const double> x) {
        auto s = seq;
        s.features.assign(x.begin(), x.end());
        return loss_of(params, s);
      }),
      std::span<const double>(seq.features), 1e-5);
  for (std::size_t i = 0; i < input_numeric.size(); ++i) {
    r.max_input_error = std::max(r.max_input_error, scaled_error(analytic.input[i], input_numeric[i]));
  }
  return r;
}

}  // namespace exerclass::testing
