#pragma once

#include <cmath>
#include <span>

#include "asym/common.hpp"
#include "asym/losses.hpp"

namespace asym {

/// AdamW moments and step counter for one parameter array.
struct OptimizerState {
  Vec m;
  Vec v;
  std::size_t step = 0;
  std::size_t total_steps = 1;

  OptimizerState() = default;
  OptimizerState(std::size_t n, std::size_t total) : m(n, 0.0), v(n, 0.0), total_steps(total) {}
};

/// Linear warmup from 0 over ceil(warmup_ratio * total) steps, then linear
/// decay to 0 at `total`.
inline double lr_schedule_factor(std::size_t step, std::size_t total, double warmup_ratio) {
  if (total == 0) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  return static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

/// One decoupled-weight-decay Adam update. Throws NumericError, leaving
/// params and state untouched, if any gradient is non-finite.
inline void optimizer_step(std::span<double> params, std::span<const double> grads,
                           OptimizerState& state, const TrainConfig& cfg,
                           bool apply_weight_decay = true) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("optimizer_step: parameter/gradient/state shapes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("optimizer_step: non-finite gradient at component " + std::to_string(i) +
                         " (step " + std::to_string(state.step) + ")");
    }
  }
  const double lr = cfg.lr * lr_schedule_factor(state.step, state.total_steps, cfg.warmup_ratio);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = apply_weight_decay ? lr * cfg.weight_decay : 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= decay * params[i] + lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace asym
