#pragma once

// Training objectives as pure value-and-gradient functions over embeddings.
// Similarities are dot products; callers pass unit-norm embeddings, but the
// functions are defined (and differentiable) for arbitrary vectors.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/encoder.hpp"

namespace asym {

struct TrainConfig {
  double tau = 0.05;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::vector<std::size_t> mrl_dims = {32, 64, 128};
  double lr = 2e-3;
  double warmup_ratio = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool learnable_tau = false;

  /// Throws ConfigError on the first violated invariant.
  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda weights must be >= 0");
    if (mrl_dims.empty()) throw ConfigError("mrl_dims must be non-empty");
    for (std::size_t i = 0; i < mrl_dims.size(); ++i) {
      if (mrl_dims[i] == 0) throw ConfigError("mrl_dims entries must be positive");
      if (i > 0 && mrl_dims[i] <= mrl_dims[i - 1]) {
        throw ConfigError("mrl_dims must be strictly ascending");
      }
    }
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0) throw ConfigError("warmup_ratio must be in [0,1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
  }
};

struct LossOutput {
  double value = 0.0;
  /// Gradients w.r.t. the differentiable inputs, in the order documented per loss.
  std::vector<Vec> grads;
  /// d value / d tau, where the loss depends on a temperature.
  double grad_tau = 0.0;
};

namespace detail {

inline void check_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
}

/// Softmax cross-entropy with target index 0 over logits. Returns the loss and
/// fills dlogits with softmax - onehot(0).
inline double softmax_xent_first(std::span<const double> logits, Vec& dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  dlogits.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    dlogits[j] = std::exp(logits[j] - mx);
    z += dlogits[j];
  }
  for (double& d : dlogits) d /= z;
  dlogits[0] -= 1.0;
  return -(logits[0] - mx) + std::log(z);
}

}  // namespace detail

/// -log softmax over [q.pos, q.neg_1, ...] / tau at the positive.
/// grads: [q, pos, neg_1, ..., neg_N].
inline LossOutput infonce(std::span<const double> q, std::span<const double> pos,
                          const std::vector<Vec>& negs, double tau) {
  detail::check_tau(tau);
  require_same_dim(q, pos, "infonce");
  for (const auto& n : negs) require_same_dim(q, n, "infonce");

  LossOutput out;
  out.grads.assign(negs.size() + 2, Vec(q.size(), 0.0));
  if (negs.empty()) return out;

  Vec sims(negs.size() + 1);
  sims[0] = dot(q, pos);
  for (std::size_t i = 0; i < negs.size(); ++i) sims[i + 1] = dot(q, negs[i]);
  Vec logits(sims.size());
  for (std::size_t j = 0; j < sims.size(); ++j) logits[j] = sims[j] / tau;

  Vec dlogits;
  out.value = detail::softmax_xent_first(logits, dlogits);

  Vec& gq = out.grads[0];
  for (std::size_t j = 0; j < sims.size(); ++j) {
    const double c = dlogits[j] / tau;
    std::span<const double> cand = j == 0 ? pos : std::span<const double>(negs[j - 1]);
    axpy(c, cand, gq);
    axpy(c, q, out.grads[j + 1]);
    out.grad_tau -= dlogits[j] * sims[j] / (tau * tau);
  }
  return out;
}

/// Self-contrastive alignment: the teacher embedding of the same text is the
/// positive, teacher embeddings of other in-batch texts are negatives. The
/// teacher is frozen, so grads: [x_student].
inline LossOutput asym_infonce_selfcontrast(std::span<const double> x_student,
                                            std::span<const double> x_teacher,
                                            const std::vector<Vec>& batch_teacher_negs,
                                            double tau) {
  auto full = infonce(x_student, x_teacher, batch_teacher_negs, tau);
  LossOutput out;
  out.value = full.value;
  out.grad_tau = full.grad_tau;
  out.grads.push_back(std::move(full.grads[0]));
  return out;
}

/// ||x_student - x_teacher||^2. grads: [x_student].
inline LossOutput mse_align(std::span<const double> x_student,
                            std::span<const double> x_teacher) {
  require_same_dim(x_student, x_teacher, "mse_align");
  LossOutput out;
  Vec g(x_student.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = x_student[i] - x_teacher[i];
    out.value += d * d;
    g[i] = 2.0 * d;
  }
  out.grads.push_back(std::move(g));
  return out;
}

/// lambda1 * asym InfoNCE + lambda2 * MSE. grads: [x_student].
inline LossOutput stage1_loss(std::span<const double> x_student,
                              std::span<const double> x_teacher,
                              const std::vector<Vec>& batch_teacher_negs,
                              const TrainConfig& cfg) {
  cfg.validate();
  const auto con = asym_infonce_selfcontrast(x_student, x_teacher, batch_teacher_negs, cfg.tau);
  const auto mse = mse_align(x_student, x_teacher);
  LossOutput out;
  out.value = cfg.lambda1 * con.value + cfg.lambda2 * mse.value;
  out.grad_tau = cfg.lambda1 * con.grad_tau;
  Vec g(x_student.size(), 0.0);
  axpy(cfg.lambda1, con.grads[0], g);
  axpy(cfg.lambda2, mse.grads[0], g);
  out.grads.push_back(std::move(g));
  return out;
}

/// InfoNCE between a student query embedding and teacher document embeddings,
/// negatives being in-batch plus mined hard negatives. Both sides trainable.
/// grads: [q, d_pos, d_neg_1, ...].
inline LossOutput stage2_loss(std::span<const double> q_student,
                              std::span<const double> dpos_teacher,
                              const std::vector<Vec>& dneg_teachers, double tau) {
  return infonce(q_student, dpos_teacher, dneg_teachers, tau);
}

/// Mean over m in mrl_dims of InfoNCE on inputs truncated to m dimensions and
/// renormalized. The truncation is part of the differentiated path.
/// grads: [q, pos, neg_1, ...] at full dimension.
inline LossOutput mrl_loss(std::span<const double> q_full, std::span<const double> pos_full,
                           const std::vector<Vec>& negs_full,
                           const std::vector<std::size_t>& mrl_dims, double tau) {
  detail::check_tau(tau);
  if (mrl_dims.empty()) throw ConfigError("mrl_loss: empty dimension set");
  require_same_dim(q_full, pos_full, "mrl_loss");
  for (const auto& n : negs_full) require_same_dim(q_full, n, "mrl_loss");
  const std::size_t dim = q_full.size();
  if (*std::max_element(mrl_dims.begin(), mrl_dims.end()) != dim) {
    throw DimensionError("mrl_loss: max(mrl_dims) must equal the embedding dimension");
  }

  LossOutput out;
  out.grads.assign(negs_full.size() + 2, Vec(dim, 0.0));
  const double w = 1.0 / static_cast<double>(mrl_dims.size());
  for (std::size_t m : mrl_dims) {
    if (m > dim) throw DimensionError("mrl_loss: dimension exceeds embedding size");
    const Vec q = mrl_truncate(q_full, m);
    const Vec p = mrl_truncate(pos_full, m);
    std::vector<Vec> negs;
    negs.reserve(negs_full.size());
    for (const auto& n : negs_full) negs.push_back(mrl_truncate(n, m));
    const auto part = infonce(q, p, negs, tau);
    out.value += w * part.value;
    out.grad_tau += w * part.grad_tau;
    axpy(w, mrl_truncate_backward(q_full, m, part.grads[0]), out.grads[0]);
    axpy(w, mrl_truncate_backward(pos_full, m, part.grads[1]), out.grads[1]);
    for (std::size_t i = 0; i < negs_full.size(); ++i) {
      axpy(w, mrl_truncate_backward(negs_full[i], m, part.grads[i + 2]), out.grads[i + 2]);
    }
  }
  return out;
}

/// KL(softmax(teacher/tau) || softmax(student/tau)). grads: [student_scores].
inline LossOutput kl_divergence(std::span<const double> student_scores,
                                std::span<const double> teacher_scores, double tau) {
  detail::check_tau(tau);
  if (student_scores.size() != teacher_scores.size()) {
    throw DimensionError("kl_divergence: score lists differ in length");
  }
  if (student_scores.size() < 2) throw DimensionError("kl_divergence: need >= 2 scores");
  const std::size_t n = student_scores.size();
  auto log_softmax = [&](std::span<const double> s) {
    Vec out(n);
    double mx = s[0] / tau;
    for (double v : s) mx = std::max(mx, v / tau);
    double z = 0.0;
    for (double v : s) z += std::exp(v / tau - mx);
    const double lz = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) out[i] = s[i] / tau - lz;
    return out;
  };
  const Vec lp = log_softmax(teacher_scores);
  const Vec lq = log_softmax(student_scores);
  LossOutput out;
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(lp[i]);
    if (p > 0.0) out.value += p * (lp[i] - lq[i]);
    g[i] = (std::exp(lq[i]) - p) / tau;
  }
  // Rounding can push an exact zero slightly negative.
  out.value = std::max(out.value, 0.0);
  out.grads.push_back(std::move(g));
  return out;
}

/// Distillation baseline objective: KL against teacher scores over the
/// candidate list [pos, negs...] plus InfoNCE on the same list, both weighted
/// 1. Student scores are the dot products q.d. grads: [q, pos, neg_1, ...].
inline LossOutput kd_loss(std::span<const double> teacher_scores, std::span<const double> q,
                          std::span<const double> dpos, const std::vector<Vec>& dnegs,
                          double tau, double kl_weight = 1.0, double nce_weight = 1.0) {
  if (teacher_scores.size() != dnegs.size() + 1) {
    throw DimensionError("kd_loss: teacher scores must cover [pos, negs...]");
  }
  require_same_dim(q, dpos, "kd_loss");
  Vec student_scores(dnegs.size() + 1);
  student_scores[0] = dot(q, dpos);
  for (std::size_t i = 0; i < dnegs.size(); ++i) student_scores[i + 1] = dot(q, dnegs[i]);

  const auto kl = kl_divergence(student_scores, teacher_scores, tau);
  auto out = infonce(q, dpos, dnegs, tau);
  out.value = kl_weight * kl.value + nce_weight * out.value;
  for (auto& g : out.grads) {
    for (double& v : g) v *= nce_weight;
  }
  // Chain the KL score gradient through s_j = q . d_j.
  const Vec& gs = kl.grads[0];
  for (std::size_t j = 0; j < gs.size(); ++j) {
    std::span<const double> d = j == 0 ? dpos : std::span<const double>(dnegs[j - 1]);
    axpy(kl_weight * gs[j], d, out.grads[0]);
    axpy(kl_weight * gs[j], q, out.grads[j + 1]);
  }
  out.grad_tau = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_component = 0;
  std::size_t components_checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps components
/// whose true gradient is ~0 from dividing roundoff by roundoff.
inline double gradcheck_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Floor for one gradient: 1e-6 times its largest component (at least 1).
/// Central differences carry ~eps*|f|/step of roundoff, so components many
/// orders below the gradient's own scale cannot be resolved more finely.
inline double gradcheck_floor(std::span<const Vec> grads) {
  double m = 1.0;
  for (const auto& g : grads) {
    for (double x : g) m = std::max(m, std::abs(x));
  }
  return 1e-6 * m;
}

using LossFn = std::function<LossOutput(const std::vector<Vec>&)>;

/// Central differences on every component of the inputs that loss_fn reports
/// gradients for (the first out.grads.size() inputs). Remaining inputs are
/// treated as constants.
inline GradcheckReport gradcheck(const LossFn& loss_fn, std::vector<Vec> inputs,
                                 double step = 1e-5) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw ConfigError("gradcheck: step must be in [1e-7, 1e-3]");
  const auto base = loss_fn(inputs);
  if (!std::isfinite(base.value)) throw NumericError("gradcheck: non-finite loss at base point");
  const double floor = gradcheck_floor(base.grads);
  GradcheckReport rep;
  for (std::size_t i = 0; i < base.grads.size() && i < inputs.size(); ++i) {
    if (base.grads[i].size() != inputs[i].size()) {
      throw DimensionError("gradcheck: gradient/input dimension mismatch");
    }
    for (std::size_t c = 0; c < inputs[i].size(); ++c) {
      const double orig = inputs[i][c];
      inputs[i][c] = orig + step;
      const double fp = loss_fn(inputs).value;
      inputs[i][c] = orig - step;
      const double fm = loss_fn(inputs).value;
      inputs[i][c] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("gradcheck: non-finite loss at perturbed point");
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = base.grads[i][c];
      const double rel = gradcheck_rel_error(a, numeric, floor);
      rep.max_abs_error = std::max(rep.max_abs_error, std::abs(a - numeric));
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_input = i;
        rep.worst_component = c;
      }
      ++rep.components_checked;
    }
  }
  return rep;
}

/// Central-difference check of encoder backward against the scalar
/// upstream . encode(params, input), over every parameter component.
inline GradcheckReport gradcheck_encoder(const EncoderParams& params, const TokenSeq& input,
                                         std::span<const double> upstream, double step = 1e-5) {
  const auto analytic = backward(params, input, upstream);
  const double floor = gradcheck_floor(std::span<const Vec>(&analytic.values, 1));
  EncoderParams p = params;
  GradcheckReport rep;
  for (std::size_t c = 0; c < p.values.size(); ++c) {
    const double orig = p.values[c];
    p.values[c] = orig + step;
    const double fp = dot(upstream, encode(p, input));
    p.values[c] = orig - step;
    const double fm = dot(upstream, encode(p, input));
    p.values[c] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel = gradcheck_rel_error(analytic.values[c], numeric, floor);
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(analytic.values[c] - numeric));
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_component = c;
    }
    ++rep.components_checked;
  }
  return rep;
}

}  // namespace asym
