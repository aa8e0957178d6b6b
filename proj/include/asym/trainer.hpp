#pragma once

// Training procedures: independent contrastive initialization of each
// encoder, Stage-I alignment of the student to a frozen teacher, Stage-II
// joint fine-tuning, and the score-distillation baseline.

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/encoder.hpp"
#include "asym/losses.hpp"
#include "asym/optimizer.hpp"

namespace asym {

struct TextPair {
  TokenSeq a;
  TokenSeq b;
};

/// One supervised instance with tokenized texts. Ids are used to keep a
/// query's own positives out of its in-batch negatives.
struct TrainingTriplet {
  std::string query_id;
  TokenSeq query;
  std::vector<std::string> positive_ids;
  std::vector<TokenSeq> positives;
  std::vector<std::string> negative_ids;
  std::vector<TokenSeq> negatives;
};

struct TrainReport {
  std::string stage;
  Vec losses;
  Vec epoch_mean_losses;
  Vec heldout_cosine;
  double seconds = 0.0;  // wall time; not serialized so reports stay reproducible
  double final_tau = 0.0;

  Json to_json() const {
    return Json{{"stage", stage},
                {"losses", losses},
                {"epoch_mean_losses", epoch_mean_losses},
                {"heldout_cosine", heldout_cosine},
                {"final_tau", final_tau}};
  }
};

namespace detail {

/// Shuffled index batches; a trailing batch of one is folded into the previous.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                          Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  std::size_t b = (n + batch_size - 1) / batch_size;
  if (b > 1 && n % batch_size == 1) --b;
  return b;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void check_finite_loss(double v, const std::string& stage) {
  if (!std::isfinite(v)) throw NumericError(stage + ": non-finite loss");
}

}  // namespace detail

/// Contrastive initialization on positive text pairs with in-batch negatives.
/// A student trains with InfoNCE, a teacher with the nested-dimension MRL
/// objective over cfg.mrl_dims.
inline TrainReport pretrain_independent(EncoderParams& params, std::span<const TextPair> pairs,
                                        const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  if (pairs.size() < 2) throw ConfigError("pretrain: need at least 2 pairs");
  const bool teacher = params.role == Role::teacher;
  if (teacher && cfg.mrl_dims.back() != params.out_dim()) {
    throw DimensionError("pretrain: teacher out_dim must equal max(mrl_dims)");
  }

  const std::string stage = "pretrain:" + to_string(params.role);
  detail::Stopwatch clock;
  TrainReport rep;
  rep.stage = stage;

  Rng rng(derive_seed(cfg.seed, stage));
  const std::size_t steps = cfg.epochs * detail::batches_per_epoch(pairs.size(), cfg.batch_size);
  OptimizerState opt(params.values.size(), steps);
  double log_tau = std::log(cfg.tau);
  OptimizerState tau_opt(1, steps);
  GradientBundle grad(params.layout);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Vec epoch_losses;
    for (const auto& batch : detail::make_batches(pairs.size(), cfg.batch_size, rng)) {
      const std::size_t bsz = batch.size();
      bool degenerate = true;
      for (auto i : batch) {
        if (!(pairs[i].a == pairs[batch[0]].a) || !(pairs[i].b == pairs[batch[0]].a)) {
          degenerate = false;
          break;
        }
      }
      if (degenerate) throw DegenerateInputError("pretrain: batch of identical texts");

      const double tau = std::exp(log_tau);
      std::vector<ForwardTrace> ta, tb;
      std::vector<Vec> eb;
      for (auto i : batch) {
        ta.push_back(forward(params, pairs[i].a));
        tb.push_back(forward(params, pairs[i].b));
        eb.push_back(tb.back().output);
      }
      std::vector<Vec> ga(bsz, Vec(params.out_dim(), 0.0));
      std::vector<Vec> gb(bsz, Vec(params.out_dim(), 0.0));
      double loss = 0.0, gtau = 0.0;
      const double inv = 1.0 / static_cast<double>(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        std::vector<Vec> negs;
        std::vector<std::size_t> neg_slot;
        for (std::size_t j = 0; j < bsz; ++j) {
          if (j == i) continue;
          negs.push_back(eb[j]);
          neg_slot.push_back(j);
        }
        const auto out = teacher ? mrl_loss(ta[i].output, eb[i], negs, cfg.mrl_dims, tau)
                                 : infonce(ta[i].output, eb[i], negs, tau);
        loss += inv * out.value;
        gtau += inv * out.grad_tau;
        axpy(inv, out.grads[0], ga[i]);
        axpy(inv, out.grads[1], gb[i]);
        for (std::size_t k = 0; k < neg_slot.size(); ++k) axpy(inv, out.grads[k + 2], gb[neg_slot[k]]);
      }
      detail::check_finite_loss(loss, stage);

      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      for (std::size_t i = 0; i < bsz; ++i) {
        backward_into(params, pairs[batch[i]].a, ta[i], ga[i], grad);
        backward_into(params, pairs[batch[i]].b, tb[i], gb[i], grad);
      }
      optimizer_step(params.values, grad.values, opt, cfg);
      if (cfg.learnable_tau) {
        double dlog = gtau * tau;
        std::span<double> p(&log_tau, 1);
        optimizer_step(p, std::span<const double>(&dlog, 1), tau_opt, cfg, false);
      }
      rep.losses.push_back(loss);
      epoch_losses.push_back(loss);
    }
    rep.epoch_mean_losses.push_back(detail::mean(epoch_losses));
  }
  params.stage_tag = "pretrain";
  rep.final_tau = std::exp(log_tau);
  rep.seconds = clock.seconds();
  return rep;
}

/// Mean cosine between student(a) and the teacher's truncated embedding of b.
inline double mean_alignment_cosine(const EncoderParams& student, const EncoderParams& teacher,
                                    std::span<const TextPair> pairs) {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : pairs) {
    s += dot(encode(student, p.a), mrl_truncate(encode(teacher, p.b), student.out_dim()));
  }
  return s / static_cast<double>(pairs.size());
}

/// Stage-I alignment on (student input, teacher input) pairs with the teacher
/// frozen. Self-contrastive alignment is the case a == b. 10% of pairs
/// (fixed by seed) are held out for the alignment cosine reported before
/// training and after every epoch.
inline TrainReport stage1_align_pairs(EncoderParams& student, const EncoderParams& teacher,
                                      std::span<const TextPair> pairs, const TrainConfig& cfg) {
  cfg.validate();
  student.validate();
  teacher.validate();
  if (teacher.stage_tag == "init") {
    throw ConfigError("align: teacher checkpoint has not been pretrained");
  }
  if (student.out_dim() != cfg.mrl_dims.front() || teacher.out_dim() != cfg.mrl_dims.back()) {
    throw DimensionError("align: student out_dim must equal min(mrl_dims) and teacher out_dim max(mrl_dims)");
  }
  if (student.out_dim() > teacher.out_dim()) {
    throw DimensionError("align: student wider than teacher");
  }
  if (pairs.size() < 3) throw ConfigError("align: need at least 3 texts");

  detail::Stopwatch clock;
  TrainReport rep;
  rep.stage = "align";
  const std::size_t dim = student.out_dim();

  Rng split_rng(derive_seed(cfg.seed, "align:split"));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  split_rng.shuffle(order);
  const std::size_t n_held = std::max<std::size_t>(1, pairs.size() / 10);
  std::vector<TextPair> held, train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_held ? held : train).push_back(pairs[order[i]]);
  }

  // The teacher is frozen, so its truncated embeddings are fixed for the run.
  std::vector<Vec> teacher_emb;
  teacher_emb.reserve(train.size());
  for (const auto& p : train) teacher_emb.push_back(mrl_truncate(encode(teacher, p.b), dim));

  rep.heldout_cosine.push_back(mean_alignment_cosine(student, teacher, held));

  Rng rng(derive_seed(cfg.seed, "align:batches"));
  const std::size_t steps = cfg.epochs * detail::batches_per_epoch(train.size(), cfg.batch_size);
  OptimizerState opt(student.values.size(), steps);
  GradientBundle grad(student.layout);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Vec epoch_losses;
    for (const auto& batch : detail::make_batches(train.size(), cfg.batch_size, rng)) {
      const double inv = 1.0 / static_cast<double>(batch.size());
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto trace = forward(student, train[batch[i]].a);
        std::vector<Vec> negs;
        for (std::size_t j = 0; j < batch.size(); ++j) {
          if (j != i) negs.push_back(teacher_emb[batch[j]]);
        }
        auto out = stage1_loss(trace.output, teacher_emb[batch[i]], negs, cfg);
        loss += inv * out.value;
        for (double& g : out.grads[0]) g *= inv;
        backward_into(student, train[batch[i]].a, trace, out.grads[0], grad);
      }
      detail::check_finite_loss(loss, "align");
      optimizer_step(student.values, grad.values, opt, cfg);
      rep.losses.push_back(loss);
      epoch_losses.push_back(loss);
    }
    rep.epoch_mean_losses.push_back(detail::mean(epoch_losses));
    rep.heldout_cosine.push_back(mean_alignment_cosine(student, teacher, held));
  }
  student.stage_tag = "align";
  rep.final_tau = cfg.tau;
  rep.seconds = clock.seconds();
  return rep;
}

/// Self-contrastive Stage-I alignment over unlabeled texts.
inline TrainReport stage1_align(EncoderParams& student, const EncoderParams& teacher,
                                std::span<const TokenSeq> texts, const TrainConfig& cfg) {
  std::vector<TextPair> pairs;
  pairs.reserve(texts.size());
  for (const auto& t : texts) pairs.push_back({t, t});
  return stage1_align_pairs(student, teacher, pairs, cfg);
}

namespace detail {

inline void validate_triplets(std::span<const TrainingTriplet> triplets, const char* stage) {
  if (triplets.empty()) throw ConfigError(std::string(stage) + ": empty triplet set");
  for (const auto& t : triplets) {
    if (t.positives.empty()) {
      throw ConfigError(std::string(stage) + ": triplet for query '" + t.query_id +
                        "' has no positives");
    }
    if (t.negatives.empty()) {
      throw ConfigError(std::string(stage) + ": triplet for query '" + t.query_id +
                        "' has no hard negatives");
    }
    if (t.positive_ids.size() != t.positives.size() || t.negative_ids.size() != t.negatives.size()) {
      throw ConfigError(std::string(stage) + ": triplet ids and texts differ in length");
    }
  }
}

struct BatchDoc {
  std::string id;
  const TokenSeq* tokens;
};

/// Documents of a batch (each query's sampled positive, then its hard
/// negatives) and, per query, candidate slots: own positive first, then own
/// hard negatives, then other queries' documents. Duplicate ids and the
/// query's own labeled positives are kept out of its negatives.
struct BatchLayout {
  std::vector<BatchDoc> docs;
  std::vector<std::vector<std::size_t>> candidates;
};

inline BatchLayout layout_batch(std::span<const TrainingTriplet> triplets,
                                std::span<const std::size_t> batch, Rng& rng) {
  BatchLayout lay;
  std::vector<std::size_t> pos_slot(batch.size());
  std::vector<std::vector<std::size_t>> neg_slots(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = triplets[batch[i]];
    const std::size_t p = rng.below(t.positives.size());
    pos_slot[i] = lay.docs.size();
    lay.docs.push_back({t.positive_ids[p], &t.positives[p]});
    for (std::size_t k = 0; k < t.negatives.size(); ++k) {
      neg_slots[i].push_back(lay.docs.size());
      lay.docs.push_back({t.negative_ids[k], &t.negatives[k]});
    }
  }
  lay.candidates.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = triplets[batch[i]];
    std::set<std::string> seen(t.positive_ids.begin(), t.positive_ids.end());
    auto& c = lay.candidates[i];
    c.push_back(pos_slot[i]);
    for (auto s : neg_slots[i]) {
      if (seen.insert(lay.docs[s].id).second) c.push_back(s);
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i) continue;
      if (seen.insert(lay.docs[pos_slot[j]].id).second) c.push_back(pos_slot[j]);
      for (auto s : neg_slots[j]) {
        if (seen.insert(lay.docs[s].id).second) c.push_back(s);
      }
    }
  }
  return lay;
}

}  // namespace detail

/// Stage-II joint fine-tuning: both encoders unfrozen, one shared learning
/// rate, InfoNCE over in-batch plus hard negatives. Teacher document
/// embeddings are truncated to the student dimension inside the
/// differentiated path.
inline TrainReport stage2_joint(EncoderParams& student, EncoderParams& teacher,
                                std::span<const TrainingTriplet> triplets, const TrainConfig& cfg) {
  cfg.validate();
  student.validate();
  teacher.validate();
  detail::validate_triplets(triplets, "finetune");
  if (student.out_dim() > teacher.out_dim()) throw DimensionError("finetune: student wider than teacher");

  detail::Stopwatch clock;
  TrainReport rep;
  rep.stage = "finetune";
  const std::size_t dim = student.out_dim();
  Rng rng(derive_seed(cfg.seed, "finetune:batches"));
  const std::size_t steps = cfg.epochs * detail::batches_per_epoch(triplets.size(), cfg.batch_size);
  OptimizerState sopt(student.values.size(), steps);
  OptimizerState topt(teacher.values.size(), steps);
  GradientBundle sgrad(student.layout), tgrad(teacher.layout);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Vec epoch_losses;
    for (const auto& batch : detail::make_batches(triplets.size(), cfg.batch_size, rng)) {
      const auto lay = detail::layout_batch(triplets, batch, rng);
      std::vector<ForwardTrace> dtrace;
      std::vector<Vec> demb;
      for (const auto& d : lay.docs) {
        dtrace.push_back(forward(teacher, *d.tokens));
        demb.push_back(mrl_truncate(dtrace.back().output, dim));
      }
      std::vector<Vec> dgrad(lay.docs.size(), Vec(dim, 0.0));
      std::fill(sgrad.values.begin(), sgrad.values.end(), 0.0);
      std::fill(tgrad.values.begin(), tgrad.values.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batch.size());
      double loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = triplets[batch[i]];
        const auto qtrace = forward(student, t.query);
        const auto& cand = lay.candidates[i];
        std::vector<Vec> negs;
        for (std::size_t k = 1; k < cand.size(); ++k) negs.push_back(demb[cand[k]]);
        auto out = stage2_loss(qtrace.output, demb[cand[0]], negs, cfg.tau);
        loss += inv * out.value;
        for (double& g : out.grads[0]) g *= inv;
        backward_into(student, t.query, qtrace, out.grads[0], sgrad);
        for (std::size_t k = 0; k < cand.size(); ++k) axpy(inv, out.grads[k + 1], dgrad[cand[k]]);
      }
      detail::check_finite_loss(loss, "finetune");
      for (std::size_t s = 0; s < lay.docs.size(); ++s) {
        const Vec up = mrl_truncate_backward(dtrace[s].output, dim, dgrad[s]);
        backward_into(teacher, *lay.docs[s].tokens, dtrace[s], up, tgrad);
      }
      optimizer_step(student.values, sgrad.values, sopt, cfg);
      optimizer_step(teacher.values, tgrad.values, topt, cfg);
      rep.losses.push_back(loss);
      epoch_losses.push_back(loss);
    }
    rep.epoch_mean_losses.push_back(detail::mean(epoch_losses));
  }
  student.stage_tag = "finetune";
  teacher.stage_tag = "finetune";
  rep.final_tau = cfg.tau;
  rep.seconds = clock.seconds();
  return rep;
}

/// Distillation baseline: the student encodes both queries and documents and
/// learns from frozen-teacher similarity scores (full teacher dimension) via
/// KL plus InfoNCE over the same candidate list as Stage II.
inline TrainReport distill_baseline(EncoderParams& student, const EncoderParams& teacher,
                                    std::span<const TrainingTriplet> triplets,
                                    const TrainConfig& cfg) {
  cfg.validate();
  student.validate();
  teacher.validate();
  if (teacher.stage_tag == "init") throw ConfigError("distill: teacher checkpoint has not been pretrained");
  detail::validate_triplets(triplets, "distill");

  detail::Stopwatch clock;
  TrainReport rep;
  rep.stage = "distill";
  Rng rng(derive_seed(cfg.seed, "distill:batches"));
  const std::size_t steps = cfg.epochs * detail::batches_per_epoch(triplets.size(), cfg.batch_size);
  OptimizerState opt(student.values.size(), steps);
  GradientBundle grad(student.layout);

  std::map<std::string, Vec> teacher_docs;
  std::vector<Vec> teacher_queries;
  for (const auto& t : triplets) {
    teacher_queries.push_back(encode(teacher, t.query));
    for (std::size_t k = 0; k < t.positives.size(); ++k) {
      if (!teacher_docs.count(t.positive_ids[k])) teacher_docs[t.positive_ids[k]] = encode(teacher, t.positives[k]);
    }
    for (std::size_t k = 0; k < t.negatives.size(); ++k) {
      if (!teacher_docs.count(t.negative_ids[k])) teacher_docs[t.negative_ids[k]] = encode(teacher, t.negatives[k]);
    }
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Vec epoch_losses;
    for (const auto& batch : detail::make_batches(triplets.size(), cfg.batch_size, rng)) {
      const auto lay = detail::layout_batch(triplets, batch, rng);
      std::vector<ForwardTrace> dtrace;
      for (const auto& d : lay.docs) dtrace.push_back(forward(student, *d.tokens));
      std::vector<Vec> dgrad(lay.docs.size(), Vec(student.out_dim(), 0.0));
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batch.size());
      double loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = triplets[batch[i]];
        const auto qtrace = forward(student, t.query);
        const auto& cand = lay.candidates[i];
        Vec tscores;
        std::vector<Vec> negs;
        for (std::size_t k = 0; k < cand.size(); ++k) {
          tscores.push_back(dot(teacher_queries[batch[i]], teacher_docs.at(lay.docs[cand[k]].id)));
          if (k > 0) negs.push_back(dtrace[cand[k]].output);
        }
        auto out = kd_loss(tscores, qtrace.output, dtrace[cand[0]].output, negs, cfg.tau);
        loss += inv * out.value;
        for (double& g : out.grads[0]) g *= inv;
        backward_into(student, t.query, qtrace, out.grads[0], grad);
        for (std::size_t k = 0; k < cand.size(); ++k) axpy(inv, out.grads[k + 1], dgrad[cand[k]]);
      }
      detail::check_finite_loss(loss, "distill");
      for (std::size_t s = 0; s < lay.docs.size(); ++s) {
        backward_into(student, *lay.docs[s].tokens, dtrace[s], dgrad[s], grad);
      }
      optimizer_step(student.values, grad.values, opt, cfg);
      rep.losses.push_back(loss);
      epoch_losses.push_back(loss);
    }
    rep.epoch_mean_losses.push_back(detail::mean(epoch_losses));
  }
  student.stage_tag = "distill";
  rep.final_tau = cfg.tau;
  rep.seconds = clock.seconds();
  return rep;
}

}  // namespace asym
