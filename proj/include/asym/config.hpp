#pragma once

// RunConfig: one JSON schema shared by every CLI verb. Validation reports
// every violation with its JSON path instead of stopping at the first.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/curation.hpp"
#include "asym/losses.hpp"

namespace asym {

/// Per-stage overrides of the shared schedule; unset fields fall back to the
/// top-level values.
struct StageOverride {
  std::optional<std::size_t> epochs;
  std::optional<double> lr;

  bool operator==(const StageOverride&) const = default;
};

struct JudgeSettings {
  std::string kind = "mock";  // "mock" | "http"
  double noise = 0.1;
  std::uint64_t seed = 7;
  std::size_t count = 3;
  std::vector<std::string> urls;
  std::size_t retries = 3;
  std::size_t backoff_ms = 200;
  std::size_t timeout_ms = 10000;

  bool operator==(const JudgeSettings&) const = default;
};

struct RunConfig {
  TrainConfig train;
  StageOverride pretrain;
  StageOverride align{6, std::nullopt};
  StageOverride finetune{5, std::nullopt};
  StageOverride distill{5, std::nullopt};

  std::size_t threads = 1;

  // Encoders.
  std::size_t vocab_size = 4096;
  std::vector<std::size_t> student_dims = {32, 32, 32};
  std::vector<std::size_t> teacher_dims = {128, 128, 128};

  // Synthetic data.
  SyntheticSpec data;

  // Curation.
  std::size_t k = 5;
  std::size_t n = 1;
  double t_query = 0.85;
  double t_doc = 0.78;
  std::size_t seed_size = 50;
  bool strict = true;
  std::size_t pool_size = 50;
  std::vector<std::string> positive_grades = {"S", "A"};
  std::size_t triplet_positives = 1;
  std::size_t triplet_negatives = 7;
  JudgeSettings judge;

  std::size_t eval_k = 10;

  std::string data_dir = "data";
  std::string work_dir = "work";

  /// Schedule for one stage with its overrides applied.
  TrainConfig stage(const StageOverride& o) const {
    TrainConfig c = train;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.lr) c.lr = *o.lr;
    return c;
  }

  CurationParams curation(bool queries) const {
    return CurationParams{k, queries ? t_query : t_doc, n, seed_size, strict};
  }

  ConsensusRule consensus_rule() const {
    ConsensusRule r;
    r.positive_grades.clear();
    for (const auto& g : positive_grades) r.positive_grades.insert(grade_from_string(g));
    return r;
  }

  Json to_json() const;
};

inline bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_json() == b.to_json(); }

namespace detail {

inline Json stage_json(const StageOverride& s) {
  Json j = Json::object();
  j["epochs"] = s.epochs ? Json(*s.epochs) : Json(nullptr);
  j["lr"] = s.lr ? Json(*s.lr) : Json(nullptr);
  return j;
}

}  // namespace detail

inline Json RunConfig::to_json() const {
  const auto& t = train;
  return Json{
      {"seed", t.seed},
      {"threads", threads},
      {"tau", t.tau},
      {"lambda1", t.lambda1},
      {"lambda2", t.lambda2},
      {"mrl_dims", t.mrl_dims},
      {"lr", t.lr},
      {"warmup_ratio", t.warmup_ratio},
      {"batch_size", t.batch_size},
      {"epochs", t.epochs},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"eps", t.eps},
      {"weight_decay", t.weight_decay},
      {"learnable_tau", t.learnable_tau},
      {"stages",
       {{"pretrain", detail::stage_json(pretrain)},
        {"align", detail::stage_json(align)},
        {"finetune", detail::stage_json(finetune)},
        {"distill", detail::stage_json(distill)}}},
      {"encoder", {{"vocab_size", vocab_size}, {"student_dims", student_dims}, {"teacher_dims", teacher_dims}}},
      {"data",
       {{"clusters", data.clusters},
        {"clusters_per_group", data.clusters_per_group},
        {"docs_per_cluster", data.docs_per_cluster},
        {"train_queries_per_cluster", data.train_queries_per_cluster},
        {"test_queries_per_cluster", data.test_queries_per_cluster},
        {"unlabeled_per_cluster", data.unlabeled_per_cluster},
        {"terms_per_cluster", data.terms_per_cluster},
        {"terms_per_group", data.terms_per_group},
        {"background_terms", data.background_terms},
        {"dup_rate", data.dup_rate},
        {"synonym_rate", data.synonym_rate}}},
      {"curation",
       {{"k", k},
        {"n", n},
        {"t_query", t_query},
        {"t_doc", t_doc},
        {"seed_size", seed_size},
        {"strict", strict},
        {"pool_size", pool_size},
        {"positive_grades", positive_grades},
        {"triplet_positives", triplet_positives},
        {"triplet_negatives", triplet_negatives}}},
      {"judge",
       {{"kind", judge.kind},
        {"noise", judge.noise},
        {"seed", judge.seed},
        {"count", judge.count},
        {"urls", judge.urls},
        {"retries", judge.retries},
        {"backoff_ms", judge.backoff_ms},
        {"timeout_ms", judge.timeout_ms}}},
      {"eval", {{"k", eval_k}}},
      {"paths", {{"data_dir", data_dir}, {"work_dir", work_dir}}},
  };
}

struct ConfigResult {
  RunConfig config;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};

namespace detail {

/// Reads known keys of one JSON object into typed fields, collecting errors.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) {
      errors_.push_back(path_ + ": expected an object");
      valid_ = false;
    }
  }

  ~ObjectReader() {
    if (!valid_) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!known_.count(key)) errors_.push_back(path_ + "." + key + ": unknown key");
    }
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  const Json* get(const std::string& key) {
    known_.insert(key);
    if (!valid_ || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  void number(const std::string& key, double& dst, const std::function<bool(double)>& ok = {},
              const char* what = nullptr) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_number()) return fail(key, "expected a number");
    const double x = v->get<double>();
    if (ok && !ok(x)) return fail(key, what);
    dst = x;
  }

  void count(const std::string& key, std::size_t& dst, const std::function<bool(std::size_t)>& ok = {},
             const char* what = nullptr) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_number_integer() || v->get<long long>() < 0) return fail(key, "expected a non-negative integer");
    const auto x = v->get<std::size_t>();
    if (ok && !ok(x)) return fail(key, what);
    dst = x;
  }

  void seed(const std::string& key, std::uint64_t& dst) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_number_integer() || v->get<long long>() < 0) return fail(key, "expected a non-negative integer");
    dst = v->get<std::uint64_t>();
  }

  void boolean(const std::string& key, bool& dst) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_boolean()) return fail(key, "expected a boolean");
    dst = v->get<bool>();
  }

  void string(const std::string& key, std::string& dst, const std::function<bool(const std::string&)>& ok = {},
              const char* what = nullptr) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_string()) return fail(key, "expected a string");
    auto s = v->get<std::string>();
    if (ok && !ok(s)) return fail(key, what);
    dst = std::move(s);
  }

  void dims(const std::string& key, std::vector<std::size_t>& dst, bool ascending, const char* what) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_array() || v->empty()) return fail(key, "expected a non-empty array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer() || e.get<long long>() <= 0) {
        return fail(key, "expected a non-empty array of positive integers");
      }
      out.push_back(e.get<std::size_t>());
    }
    if (ascending) {
      for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] <= out[i - 1]) return fail(key, what);
      }
    }
    dst = std::move(out);
  }

  void strings(const std::string& key, std::vector<std::string>& dst,
               const std::function<bool(const std::string&)>& ok = {}, const char* what = nullptr) {
    const Json* v = get(key);
    if (!v) return;
    if (!v->is_array()) return fail(key, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) return fail(key, "expected an array of strings");
      if (ok && !ok(e.get<std::string>())) return fail(key, what);
      out.push_back(e.get<std::string>());
    }
    dst = std::move(out);
  }

  void stage(const std::string& key, StageOverride& dst) {
    const Json* v = get(key);
    if (!v) return;
    ObjectReader r(*v, child(key), errors_);
    if (const Json* e = r.get("epochs"); e && !e->is_null()) {
      if (!e->is_number_integer() || e->get<long long>() < 0) r.fail("epochs", "expected a non-negative integer");
      else dst.epochs = e->get<std::size_t>();
    }
    if (const Json* l = r.get("lr"); l && !l->is_null()) {
      if (!l->is_number() || l->get<double>() < 0.0) r.fail("lr", "expected a non-negative number");
      else dst.lr = l->get<double>();
    }
  }

  void fail(const std::string& key, const char* what) {
    errors_.push_back(child(key) + ": " + (what ? what : "invalid value"));
  }

  void fail_path(const std::string& msg) { errors_.push_back(path_ + ": " + msg); }

  std::vector<std::string>& errors() { return errors_; }

 private:
  const Json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
  bool valid_ = true;
};

}  // namespace detail

/// Parses a config document over the defaults. Every violation is reported
/// with its JSON path; unknown keys are errors.
inline ConfigResult validate_config(const Json& doc) {
  ConfigResult res;
  auto& c = res.config;
  auto& t = c.train;
  auto& errors = res.errors;
  {
    detail::ObjectReader r(doc, "$", errors);
    auto pos = [](double x) { return x > 0.0; };
    auto nonneg = [](double x) { return x >= 0.0; };
    auto positive = [](std::size_t x) { return x > 0; };
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };

    r.seed("seed", t.seed);
    r.count("threads", c.threads, positive, "must be >= 1");
    r.number("tau", t.tau, pos, "must be > 0");
    r.number("lambda1", t.lambda1, nonneg, "must be >= 0");
    r.number("lambda2", t.lambda2, nonneg, "must be >= 0");
    r.dims("mrl_dims", t.mrl_dims, true, "must be strictly ascending");
    r.number("lr", t.lr, nonneg, "must be >= 0");
    r.number("warmup_ratio", t.warmup_ratio, unit, "must be in [0, 1]");
    r.count("batch_size", t.batch_size, positive, "must be >= 1");
    r.count("epochs", t.epochs);
    r.number("beta1", t.beta1, [](double x) { return x >= 0.0 && x < 1.0; }, "must be in [0, 1)");
    r.number("beta2", t.beta2, [](double x) { return x >= 0.0 && x < 1.0; }, "must be in [0, 1)");
    r.number("eps", t.eps, pos, "must be > 0");
    r.number("weight_decay", t.weight_decay, nonneg, "must be >= 0");
    r.boolean("learnable_tau", t.learnable_tau);

    if (const Json* s = r.get("stages")) {
      detail::ObjectReader sr(*s, "$.stages", errors);
      sr.stage("pretrain", c.pretrain);
      sr.stage("align", c.align);
      sr.stage("finetune", c.finetune);
      sr.stage("distill", c.distill);
    }
    if (const Json* e = r.get("encoder")) {
      detail::ObjectReader er(*e, "$.encoder", errors);
      er.count("vocab_size", c.vocab_size, [](std::size_t v) { return v >= 2; }, "must be >= 2");
      er.dims("student_dims", c.student_dims, false, "");
      er.dims("teacher_dims", c.teacher_dims, false, "");
    }
    if (const Json* d = r.get("data")) {
      detail::ObjectReader dr(*d, "$.data", errors);
      dr.count("clusters", c.data.clusters, [](std::size_t v) { return v >= 2; }, "must be >= 2");
      dr.count("clusters_per_group", c.data.clusters_per_group, positive, "must be >= 1");
      dr.count("docs_per_cluster", c.data.docs_per_cluster, positive, "must be >= 1");
      dr.count("train_queries_per_cluster", c.data.train_queries_per_cluster);
      dr.count("test_queries_per_cluster", c.data.test_queries_per_cluster);
      dr.count("unlabeled_per_cluster", c.data.unlabeled_per_cluster);
      dr.count("terms_per_cluster", c.data.terms_per_cluster, positive, "must be >= 1");
      dr.count("terms_per_group", c.data.terms_per_group, positive, "must be >= 1");
      dr.count("background_terms", c.data.background_terms, positive, "must be >= 1");
      dr.number("dup_rate", c.data.dup_rate, [](double x) { return x >= 0.0 && x < 1.0; }, "must be in [0, 1)");
      dr.number("synonym_rate", c.data.synonym_rate, unit, "must be in [0, 1]");
    }
    if (const Json* cu = r.get("curation")) {
      detail::ObjectReader cr(*cu, "$.curation", errors);
      cr.count("k", c.k, positive, "must be >= 1");
      cr.count("n", c.n);
      cr.number("t_query", c.t_query, [](double x) { return x > 0.0 && x <= 1.0; }, "must be in (0, 1]");
      cr.number("t_doc", c.t_doc, [](double x) { return x > 0.0 && x <= 1.0; }, "must be in (0, 1]");
      cr.count("seed_size", c.seed_size, positive, "must be >= 1");
      cr.boolean("strict", c.strict);
      cr.count("pool_size", c.pool_size, positive, "must be >= 1");
      cr.strings("positive_grades", c.positive_grades,
                 [](const std::string& g) { return g == "S" || g == "A" || g == "B" || g == "C" || g == "D"; },
                 "grades must be one of S, A, B, C, D");
      cr.count("triplet_positives", c.triplet_positives, positive, "must be >= 1");
      cr.count("triplet_negatives", c.triplet_negatives);
    }
    if (const Json* j = r.get("judge")) {
      detail::ObjectReader jr(*j, "$.judge", errors);
      jr.string("kind", c.judge.kind, [](const std::string& k) { return k == "mock" || k == "http"; },
                "must be \"mock\" or \"http\"");
      jr.number("noise", c.judge.noise, unit, "must be in [0, 1]");
      jr.seed("seed", c.judge.seed);
      jr.count("count", c.judge.count, [](std::size_t v) { return v >= 2; }, "must be >= 2");
      jr.strings("urls", c.judge.urls);
      jr.count("retries", c.judge.retries);
      jr.count("backoff_ms", c.judge.backoff_ms);
      jr.count("timeout_ms", c.judge.timeout_ms, positive, "must be >= 1");
    }
    if (const Json* e = r.get("eval")) {
      detail::ObjectReader er(*e, "$.eval", errors);
      er.count("k", c.eval_k, positive, "must be >= 1");
    }
    if (const Json* p = r.get("paths")) {
      detail::ObjectReader pr(*p, "$.paths", errors);
      pr.string("data_dir", c.data_dir);
      pr.string("work_dir", c.work_dir);
    }
  }
  if (!errors.empty() || !doc.is_object()) return res;

  // Cross-field constraints.
  if (c.student_dims.size() < 2) errors.push_back("$.encoder.student_dims: need at least one layer");
  if (c.teacher_dims.size() < 2) errors.push_back("$.encoder.teacher_dims: need at least one layer");
  if (errors.empty()) {
    if (t.mrl_dims.back() != c.teacher_dims.back()) {
      errors.push_back("$.mrl_dims: max must equal the teacher output dimension");
    }
    if (t.mrl_dims.front() != c.student_dims.back()) {
      errors.push_back("$.mrl_dims: min must equal the student output dimension");
    }
  }
  if (c.k < c.n) errors.push_back("$.curation.k: must be >= n");
  if (c.judge.kind == "http" && c.judge.urls.size() < 2) {
    errors.push_back("$.judge.urls: http judging needs at least 2 endpoint URLs");
  }
  c.data.seed = t.seed;
  return res;
}

/// Applies a dotted-path override ("curation.t_doc=0.8"). The value is parsed
/// as JSON when possible and taken as a string otherwise.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* cur = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot_pos = key.find('.', start);
    const std::string part = key.substr(start, dot_pos - start);
    if (part.empty()) throw ConfigError("--set: empty path segment in '" + key + "'");
    if (dot_pos == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    Json& next = (*cur)[part];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError("--set: '" + part + "' is not an object");
    cur = &next;
    start = dot_pos + 1;
  }
}

}  // namespace asym
