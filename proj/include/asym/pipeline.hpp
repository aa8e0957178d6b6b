#pragma once

// End-to-end pipeline pieces shared by the CLI verbs and the ablation runner:
// synthetic data files, curation, pretraining, the training variants and the
// multi-seed comparison table.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "asym/benchmark.hpp"
#include "asym/config.hpp"
#include "asym/curation.hpp"
#include "asym/http_judge.hpp"
#include "asym/trainer.hpp"

namespace asym {

// ---------------------------------------------------------------------------
// Data files

struct ExperimentData {
  std::vector<Document> corpus;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  std::vector<Document> unlabeled;
  std::vector<std::pair<std::string, std::string>> pairs;
  Qrels test_qrels;
  TripletSet rerank;
  std::vector<StsSample> sts;
  SynonymDict synonyms;

  EvalTasks tasks() const { return EvalTasks{test_queries, corpus, test_qrels, rerank, sts}; }
};

namespace files {

inline constexpr const char* corpus = "corpus.jsonl";
inline constexpr const char* train_queries = "queries.train.jsonl";
inline constexpr const char* test_queries = "queries.test.jsonl";
inline constexpr const char* unlabeled = "unlabeled.jsonl";
inline constexpr const char* pairs = "pairs.jsonl";
inline constexpr const char* test_qrels = "qrels.test.jsonl";
inline constexpr const char* rerank = "rerank.jsonl";
inline constexpr const char* sts = "sts.jsonl";
inline constexpr const char* synonyms = "synonyms.json";
inline constexpr const char* train_qrels = "qrels.train.jsonl";
inline constexpr const char* triplets = "triplets.jsonl";
inline constexpr const char* curation_report = "curation.json";

}  // namespace files

inline std::string path_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline ExperimentData generate_data(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.data;
  spec.seed = cfg.train.seed;
  ExperimentData d;
  d.synonyms = make_synonym_dict(spec);
  auto corpus = gen_synthetic_corpus(spec, d.synonyms);
  d.corpus = std::move(corpus.docs);
  d.train_queries = std::move(corpus.train_queries);
  d.test_queries = std::move(corpus.test_queries);
  d.unlabeled = std::move(corpus.unlabeled);
  d.pairs = std::move(corpus.pairs);
  for (const auto& q : d.test_queries) {
    for (const auto& did : corpus.qrels.relevant(q.id)) d.test_qrels.set(q.id, did, 1);
  }
  d.rerank = std::move(corpus.rerank);
  for (const auto& s : gen_sts(d.test_queries, d.synonyms, derive_seed(spec.seed, "sts")).triples) {
    d.sts.push_back({s.query_id, s.sentence, s.label});
  }
  return d;
}

inline void write_data(const ExperimentData& d, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_documents(path_in(dir, files::corpus), d.corpus);
  write_documents(path_in(dir, files::train_queries), d.train_queries);
  write_documents(path_in(dir, files::test_queries), d.test_queries);
  write_documents(path_in(dir, files::unlabeled), d.unlabeled);
  std::vector<Json> rows;
  for (const auto& [a, b] : d.pairs) rows.push_back({{"a", a}, {"b", b}});
  write_jsonl(path_in(dir, files::pairs), rows);
  write_qrels(path_in(dir, files::test_qrels), d.test_qrels);
  write_triplets(path_in(dir, files::rerank), d.rerank);
  write_sts(path_in(dir, files::sts), d.sts);
  write_file(path_in(dir, files::synonyms), Json(d.synonyms).dump(1) + "\n");
}

inline ExperimentData read_data(const std::string& dir) {
  auto need = [&](const char* name) {
    const auto p = path_in(dir, name);
    if (!std::filesystem::exists(p)) throw IoError("missing data file " + p + " (run gen-data first)");
    return p;
  };
  ExperimentData d;
  d.corpus = read_documents(need(files::corpus));
  d.train_queries = read_documents(need(files::train_queries));
  d.test_queries = read_documents(need(files::test_queries));
  d.unlabeled = read_documents(need(files::unlabeled));
  for (const auto& r : read_jsonl(need(files::pairs))) {
    try {
      d.pairs.emplace_back(r.at("a").get<std::string>(), r.at("b").get<std::string>());
    } catch (const Json::exception& e) {
      throw IoError(std::string(files::pairs) + ": " + e.what());
    }
  }
  d.test_qrels = read_qrels(need(files::test_qrels));
  d.rerank = read_triplets(need(files::rerank));
  d.sts = read_sts(need(files::sts));
  try {
    d.synonyms = Json::parse(read_file(need(files::synonyms))).get<SynonymDict>();
  } catch (const Json::exception& e) {
    throw IoError(std::string(files::synonyms) + ": " + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Curation

struct CurationOutput {
  std::vector<std::string> kept_queries;
  std::vector<std::string> kept_docs;
  std::map<std::string, std::vector<std::string>> candidates;
  LabelingResult labels;
  TripletBuildResult triplets;

  Json report() const {
    Json j = {{"kept_queries", kept_queries.size()},
              {"kept_docs", kept_docs.size()},
              {"mined_pairs", 0},
              {"labels", labels.to_json()},
              {"triplets", triplets.triplets.size()},
              {"dropped_no_positive", triplets.dropped_no_positive},
              {"flagged_no_negative", triplets.flagged_no_negative}};
    std::size_t mined = 0;
    for (const auto& [_, c] : candidates) mined += c.size();
    j["mined_pairs"] = mined;
    return j;
  }
};

/// Untrained encoder used to embed texts for dedup and candidate mining
/// before any model has been trained: a seeded random embedding table, mean
/// pooling and one bias-free linear map, so cosine tracks token overlap.
inline EncoderParams bootstrap_encoder(const RunConfig& cfg) {
  auto p = init_encoder(Role::teacher, cfg.vocab_size, {64, 64}, derive_seed(cfg.train.seed, "bootstrap"));
  for (double& b : p.bias(0)) b = 0.0;
  p.stage_tag = "bootstrap";
  return p;
}

inline std::vector<std::unique_ptr<JudgeClient>> make_judges(const RunConfig& cfg) {
  std::vector<std::unique_ptr<JudgeClient>> out;
  if (cfg.judge.kind == "http") {
    HttpJudgeOptions o;
    o.retries = cfg.judge.retries;
    o.backoff = std::chrono::milliseconds(cfg.judge.backoff_ms);
    o.timeout = std::chrono::milliseconds(cfg.judge.timeout_ms);
    for (const auto& u : cfg.judge.urls) out.push_back(std::make_unique<HttpJudge>(u, o));
  } else {
    for (std::size_t j = 0; j < cfg.judge.count; ++j) {
      out.push_back(std::make_unique<MockJudge>("mock" + std::to_string(j), cfg.judge.noise, cfg.judge.seed));
    }
  }
  return out;
}

/// Dedups train queries and corpus, mines candidates for the kept queries
/// from the kept documents, labels them by judge consensus and samples
/// triplets.
inline CurationOutput curate(const ExperimentData& data, const RunConfig& cfg,
                             std::span<JudgeClient* const> judges) {
  CurationOutput out;
  const auto enc = bootstrap_encoder(cfg);

  auto dedup = [&](const std::vector<Document>& items, bool queries) {
    auto p = cfg.curation(queries);
    p.seed_size = std::min(p.seed_size, items.size());
    std::vector<TokenSeq> toks;
    for (const auto& d : items) toks.push_back(tokenize(d.text, enc.vocab_size()));
    const auto emb = encode_batch(enc, toks, cfg.threads);
    return std::make_pair(diversify(emb, p), emb);
  };
  const auto [qkeep, qemb] = dedup(data.train_queries, true);
  const auto [dkeep, demb] = dedup(data.corpus, false);

  VectorIndex idx;
  idx.dim = enc.out_dim();
  idx.builder_tag = checkpoint_hash(enc) + ":" + std::to_string(idx.dim);
  std::map<std::string, Document> docs;
  for (auto i : dkeep) {
    out.kept_docs.push_back(data.corpus[i].id);
    idx.doc_ids.push_back(data.corpus[i].id);
    idx.matrix.insert(idx.matrix.end(), demb[i].begin(), demb[i].end());
    docs.emplace(data.corpus[i].id, data.corpus[i]);
  }
  std::vector<Query> queries;
  for (auto i : qkeep) {
    const auto& q = data.train_queries[i];
    out.kept_queries.push_back(q.id);
    queries.push_back(q);
    auto& c = out.candidates[q.id];
    for (const auto& h : mine_candidates(qemb[i], idx, cfg.pool_size)) c.push_back(h.doc_id);
  }
  out.labels = label_candidates(queries, out.candidates, docs, judges, cfg.consensus_rule());
  out.triplets = build_triplets(out.labels.qrels, out.candidates,
                                TripletOptions{cfg.triplet_positives, cfg.triplet_negatives,
                                               derive_seed(cfg.train.seed, "triplets")});
  return out;
}

// ---------------------------------------------------------------------------
// Training inputs

inline std::vector<TextPair> pretrain_pairs(const ExperimentData& d, std::size_t vocab) {
  std::vector<TextPair> out;
  out.reserve(d.pairs.size());
  for (const auto& [a, b] : d.pairs) out.push_back({tokenize(a, vocab), tokenize(b, vocab)});
  return out;
}

inline std::vector<TokenSeq> align_texts(const ExperimentData& d, std::size_t vocab) {
  std::vector<TokenSeq> out;
  out.reserve(d.unlabeled.size());
  for (const auto& u : d.unlabeled) out.push_back(tokenize(u.text, vocab));
  return out;
}

/// Resolves id triplets to token sequences. Triplets without hard negatives
/// are skipped (both Stage II and the distillation baseline need them).
inline std::vector<TrainingTriplet> resolve_triplets(const TripletSet& ts, std::span<const Query> queries,
                                                     std::span<const Document> corpus, std::size_t vocab) {
  std::map<std::string, const Query*> qs;
  for (const auto& q : queries) qs[q.id] = &q;
  std::map<std::string, const Document*> ds;
  for (const auto& d : corpus) ds[d.id] = &d;
  std::vector<TrainingTriplet> out;
  for (const auto& t : ts) {
    if (t.pos.empty() || t.neg.empty()) continue;
    auto q = qs.find(t.qid);
    if (q == qs.end()) throw ConfigError("triplets: unknown query '" + t.qid + "'");
    TrainingTriplet r;
    r.query_id = t.qid;
    r.query = tokenize(q->second->text, vocab);
    auto doc = [&](const std::string& id) {
      auto it = ds.find(id);
      if (it == ds.end()) throw ConfigError("triplets: unknown document '" + id + "'");
      return tokenize(it->second->text, vocab);
    };
    for (const auto& p : t.pos) {
      r.positive_ids.push_back(p);
      r.positives.push_back(doc(p));
    }
    for (const auto& n : t.neg) {
      r.negative_ids.push_back(n);
      r.negatives.push_back(doc(n));
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// (query, labeled positive) pairs for the supervised Stage-I variant.
inline std::vector<TextPair> supervised_pairs(std::span<const TrainingTriplet> triplets) {
  std::vector<TextPair> out;
  for (const auto& t : triplets) {
    for (const auto& p : t.positives) out.push_back({t.query, p});
  }
  return out;
}

inline EncoderParams new_student(const RunConfig& cfg) {
  return init_encoder(Role::student, cfg.vocab_size, cfg.student_dims, derive_seed(cfg.train.seed, "student"));
}

inline EncoderParams new_teacher(const RunConfig& cfg) {
  return init_encoder(Role::teacher, cfg.vocab_size, cfg.teacher_dims, derive_seed(cfg.train.seed, "teacher"));
}

// ---------------------------------------------------------------------------
// Variants

enum class Variant { full, no_stage1, no_stage2, distill, supervised_stage1 };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_stage1: return "no_stage1";
    case Variant::no_stage2: return "no_stage2";
    case Variant::distill: return "distill";
    default: return "supervised_stage1";
  }
}

inline Variant variant_from_string(std::string_view s) {
  for (auto v : {Variant::full, Variant::no_stage1, Variant::no_stage2, Variant::distill,
                 Variant::supervised_stage1}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "'");
}

struct Pretrained {
  EncoderParams student;
  EncoderParams teacher;
  std::vector<TrainReport> reports;
};

inline Pretrained pretrain_models(const ExperimentData& data, const RunConfig& cfg) {
  const auto pairs = pretrain_pairs(data, cfg.vocab_size);
  Pretrained p{new_student(cfg), new_teacher(cfg), {}};
  const auto tc = cfg.stage(cfg.pretrain);
  p.reports.push_back(pretrain_independent(p.student, pairs, tc));
  p.reports.push_back(pretrain_independent(p.teacher, pairs, tc));
  return p;
}

/// Query encoder and document encoder produced by one variant.
struct TrainedModels {
  EncoderParams query_encoder;
  EncoderParams doc_encoder;
  std::vector<TrainReport> reports;
};

inline TrainedModels train_variant(Variant v, const Pretrained& base, const ExperimentData& data,
                                   std::span<const TrainingTriplet> triplets, const RunConfig& cfg) {
  TrainedModels m{base.student, base.teacher, {}};
  const bool stage1 = v == Variant::full || v == Variant::no_stage2 || v == Variant::supervised_stage1;
  const bool stage2 = v == Variant::full || v == Variant::no_stage1 || v == Variant::supervised_stage1;
  if (v == Variant::distill) {
    m.reports.push_back(distill_baseline(m.query_encoder, base.teacher, triplets, cfg.stage(cfg.distill)));
    m.doc_encoder = m.query_encoder;
    return m;
  }
  if (stage1) {
    if (v == Variant::supervised_stage1) {
      const auto pairs = supervised_pairs(triplets);
      m.reports.push_back(stage1_align_pairs(m.query_encoder, m.doc_encoder, pairs, cfg.stage(cfg.align)));
    } else {
      const auto texts = align_texts(data, cfg.vocab_size);
      m.reports.push_back(stage1_align(m.query_encoder, m.doc_encoder, texts, cfg.stage(cfg.align)));
    }
  }
  if (stage2) {
    m.reports.push_back(stage2_joint(m.query_encoder, m.doc_encoder, triplets, cfg.stage(cfg.finetune)));
  }
  return m;
}

/// Hash of every setting that can change a result; file locations and the
/// thread count are left out.
inline std::string config_fingerprint(const RunConfig& cfg) {
  Json j = cfg.to_json();
  j.erase("paths");
  j.erase("threads");
  return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationSpec {
  std::string name;
  Variant variant = Variant::full;
};

struct AblationRow {
  std::string name;
  Variant variant = Variant::full;
  Vec ndcg;  // one per seed
  Vec map;

  static double mean(const Vec& v) { return detail::mean(v); }
  static double min(const Vec& v) { return *std::min_element(v.begin(), v.end()); }
  static double max(const Vec& v) { return *std::max_element(v.begin(), v.end()); }
};

struct Verdict {
  std::string claim;
  std::string lhs;
  std::string rhs;
  double lhs_mean = 0.0;
  double rhs_mean = 0.0;
  bool holds = false;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  std::vector<Verdict> verdicts;
  std::size_t k = 10;

  const AblationRow* find(Variant v) const {
    for (const auto& r : rows) {
      if (r.variant == v) return &r;
    }
    return nullptr;
  }

  Json to_json() const {
    Json j = {{"seeds", seeds}, {"k", k}, {"configs", Json::array()}, {"verdicts", Json::array()}};
    for (const auto& r : rows) {
      j["configs"].push_back({{"name", r.name},
                              {"variant", to_string(r.variant)},
                              {"ndcg", r.ndcg},
                              {"map", r.map},
                              {"ndcg_mean", AblationRow::mean(r.ndcg)},
                              {"ndcg_min", AblationRow::min(r.ndcg)},
                              {"ndcg_max", AblationRow::max(r.ndcg)},
                              {"map_mean", AblationRow::mean(r.map)}});
    }
    for (const auto& v : verdicts) {
      j["verdicts"].push_back({{"claim", v.claim}, {"lhs_mean", v.lhs_mean}, {"rhs_mean", v.rhs_mean},
                               {"holds", v.holds}});
    }
    return j;
  }

  std::string table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(20) << "config" << std::right << std::setw(10) << "ndcg" << std::setw(10)
        << "min" << std::setw(10) << "max" << std::setw(10) << "map" << "\n";
    for (const auto& r : rows) {
      out << std::left << std::setw(20) << r.name << std::right << std::setw(10) << AblationRow::mean(r.ndcg)
          << std::setw(10) << AblationRow::min(r.ndcg) << std::setw(10) << AblationRow::max(r.ndcg)
          << std::setw(10) << AblationRow::mean(r.map) << "\n";
    }
    for (const auto& v : verdicts) {
      out << (v.holds ? "holds  " : "FAILS  ") << v.claim << "  (" << v.lhs_mean << " vs " << v.rhs_mean
          << ")\n";
    }
    return out.str();
  }
};

inline std::vector<AblationSpec> default_ablations() {
  return {{"full", Variant::full},
          {"no_stage2", Variant::no_stage2},
          {"no_stage1", Variant::no_stage1},
          {"distill", Variant::distill},
          {"supervised_stage1", Variant::supervised_stage1}};
}

/// Strict mean-nDCG inequalities between variants present in the table.
inline std::vector<Verdict> ablation_verdicts(const AblationTable& t) {
  const std::vector<std::pair<Variant, Variant>> claims = {{Variant::full, Variant::no_stage2},
                                                           {Variant::no_stage2, Variant::no_stage1},
                                                           {Variant::full, Variant::no_stage1},
                                                           {Variant::full, Variant::distill},
                                                           {Variant::full, Variant::supervised_stage1}};
  std::vector<Verdict> out;
  for (const auto& [a, b] : claims) {
    const auto* ra = t.find(a);
    const auto* rb = t.find(b);
    if (!ra || !rb) continue;
    Verdict v{ra->name + " > " + rb->name, ra->name, rb->name, AblationRow::mean(ra->ndcg),
              AblationRow::mean(rb->ndcg), false};
    v.holds = v.lhs_mean > v.rhs_mean;
    out.push_back(v);
  }
  return out;
}

using ProgressFn = std::function<void(const std::string&)>;

/// Trains every spec on every seed (shared data, curation and pretraining per
/// seed) and evaluates retrieval on the test queries.
inline AblationTable run_ablations(const RunConfig& base, std::span<const AblationSpec> specs,
                                   std::span<const std::uint64_t> seeds, const ProgressFn& progress = {}) {
  if (specs.empty()) throw ConfigError("ablate: no configurations");
  if (seeds.empty()) throw ConfigError("ablate: no seeds");
  AblationTable table;
  table.k = base.eval_k;
  table.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& s : specs) table.rows.push_back({s.name, s.variant, {}, {}});

  for (auto seed : seeds) {
    RunConfig cfg = base;
    cfg.train.seed = seed;
    const auto data = generate_data(cfg);
    auto judges = make_judges(cfg);
    std::vector<JudgeClient*> jp;
    for (auto& j : judges) jp.push_back(j.get());
    const auto cur = curate(data, cfg, jp);
    const auto triplets = resolve_triplets(cur.triplets.triplets, data.train_queries, data.corpus, cfg.vocab_size);
    const auto pre = pretrain_models(data, cfg);
    EvalTasks tasks = data.tasks();
    tasks.rerank.clear();
    tasks.sts.clear();
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto m = train_variant(specs[i].variant, pre, data, triplets, cfg);
      const auto rep = run_benchmark(m.query_encoder, m.doc_encoder, tasks, cfg.eval_k, {}, cfg.threads);
      table.rows[i].ndcg.push_back(rep.ndcg);
      table.rows[i].map.push_back(rep.map);
      if (progress) {
        std::ostringstream msg;
        msg << "seed " << seed << " " << specs[i].name << " ndcg@" << cfg.eval_k << "=" << rep.ndcg;
        progress(msg.str());
      }
    }
  }
  table.verdicts = ablation_verdicts(table);
  return table;
}

}  // namespace asym
