#pragma once

// Data curation: a clustered synthetic corpus, diversity-aware dedup over an
// evolving index, candidate mining, multi-judge consensus labeling, triplet
// construction and rule-based STS sample generation.

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/data.hpp"
#include "asym/encoder.hpp"
#include "asym/index.hpp"
#include "asym/metrics.hpp"

namespace asym {

using SynonymDict = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticSpec {
  std::size_t clusters = 50;
  std::size_t clusters_per_group = 5;
  std::size_t docs_per_cluster = 200;
  std::size_t train_queries_per_cluster = 40;
  std::size_t test_queries_per_cluster = 10;
  std::size_t unlabeled_per_cluster = 200;
  std::size_t terms_per_cluster = 16;
  std::size_t terms_per_group = 24;
  std::size_t background_terms = 400;
  double dup_rate = 0.0;
  double synonym_rate = 0.3;
  std::uint64_t seed = 1;
};

/// Intent words; the STS generator flips a query's intent among these.
inline const std::vector<std::string>& intent_terms() {
  static const std::vector<std::string> k = {"cause",   "symptom",    "treatment", "diet",
                                             "dosage",  "prevention", "diagnosis", "risk"};
  return k;
}

struct Lexicon {
  std::vector<std::vector<std::string>> cluster_terms;
  std::vector<std::vector<std::string>> group_terms;
  std::vector<std::string> background;
};

namespace detail {

inline std::string pseudo_word(Rng& rng, std::set<std::string>& used) {
  static const std::array<const char*, 24> syl = {"ba", "ce", "di", "fo", "gu", "ha", "ji", "ko",
                                                  "lu", "me", "na", "po", "qui", "ra", "si", "tu",
                                                  "vo", "xa", "ze", "lor", "mit", "pan", "tis", "dro"};
  for (;;) {
    std::string w;
    const std::size_t n = rng.range(2, 4);
    for (std::size_t i = 0; i < n; ++i) w += syl[rng.below(syl.size())];
    if (used.insert(w).second) return w;
  }
}

inline std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

inline std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// |multiset intersection| / max(len a, len b).
inline double token_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string, int> ca;
  for (const auto& t : a) ++ca[t];
  std::size_t common = 0;
  for (const auto& t : b) {
    auto it = ca.find(t);
    if (it != ca.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  const std::size_t m = std::max(a.size(), b.size());
  return m == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(m);
}

}  // namespace detail

inline Lexicon make_lexicon(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, "lexicon"));
  std::set<std::string> used(intent_terms().begin(), intent_terms().end());
  Lexicon lex;
  const std::size_t groups = (spec.clusters + spec.clusters_per_group - 1) / spec.clusters_per_group;
  lex.cluster_terms.resize(spec.clusters);
  for (auto& terms : lex.cluster_terms) {
    for (std::size_t k = 0; k < spec.terms_per_cluster; ++k) terms.push_back(detail::pseudo_word(rng, used));
  }
  lex.group_terms.resize(groups);
  for (auto& terms : lex.group_terms) {
    for (std::size_t k = 0; k < spec.terms_per_group; ++k) terms.push_back(detail::pseudo_word(rng, used));
  }
  for (std::size_t k = 0; k < spec.background_terms; ++k) lex.background.push_back(detail::pseudo_word(rng, used));
  return lex;
}

/// Synonyms for every cluster-specific term: a fresh pseudo-word per term.
inline SynonymDict make_synonym_dict(const SyntheticSpec& spec) {
  const Lexicon lex = make_lexicon(spec);
  std::set<std::string> used(intent_terms().begin(), intent_terms().end());
  for (const auto& t : lex.cluster_terms) used.insert(t.begin(), t.end());
  for (const auto& t : lex.group_terms) used.insert(t.begin(), t.end());
  used.insert(lex.background.begin(), lex.background.end());
  Rng rng(derive_seed(spec.seed, "synonyms"));
  SynonymDict dict;
  for (const auto& terms : lex.cluster_terms) {
    for (const auto& t : terms) dict[t] = detail::pseudo_word(rng, used) + "x";
  }
  return dict;
}

struct SyntheticCorpus {
  std::vector<Document> docs;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  std::vector<Document> unlabeled;
  std::vector<std::pair<std::string, std::string>> pairs;  // (title, content)
  Qrels qrels;                                             // same cluster => 1
  TripletSet rerank;                                       // test-query rerank lists
};

namespace detail {

class TextSampler {
 public:
  TextSampler(const Lexicon& lex, const SynonymDict& syn, const SyntheticSpec& spec, Rng& rng)
      : lex_(lex), syn_(syn), spec_(spec), rng_(rng) {}

  std::string cluster_term(std::size_t c) {
    const auto& t = lex_.cluster_terms[c][rng_.below(lex_.cluster_terms[c].size())];
    auto it = syn_.find(t);
    if (it != syn_.end() && rng_.bernoulli(spec_.synonym_rate)) return it->second;
    return t;
  }

  std::string group_term(std::size_t c) {
    const auto& g = lex_.group_terms[c / spec_.clusters_per_group];
    return g[rng_.below(g.size())];
  }

  std::string background() { return lex_.background[rng_.below(lex_.background.size())]; }

  std::string intent() { return intent_terms()[rng_.below(intent_terms().size())]; }

  std::vector<std::string> document(std::size_t c) {
    std::vector<std::string> toks;
    const std::size_t len = rng_.range(14, 26);
    for (std::size_t i = 0; i < len; ++i) {
      const double u = rng_.uniform();
      if (u < 0.30) toks.push_back(cluster_term(c));
      else if (u < 0.55) toks.push_back(group_term(c));
      else if (u < 0.60) toks.push_back(intent());
      else toks.push_back(background());
    }
    return toks;
  }

  /// Short query-like text: an intent word, at least one cluster term.
  std::vector<std::string> query(std::size_t c, std::size_t min_len, std::size_t max_len) {
    std::vector<std::string> toks;
    const std::size_t len = rng_.range(min_len, max_len);
    toks.push_back(cluster_term(c));
    for (std::size_t i = 1; i + 1 < len; ++i) {
      const double u = rng_.uniform();
      if (u < 0.45) toks.push_back(cluster_term(c));
      else if (u < 0.70) toks.push_back(group_term(c));
      else toks.push_back(background());
    }
    toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(rng_.below(toks.size() + 1)), intent());
    return toks;
  }

 private:
  const Lexicon& lex_;
  const SynonymDict& syn_;
  const SyntheticSpec& spec_;
  Rng& rng_;
};

inline std::string padded(std::size_t i, int width = 5) {
  std::string s = std::to_string(i);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

}  // namespace detail

/// Cluster-templated documents and queries; relevance truth is "same
/// cluster". A dup_rate fraction of documents are near-duplicates (one or two
/// tokens replaced) of an earlier document in the same cluster; with
/// dup_rate 0 no two same-cluster documents share more than 90% of tokens.
inline SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec, const SynonymDict& synonyms) {
  if (spec.clusters < 2) throw ConfigError("gen_synthetic_corpus: need at least 2 clusters");
  if (spec.clusters_per_group == 0 || spec.docs_per_cluster == 0) {
    throw ConfigError("gen_synthetic_corpus: clusters_per_group and docs_per_cluster must be positive");
  }
  if (spec.dup_rate < 0.0 || spec.dup_rate >= 1.0) throw ConfigError("gen_synthetic_corpus: dup_rate must be in [0,1)");
  const Lexicon lex = make_lexicon(spec);
  Rng rng(derive_seed(spec.seed, "corpus"));
  detail::TextSampler sample(lex, synonyms, spec, rng);
  SyntheticCorpus out;

  std::vector<std::vector<std::vector<std::string>>> by_cluster(spec.clusters);
  std::vector<std::vector<std::string>> doc_ids(spec.clusters);
  for (std::size_t i = 0; i < spec.docs_per_cluster; ++i) {
    for (std::size_t c = 0; c < spec.clusters; ++c) {
      auto& prev = by_cluster[c];
      std::vector<std::string> toks;
      if (!prev.empty() && rng.bernoulli(spec.dup_rate)) {
        toks = prev[rng.below(prev.size())];
        const std::size_t edits = rng.range(1, 2);
        for (std::size_t e = 0; e < edits; ++e) toks[rng.below(toks.size())] = sample.background();
      } else {
        for (;;) {
          toks = sample.document(c);
          bool close = false;
          for (const auto& p : prev) {
            if (detail::token_overlap(p, toks) > 0.9) {
              close = true;
              break;
            }
          }
          if (!close) break;
        }
      }
      const std::string id = "d" + detail::padded(out.docs.size());
      out.docs.push_back({id, detail::join(toks), static_cast<int>(c)});
      doc_ids[c].push_back(id);
      prev.push_back(std::move(toks));
      out.pairs.emplace_back(detail::join(sample.query(c, 3, 7)), out.docs.back().text);
    }
  }

  auto make_queries = [&](std::size_t per_cluster, const std::string& prefix, std::vector<Query>& dst) {
    for (std::size_t i = 0; i < per_cluster; ++i) {
      for (std::size_t c = 0; c < spec.clusters; ++c) {
        const std::string id = prefix + detail::padded(dst.size());
        dst.push_back({id, detail::join(sample.query(c, 3, 7)), static_cast<int>(c)});
        for (const auto& did : doc_ids[c]) out.qrels.set(id, did, 1);
      }
    }
  };
  make_queries(spec.train_queries_per_cluster, "qtr", out.train_queries);
  make_queries(spec.test_queries_per_cluster, "qte", out.test_queries);

  for (std::size_t i = 0; i < spec.unlabeled_per_cluster; ++i) {
    for (std::size_t c = 0; c < spec.clusters; ++c) {
      out.unlabeled.push_back({"u" + detail::padded(out.unlabeled.size()),
                               detail::join(sample.query(c, 3, 10)), std::nullopt});
    }
  }

  // Rerank lists: two positives and eight same-group (hard) or random negatives.
  for (const auto& q : out.test_queries) {
    const std::size_t c = static_cast<std::size_t>(*q.cluster);
    TripletRecord t{q.id, {}, {}};
    std::vector<std::string> pos = doc_ids[c];
    rng.shuffle(pos);
    pos.resize(std::min<std::size_t>(2, pos.size()));
    t.pos = pos;
    const std::size_t g0 = (c / spec.clusters_per_group) * spec.clusters_per_group;
    const std::size_t g1 = std::min(spec.clusters, g0 + spec.clusters_per_group);
    for (std::size_t k = 0; k < 8; ++k) {
      std::size_t nc = c;
      if (g1 - g0 > 1) {
        while (nc == c) nc = g0 + rng.below(g1 - g0);
      } else {
        while (nc == c) nc = rng.below(spec.clusters);
      }
      const auto& cand = doc_ids[nc][rng.below(doc_ids[nc].size())];
      if (std::find(t.neg.begin(), t.neg.end(), cand) == t.neg.end()) t.neg.push_back(cand);
    }
    out.rerank.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diversity-aware dedup

struct CurationParams {
  std::size_t k = 5;
  double t = 0.85;
  std::size_t n = 1;
  std::size_t seed_size = 50;
  /// "more than n close neighbors" when true, "at least n" otherwise.
  bool strict = true;

  void validate() const {
    if (k == 0) throw ConfigError("curation: k must be >= 1");
    if (k < n) throw ConfigError("curation: k must be >= n");
    if (seed_size == 0) throw ConfigError("curation: seed_size must be >= 1");
  }
};

/// Returns retained item indices in input order. The first seed_size items
/// are kept unconditionally; each later item is discarded when more than n of
/// its top-k neighbors in the evolving index exceed similarity t.
inline std::vector<std::size_t> diversify(std::span<const Embedding> items, const CurationParams& params) {
  params.validate();
  if (params.seed_size > items.size()) throw ConfigError("diversify: seed_size exceeds item count");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i < params.seed_size) {
      kept.push_back(i);
      continue;
    }
    std::vector<double> sims;
    sims.reserve(kept.size());
    for (auto j : kept) sims.push_back(std::clamp(dot(items[i], items[j]), -1.0, 1.0));
    const std::size_t k = std::min(params.k, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                      std::greater<>());
    std::size_t close = 0;
    for (std::size_t r = 0; r < k; ++r) {
      if (sims[r] > params.t) ++close;
    }
    const bool redundant = params.strict ? close > params.n : close >= params.n;
    if (!redundant) kept.push_back(i);
  }
  return kept;
}

inline std::vector<std::size_t> diversify(std::span<const Document> items, const EncoderParams& encoder,
                                          const CurationParams& params, std::size_t threads = 1) {
  std::vector<TokenSeq> toks;
  for (const auto& d : items) toks.push_back(tokenize(d.text, encoder.vocab_size()));
  const auto emb = encode_batch(encoder, toks, threads);
  return diversify(emb, params);
}

/// Exact top-pool_size documents by cosine; the whole corpus when pool_size
/// exceeds it.
inline std::vector<SearchHit> mine_candidates(std::span<const double> query_embedding,
                                              const VectorIndex& index, std::size_t pool_size) {
  if (pool_size == 0) throw ConfigError("mine_candidates: pool_size must be >= 1");
  return search_embedding(index, query_embedding, std::min(pool_size, index.count()));
}

// ---------------------------------------------------------------------------
// Judging and consensus

enum class Grade { S, A, B, C, D };

inline constexpr std::array<Grade, 5> kAllGrades = {Grade::S, Grade::A, Grade::B, Grade::C, Grade::D};

inline std::string to_string(Grade g) {
  static constexpr std::array<const char*, 5> names = {"S", "A", "B", "C", "D"};
  return names[static_cast<std::size_t>(g)];
}

inline Grade grade_from_string(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'S': return Grade::S;
      case 'A': return Grade::A;
      case 'B': return Grade::B;
      case 'C': return Grade::C;
      case 'D': return Grade::D;
      default: break;
    }
  }
  throw ProtocolError("unknown relevance grade '" + std::string(s) + "'");
}

struct JudgeVerdict {
  std::string judge_id;
  Grade grade = Grade::D;
};

enum class Consensus { positive, negative, discarded };

inline std::string to_string(Consensus c) {
  switch (c) {
    case Consensus::positive: return "positive";
    case Consensus::negative: return "negative";
    default: return "discarded";
  }
}

/// Which grades count as a positive vote. Defaults to S and A.
struct ConsensusRule {
  std::set<Grade> positive_grades = {Grade::S, Grade::A};

  bool is_positive(Grade g) const { return positive_grades.count(g) > 0; }
};

/// Unanimous positive votes -> positive, unanimous negative -> negative,
/// anything else -> discarded.
inline Consensus consensus_label(std::span<const JudgeVerdict> verdicts, const ConsensusRule& rule = {}) {
  if (verdicts.size() < 2) throw ConfigError("consensus_label: need at least 2 verdicts");
  std::size_t pos = 0;
  for (const auto& v : verdicts) {
    if (static_cast<std::size_t>(v.grade) > 4) throw ProtocolError("consensus_label: unknown grade");
    if (rule.is_positive(v.grade)) ++pos;
  }
  if (pos == verdicts.size()) return Consensus::positive;
  if (pos == 0) return Consensus::negative;
  return Consensus::discarded;
}

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string id() const = 0;
  /// One entry per passage; nullopt marks a passage that could not be judged.
  virtual std::vector<std::optional<Grade>> grade(const Query& query, std::span<const Document> passages) = 0;
};

/// Grades from synthetic cluster truth: same cluster S, otherwise D. With
/// probability `noise` a pair's vote flips side (S/A <-> B/C/D). Noise draws
/// depend only on (seed, judge id, query id, doc id), not on call order.
class MockJudge : public JudgeClient {
 public:
  MockJudge(std::string id, double noise, std::uint64_t seed)
      : id_(std::move(id)), noise_(noise), seed_(seed) {
    if (noise < 0.0 || noise > 1.0) throw ConfigError("mock judge: noise must be in [0,1]");
  }

  std::string id() const override { return id_; }

  bool flips(const std::string& qid, const std::string& did) const {
    Rng rng(pair_seed(qid, did));
    return rng.bernoulli(noise_);
  }

  std::vector<std::optional<Grade>> grade(const Query& query, std::span<const Document> passages) override {
    if (!query.cluster) throw ConfigError("mock judge: query '" + query.id + "' has no cluster label");
    std::vector<std::optional<Grade>> out;
    for (const auto& d : passages) {
      if (!d.cluster) throw ConfigError("mock judge: document '" + d.id + "' has no cluster label");
      const bool relevant = *query.cluster == *d.cluster;
      Rng rng(pair_seed(query.id, d.id));
      Grade g = relevant ? Grade::S : Grade::D;
      if (rng.bernoulli(noise_)) {
        g = relevant ? kAllGrades[2 + rng.below(3)] : kAllGrades[rng.below(2)];
      }
      out.push_back(g);
    }
    return out;
  }

 private:
  std::uint64_t pair_seed(const std::string& qid, const std::string& did) const {
    return derive_seed(seed_, id_ + '\x1f' + qid + '\x1f' + did);
  }

  std::string id_;
  double noise_;
  std::uint64_t seed_;
};

inline std::optional<JudgeVerdict> judge(const Query& query, const Document& doc, JudgeClient& client) {
  const auto g = client.grade(query, std::span<const Document>(&doc, 1));
  if (g.size() != 1) throw ProtocolError("judge: expected exactly one grade");
  if (!g[0]) return std::nullopt;
  return JudgeVerdict{client.id(), *g[0]};
}

struct LabelingResult {
  Qrels qrels;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t discarded = 0;
  std::size_t unjudged = 0;
  /// Fleiss' kappa of the judges' letter grades over fully judged pairs.
  std::optional<double> kappa;

  Json to_json() const {
    Json j = {{"positives", positives}, {"negatives", negatives},
              {"discarded", discarded}, {"unjudged", unjudged}};
    j["fleiss_kappa"] = kappa ? Json(*kappa) : Json(nullptr);
    return j;
  }
};

/// Judges every (query, candidate) pair with every client and applies the
/// consensus rule. Pairs with fewer than two verdicts are counted unjudged.
inline LabelingResult label_candidates(std::span<const Query> queries,
                                       const std::map<std::string, std::vector<std::string>>& candidates,
                                       const std::map<std::string, Document>& docs,
                                       std::span<JudgeClient* const> judges,
                                       const ConsensusRule& rule = {}) {
  if (judges.size() < 2) throw ConfigError("label_candidates: need at least 2 judges");
  LabelingResult res;
  std::vector<std::vector<std::size_t>> kappa_rows;
  for (const auto& q : queries) {
    auto it = candidates.find(q.id);
    if (it == candidates.end()) continue;
    std::vector<Document> passages;
    for (const auto& did : it->second) passages.push_back(docs.at(did));
    std::vector<std::vector<std::optional<Grade>>> grades;
    for (auto* j : judges) {
      auto g = j->grade(q, passages);
      if (g.size() != passages.size()) throw ProtocolError("judge '" + j->id() + "' returned wrong grade count");
      grades.push_back(std::move(g));
    }
    for (std::size_t p = 0; p < passages.size(); ++p) {
      std::vector<JudgeVerdict> verdicts;
      std::vector<std::size_t> row(5, 0);
      for (std::size_t j = 0; j < judges.size(); ++j) {
        if (grades[j][p]) {
          verdicts.push_back({judges[j]->id(), *grades[j][p]});
          ++row[static_cast<std::size_t>(*grades[j][p])];
        }
      }
      if (verdicts.size() < 2) {
        ++res.unjudged;
        continue;
      }
      if (verdicts.size() == judges.size()) kappa_rows.push_back(row);
      switch (consensus_label(verdicts, rule)) {
        case Consensus::positive:
          res.qrels.set(q.id, passages[p].id, 1);
          ++res.positives;
          break;
        case Consensus::negative:
          res.qrels.set(q.id, passages[p].id, 0);
          ++res.negatives;
          break;
        case Consensus::discarded:
          ++res.discarded;
          break;
      }
    }
  }
  if (!kappa_rows.empty()) res.kappa = fleiss_kappa(kappa_rows);
  return res;
}

// ---------------------------------------------------------------------------
// Triplets

struct TripletOptions {
  std::size_t positives = 1;
  std::size_t negatives = 7;
  std::uint64_t seed = 1;
};

struct TripletBuildResult {
  TripletSet triplets;
  std::size_t dropped_no_positive = 0;
  /// Queries kept with an empty negative list.
  std::vector<std::string> flagged_no_negative;
};

/// Samples up to opts.positives positives and opts.negatives negatives per
/// query from consensus-labeled candidates. Queries without a positive are
/// dropped and counted.
inline TripletBuildResult build_triplets(const Qrels& qrels,
                                         const std::map<std::string, std::vector<std::string>>& candidates,
                                         const TripletOptions& opts = {}) {
  TripletBuildResult res;
  for (const auto& [qid, cands] : candidates) {
    std::vector<std::string> pos, neg;
    for (const auto& did : cands) {
      const auto l = qrels.label(qid, did);
      if (!l) continue;
      (*l == 1 ? pos : neg).push_back(did);
    }
    if (pos.empty()) {
      ++res.dropped_no_positive;
      continue;
    }
    Rng rng(derive_seed(opts.seed, "triplets:" + qid));
    rng.shuffle(pos);
    rng.shuffle(neg);
    pos.resize(std::min(pos.size(), opts.positives));
    neg.resize(std::min(neg.size(), opts.negatives));
    if (neg.empty()) res.flagged_no_negative.push_back(qid);
    res.triplets.push_back({qid, std::move(pos), std::move(neg)});
  }
  return res;
}

// ---------------------------------------------------------------------------
// STS

struct StsTriple {
  std::string query_id;
  std::string s_plus;
  std::string s_minus_hard;
  std::string s_minus_easy;
  std::string sentence;
  int label = 0;
};

struct StsResult {
  std::vector<StsTriple> triples;
  std::size_t skipped = 0;
};

namespace detail {

/// Replaces the first intent word with the next one in the intent list, or
/// prefixes "not" when the text has no intent word.
inline std::vector<std::string> flip_intent(std::vector<std::string> toks) {
  const auto& intents = intent_terms();
  for (auto& t : toks) {
    auto it = std::find(intents.begin(), intents.end(), t);
    if (it != intents.end()) {
      const auto next = static_cast<std::size_t>(it - intents.begin() + 1) % intents.size();
      t = intents[next];
      return toks;
    }
  }
  toks.insert(toks.begin(), "not");
  return toks;
}

}  // namespace detail

/// s+ substitutes every dictionary term with its synonym; the hard negative
/// adds an intent flip to the substituted text; the easy negative flips the
/// intent of the original text. One of the three is sampled per query.
inline StsResult gen_sts(std::span<const Query> queries, const SynonymDict& synonyms, std::uint64_t seed) {
  StsResult res;
  Rng rng(derive_seed(seed, "sts"));
  for (const auto& q : queries) {
    auto toks = detail::split_ws(q.text);
    auto subst = toks;
    bool found = false;
    for (auto& t : subst) {
      auto it = synonyms.find(t);
      if (it != synonyms.end()) {
        t = it->second;
        found = true;
      }
    }
    if (!found) {
      ++res.skipped;
      continue;
    }
    StsTriple s;
    s.query_id = q.id;
    s.s_plus = detail::join(subst);
    s.s_minus_hard = detail::join(detail::flip_intent(subst));
    s.s_minus_easy = detail::join(detail::flip_intent(toks));
    switch (rng.below(3)) {
      case 0: s.sentence = s.s_plus; break;
      case 1: s.sentence = s.s_minus_hard; break;
      default: s.sentence = s.s_minus_easy; break;
    }
    s.label = s.sentence == s.s_plus ? 1 : 0;
    res.triples.push_back(std::move(s));
  }
  return res;
}

}  // namespace asym
