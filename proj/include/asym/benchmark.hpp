#pragma once

// Benchmark runner: retrieval (nDCG@k, MAP@k) over a document index,
// reranking (MAP@k) of fixed candidate lists, and STS (Pearson of cosine
// against binary labels). Query texts go through the query encoder; document
// texts through the document encoder truncated to the query dimension.

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asym/data.hpp"
#include "asym/encoder.hpp"
#include "asym/index.hpp"
#include "asym/metrics.hpp"

namespace asym {

struct EvalTasks {
  std::vector<Query> queries;
  std::vector<Document> corpus;
  Qrels qrels;
  TripletSet rerank;             // optional
  std::vector<StsSample> sts;    // optional; qid refers to `queries`
};

struct QueryRow {
  std::string task;
  std::string query_id;
  double ndcg = 0.0;
  double map = 0.0;
};

struct EvalReport {
  std::string fingerprint;
  std::size_t k = 10;

  double ndcg = 0.0;
  double map = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;

  std::optional<double> rerank_map;
  std::size_t rerank_evaluated = 0;

  std::optional<double> sts_pearson;
  std::size_t sts_pairs = 0;

  double macro = 0.0;
  std::vector<QueryRow> rows;

  std::string at_k(const char* name) const { return std::string(name) + "@" + std::to_string(k); }

  Json to_json() const {
    Json tasks = {{"retrieval",
                   {{at_k("ndcg"), ndcg}, {at_k("map"), map}, {"queries", evaluated}, {"skipped", skipped}}}};
    if (rerank_map) tasks["rerank"] = {{at_k("map"), *rerank_map}, {"queries", rerank_evaluated}};
    if (sts_pearson) tasks["sts"] = {{"pearson", *sts_pearson}, {"pairs", sts_pairs}};
    Json per_query = Json::array();
    for (const auto& r : rows) {
      per_query.push_back({{"task", r.task}, {"qid", r.query_id}, {at_k("ndcg"), r.ndcg}, {at_k("map"), r.map}});
    }
    return Json{{"config_fingerprint", fingerprint}, {"k", k},
                {at_k("ndcg"), ndcg},                {"tasks", tasks},
                {"macro_avg", macro},                {"per_query", per_query}};
  }

  std::string table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(12) << "task" << std::setw(12) << "metric" << std::right << std::setw(10)
        << "value" << std::setw(10) << "n" << "\n";
    auto line = [&](const std::string& task, const std::string& metric, double v, std::size_t n) {
      out << std::left << std::setw(12) << task << std::setw(12) << metric << std::right << std::setw(10) << v
          << std::setw(10) << n << "\n";
    };
    line("retrieval", at_k("ndcg"), ndcg, evaluated);
    line("retrieval", at_k("map"), map, evaluated);
    if (rerank_map) line("rerank", at_k("map"), *rerank_map, rerank_evaluated);
    if (sts_pearson) line("sts", "pearson", *sts_pearson, sts_pairs);
    line("all", "macro_avg", macro, 0);
    if (skipped > 0) out << "skipped " << skipped << " queries without relevant documents\n";
    return out.str();
  }

  std::string csv() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "task,qid," << at_k("ndcg") << "," << at_k("map") << "\n";
    for (const auto& r : rows) out << r.task << "," << r.query_id << "," << r.ndcg << "," << r.map << "\n";
    return out.str();
  }
};

namespace detail {

inline std::vector<DocText> doc_texts(std::span<const Document> docs) {
  std::vector<DocText> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({d.id, d.text});
  return out;
}

inline RankedList rank_candidates(const std::string& qid, std::span<const double> q,
                                  const std::vector<std::pair<std::string, Vec>>& cands) {
  RankedList r{qid, {}};
  for (const auto& [id, e] : cands) r.entries.push_back({id, dot(q, e)});
  std::sort(r.entries.begin(), r.entries.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return r;
}

}  // namespace detail

/// Evaluates against a prebuilt index of the corpus. Queries without relevant
/// documents are skipped and counted. Deterministic in its inputs; corpus
/// order does not affect any metric.
inline EvalReport run_benchmark(const EncoderParams& query_encoder, const EncoderParams& doc_encoder,
                                const VectorIndex& index, const EvalTasks& tasks, std::size_t k = 10,
                                std::string fingerprint = {}) {
  if (k == 0) throw ConfigError("eval: k must be >= 1");
  if (tasks.queries.empty()) throw ConfigError("eval: no queries");
  if (index.dim != query_encoder.out_dim()) throw DimensionError("eval: index dim != query encoder out_dim");
  const std::size_t dim = query_encoder.out_dim();
  if (dim > doc_encoder.out_dim()) throw DimensionError("eval: document encoder narrower than query encoder");

  EvalReport rep;
  rep.k = k;
  rep.fingerprint = std::move(fingerprint);
  std::map<std::string, Vec> qemb;
  for (const auto& q : tasks.queries) {
    if (!qemb.emplace(q.id, encode(query_encoder, tokenize(q.text, query_encoder.vocab_size()))).second) {
      throw ConfigError("eval: duplicate query id '" + q.id + "'");
    }
  }

  double nd = 0.0, mp = 0.0;
  for (const auto& q : tasks.queries) {
    if (tasks.qrels.relevant(q.id).empty()) {
      ++rep.skipped;
      continue;
    }
    const RankedList r{q.id, search_embedding(index, qemb.at(q.id), k)};
    const double n = ndcg_at_k(r, tasks.qrels, k);
    const double m = map_at_k(r, tasks.qrels, k);
    nd += n;
    mp += m;
    ++rep.evaluated;
    rep.rows.push_back({"retrieval", q.id, n, m});
  }
  if (rep.evaluated == 0) throw DegenerateInputError("eval: no query has a relevant document");
  rep.ndcg = nd / static_cast<double>(rep.evaluated);
  rep.map = mp / static_cast<double>(rep.evaluated);
  double macro = rep.ndcg;
  std::size_t macro_n = 1;

  std::map<std::string, const Document*> by_id;
  for (const auto& d : tasks.corpus) by_id[d.id] = &d;
  std::map<std::string, Vec> demb;
  auto doc_embedding = [&](const std::string& id) -> const Vec& {
    auto it = demb.find(id);
    if (it != demb.end()) return it->second;
    auto d = by_id.find(id);
    if (d == by_id.end()) throw ConfigError("eval: rerank references unknown doc '" + id + "'");
    const auto e = encode(doc_encoder, tokenize(d->second->text, doc_encoder.vocab_size()));
    return demb.emplace(id, mrl_truncate(e, dim)).first->second;
  };

  if (!tasks.rerank.empty()) {
    double sum = 0.0;
    for (const auto& t : tasks.rerank) {
      if (t.pos.empty()) continue;
      auto q = qemb.find(t.qid);
      if (q == qemb.end()) throw ConfigError("eval: rerank references unknown query '" + t.qid + "'");
      Qrels local;
      std::vector<std::pair<std::string, Vec>> cands;
      for (const auto& id : t.pos) {
        local.set(t.qid, id, 1);
        cands.emplace_back(id, doc_embedding(id));
      }
      for (const auto& id : t.neg) {
        if (local.label(t.qid, id)) continue;
        local.set(t.qid, id, 0);
        cands.emplace_back(id, doc_embedding(id));
      }
      const double m = map_at_k(detail::rank_candidates(t.qid, q->second, cands), local, k);
      sum += m;
      ++rep.rerank_evaluated;
      rep.rows.push_back({"rerank", t.qid, 0.0, m});
    }
    if (rep.rerank_evaluated > 0) {
      rep.rerank_map = sum / static_cast<double>(rep.rerank_evaluated);
      macro += *rep.rerank_map;
      ++macro_n;
    }
  }

  if (!tasks.sts.empty()) {
    Vec scores, labels;
    for (const auto& s : tasks.sts) {
      auto q = qemb.find(s.qid);
      if (q == qemb.end()) throw ConfigError("eval: sts references unknown query '" + s.qid + "'");
      const auto e = encode(doc_encoder, tokenize(s.sentence, doc_encoder.vocab_size()));
      scores.push_back(dot(q->second, mrl_truncate(e, dim)));
      labels.push_back(static_cast<double>(s.label));
    }
    rep.sts_pairs = scores.size();
    rep.sts_pearson = pearson(scores, labels);
    macro += *rep.sts_pearson;
    ++macro_n;
  }
  rep.macro = macro / static_cast<double>(macro_n);
  return rep;
}

/// Builds the index from `doc_encoder` at the query dimension, then evaluates.
inline EvalReport run_benchmark(const EncoderParams& query_encoder, const EncoderParams& doc_encoder,
                                const EvalTasks& tasks, std::size_t k = 10, std::string fingerprint = {},
                                std::size_t threads = 1) {
  const auto docs = detail::doc_texts(tasks.corpus);
  const auto index = build_index(doc_encoder, docs, query_encoder.out_dim(), threads);
  return run_benchmark(query_encoder, doc_encoder, index, tasks, k, std::move(fingerprint));
}

}  // namespace asym
