#pragma once

// Exact brute-force vector index over offline document embeddings, plus the
// online query-latency benchmark.

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/encoder.hpp"

namespace asym {

struct VectorIndex {
  std::vector<std::string> doc_ids;
  Vec matrix;  // row-major, count x dim, unit rows
  std::size_t dim = 0;
  std::string builder_tag;

  std::size_t count() const { return doc_ids.size(); }
  std::span<const double> row(std::size_t i) const { return {matrix.data() + i * dim, dim}; }
};

struct SearchHit {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const SearchHit&) const = default;
};

struct DocText {
  std::string id;
  std::string text;
};

/// Rows are mrl_truncate(encode(encoder, doc), mrl_dim) in input order.
inline VectorIndex build_index(const EncoderParams& encoder, std::span<const DocText> docs,
                               std::size_t mrl_dim, std::size_t threads = 1) {
  if (docs.empty()) throw ConfigError("build_index: empty corpus");
  if (mrl_dim == 0 || mrl_dim > encoder.out_dim()) {
    throw DimensionError("build_index: mrl_dim exceeds encoder output dimension");
  }
  std::vector<TokenSeq> toks;
  toks.reserve(docs.size());
  for (const auto& d : docs) toks.push_back(tokenize(d.text, encoder.vocab_size()));
  const auto emb = encode_batch(encoder, toks, threads);

  VectorIndex idx;
  idx.dim = mrl_dim;
  idx.builder_tag = checkpoint_hash(encoder) + ":" + std::to_string(mrl_dim);
  idx.matrix.reserve(docs.size() * mrl_dim);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    idx.doc_ids.push_back(docs[i].id);
    const auto r = mrl_truncate(emb[i], mrl_dim);
    idx.matrix.insert(idx.matrix.end(), r.begin(), r.end());
  }
  return idx;
}

/// Exact top_k by descending score, ties by ascending doc id. top_k larger
/// than the index returns every row.
inline std::vector<SearchHit> search_embedding(const VectorIndex& index,
                                               std::span<const double> query,
                                               std::size_t top_k) {
  if (top_k == 0) throw ConfigError("search: top_k must be >= 1");
  if (query.size() != index.dim) {
    throw DimensionError("search: query dim " + std::to_string(query.size()) +
                         " != index dim " + std::to_string(index.dim));
  }
  const std::size_t n = index.count();
  Vec scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = index.matrix.data() + i * index.dim;
    double s = 0.0;
    for (std::size_t j = 0; j < index.dim; ++j) s += r[j] * query[j];
    scores[i] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(top_k, n);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.doc_ids[a] < index.doc_ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<SearchHit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back({index.doc_ids[order[i]], scores[order[i]]});
  return hits;
}

inline std::vector<SearchHit> search(const VectorIndex& index, const EncoderParams& student,
                                     std::string_view query_text, std::size_t top_k) {
  if (top_k == 0) throw ConfigError("search: top_k must be >= 1");
  if (student.out_dim() != index.dim) {
    throw DimensionError("search: student out_dim does not match index dim");
  }
  return search_embedding(index, encode(student, tokenize(query_text, student.vocab_size())), top_k);
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string index_bytes(const VectorIndex& idx) {
  Json header = {{"dim", idx.dim},
                 {"count", idx.count()},
                 {"builder_tag", idx.builder_tag},
                 {"doc_ids", idx.doc_ids}};
  return encode_framed(header, idx.matrix);
}

inline VectorIndex index_from_bytes(std::string_view bytes) {
  auto blob = decode_framed(bytes);
  VectorIndex idx;
  try {
    idx.dim = blob.header.at("dim").get<std::size_t>();
    idx.builder_tag = blob.header.at("builder_tag").get<std::string>();
    idx.doc_ids = blob.header.at("doc_ids").get<std::vector<std::string>>();
    if (blob.header.at("count").get<std::size_t>() != idx.doc_ids.size()) {
      throw IoError("index header count does not match doc_ids");
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("index header: ") + e.what());
  }
  if (blob.payload.size() != idx.dim * idx.doc_ids.size()) {
    throw IoError("index payload size does not match count x dim");
  }
  idx.matrix = std::move(blob.payload);
  return idx;
}

inline void save_index(const VectorIndex& idx, const std::string& path) {
  write_file(path, index_bytes(idx));
}

inline VectorIndex load_index(const std::string& path) { return index_from_bytes(read_file(path)); }

// ---------------------------------------------------------------------------
// Latency benchmark

struct LatencyReport {
  double qps = 0.0;             // median over repetitions
  double p50_us = 0.0;          // over all timed queries
  double p99_us = 0.0;
  double mean_us = 0.0;         // 1e6 / qps
  std::vector<double> rep_qps;

  Json to_json() const {
    return Json{{"qps", qps}, {"p50_us", p50_us}, {"p99_us", p99_us},
                {"mean_us", mean_us}, {"rep_qps", rep_qps}};
  }
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto pos = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) ;
  return v[std::min(v.size() - 1, pos == 0 ? 0 : pos - 1)];
}

}  // namespace detail

/// Times tokenize + encode + top_k search per query. One untimed warmup pass
/// precedes the timed repetitions.
inline LatencyReport bench_latency(const EncoderParams& student, const VectorIndex& index,
                                   std::span<const std::string> queries, std::size_t repetitions,
                                   std::size_t top_k = 10) {
  if (queries.empty()) throw ConfigError("bench: empty query set");
  if (repetitions < 3) throw ConfigError("bench: repetitions must be >= 3");
  using clock = std::chrono::steady_clock;
  std::size_t sink = 0;
  for (const auto& q : queries) sink += search(index, student, q, top_k).size();

  LatencyReport rep;
  std::vector<double> lat;
  lat.reserve(queries.size() * repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = clock::now();
    for (const auto& q : queries) {
      const auto s = clock::now();
      sink += search(index, student, q, top_k).size();
      lat.push_back(std::chrono::duration<double, std::micro>(clock::now() - s).count());
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    rep.rep_qps.push_back(static_cast<double>(queries.size()) / secs);
  }
  if (sink == 0) throw Error("bench: no results");
  auto sorted = rep.rep_qps;
  std::sort(sorted.begin(), sorted.end());
  rep.qps = sorted[sorted.size() / 2];
  rep.mean_us = 1e6 / rep.qps;
  rep.p50_us = detail::percentile(lat, 0.50);
  rep.p99_us = detail::percentile(lat, 0.99);
  return rep;
}

}  // namespace asym
