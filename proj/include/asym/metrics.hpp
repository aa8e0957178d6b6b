#pragma once

// Retrieval, correlation and agreement metrics.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "asym/common.hpp"
#include "asym/data.hpp"
#include "asym/index.hpp"

namespace asym {

struct RankedList {
  std::string query_id;
  std::vector<SearchHit> entries;  // best first
};

namespace detail {

inline void check_ranking(const RankedList& r) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    if (!seen.insert(r.entries[i].doc_id).second) {
      throw ConfigError("ranking for '" + r.query_id + "' repeats doc '" + r.entries[i].doc_id + "'");
    }
    if (i > 0 && r.entries[i].score > r.entries[i - 1].score) {
      throw ConfigError("ranking for '" + r.query_id + "' is not sorted by score");
    }
  }
}

}  // namespace detail

/// Binary-gain nDCG@k with 1/log2(rank+1) discount. Returns 0 when the query
/// has no relevant documents; callers that average should skip such queries.
inline double ndcg_at_k(const RankedList& ranking, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw ConfigError("ndcg_at_k: k must be >= 1");
  detail::check_ranking(ranking);
  const auto rel = qrels.relevant(ranking.query_id);
  if (rel.empty()) return 0.0;
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranking.entries.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (rel.count(ranking.entries[r].doc_id)) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, rel.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

/// Mean of precision@r over relevant ranks r <= k, divided by min(k, R).
inline double map_at_k(const RankedList& ranking, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw ConfigError("map_at_k: k must be >= 1");
  detail::check_ranking(ranking);
  const auto rel = qrels.relevant(ranking.query_id);
  if (rel.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranking.entries.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (rel.count(ranking.entries[r].doc_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(k, rel.size()));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
  if (x.size() < 2) throw DegenerateInputError("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInputError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline Vec average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  Vec ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of the average ranks of two paired value lists.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 2) throw DegenerateInputError("spearman: need at least 2 items");
  const Vec ra = average_ranks(a);
  const Vec rb = average_ranks(b);
  return pearson(ra, rb);
}

/// Fleiss' kappa over an items x categories count matrix. Every item must
/// have the same number (>= 2) of ratings. When all ratings fall into one
/// category the chance agreement is 1 and kappa is defined as 1.
inline double fleiss_kappa(const std::vector<std::vector<std::size_t>>& counts) {
  if (counts.empty()) throw DegenerateInputError("fleiss_kappa: no items");
  const std::size_t cats = counts[0].size();
  if (cats == 0) throw DegenerateInputError("fleiss_kappa: no categories");
  std::size_t raters = 0;
  for (std::size_t c : counts[0]) raters += c;
  if (raters < 2) throw DegenerateInputError("fleiss_kappa: need at least 2 raters per item");

  const double n = static_cast<double>(raters);
  const double items = static_cast<double>(counts.size());
  Vec pj(cats, 0.0);
  double pbar = 0.0;
  for (const auto& row : counts) {
    if (row.size() != cats) throw DimensionError("fleiss_kappa: ragged category counts");
    std::size_t total = 0;
    double sq = 0.0;
    for (std::size_t j = 0; j < cats; ++j) {
      total += row[j];
      sq += static_cast<double>(row[j]) * static_cast<double>(row[j]);
      pj[j] += static_cast<double>(row[j]);
    }
    if (total != raters) throw ConfigError("fleiss_kappa: unequal rater counts across items");
    pbar += (sq - n) / (n * (n - 1.0));
  }
  pbar /= items;
  double pe = 0.0;
  for (double& p : pj) {
    p /= items * n;
    pe += p * p;
  }
  if (pe >= 1.0) return 1.0;
  return (pbar - pe) / (1.0 - pe);
}

}  // namespace asym
