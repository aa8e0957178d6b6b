#pragma once

// Independent reference computations for tests. Written for clarity, not
// speed: long double accumulation, no shared helpers with the library beyond
// plain containers.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using V = std::vector<double>;
using LD = long double;

inline LD dotl(const V& a, const V& b) {
  LD s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<LD>(a[i]) * b[i];
  return s;
}

inline V unit(V v) {
  LD n = std::sqrt(dotl(v, v));
  for (double& x : v) x = static_cast<double>(x / n);
  return v;
}

inline V head(const V& v, std::size_t m) { return V(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)); }

/// -log( e^{s0/t} / sum_j e^{sj/t} ), no max subtraction.
inline double infonce(const V& q, const V& pos, const std::vector<V>& negs, double tau) {
  if (negs.empty()) return 0.0;
  const LD top = std::exp(dotl(q, pos) / tau);
  LD denom = top;
  for (const auto& n : negs) denom += std::exp(dotl(q, n) / tau);
  return static_cast<double>(-std::log(top / denom));
}

inline double mse(const V& a, const V& b) {
  LD s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<LD>(a[i]) - b[i]) * (static_cast<LD>(a[i]) - b[i]);
  return static_cast<double>(s);
}

inline double stage1(const V& xs, const V& xt, const std::vector<V>& negs, double tau, double l1, double l2) {
  return l1 * infonce(xs, xt, negs, tau) + l2 * mse(xs, xt);
}

inline double mrl(const V& q, const V& pos, const std::vector<V>& negs, const std::vector<std::size_t>& dims,
                  double tau) {
  LD s = 0;
  for (auto m : dims) {
    std::vector<V> tn;
    for (const auto& n : negs) tn.push_back(unit(head(n, m)));
    s += infonce(unit(head(q, m)), unit(head(pos, m)), tn, tau);
  }
  return static_cast<double>(s / dims.size());
}

/// KL(p || q) with p = softmax(teacher/t), q = softmax(student/t).
inline double kl(const V& student, const V& teacher, double tau) {
  LD zp = 0, zq = 0;
  for (double x : teacher) zp += std::exp(x / tau);
  for (double x : student) zq += std::exp(x / tau);
  LD s = 0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const LD p = std::exp(teacher[i] / tau) / zp;
    const LD q = std::exp(student[i] / tau) / zq;
    s += p * std::log(p / q);
  }
  return static_cast<double>(s);
}

inline double kd(const V& teacher_scores, const V& q, const V& dpos, const std::vector<V>& dnegs, double tau) {
  V ss = {static_cast<double>(dotl(q, dpos))};
  for (const auto& n : dnegs) ss.push_back(static_cast<double>(dotl(q, n)));
  return kl(ss, teacher_scores, tau) + infonce(q, dpos, dnegs, tau);
}

// ---------------------------------------------------------------------------
// Metrics

/// ranking: doc ids best first; rel: relevant ids.
inline double ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& rel, std::size_t k) {
  if (rel.empty()) return 0.0;
  LD dcg = 0, ideal = 0;
  for (std::size_t r = 1; r <= std::min(k, ranking.size()); ++r) {
    if (rel.count(ranking[r - 1])) dcg += std::log(2.0L) / std::log(static_cast<LD>(r) + 1);
  }
  for (std::size_t r = 1; r <= std::min(k, rel.size()); ++r) ideal += std::log(2.0L) / std::log(static_cast<LD>(r) + 1);
  return static_cast<double>(dcg / ideal);
}

inline double ap(const std::vector<std::string>& ranking, const std::set<std::string>& rel, std::size_t k) {
  if (rel.empty()) return 0.0;
  LD s = 0;
  for (std::size_t r = 1; r <= std::min(k, ranking.size()); ++r) {
    if (!rel.count(ranking[r - 1])) continue;
    std::size_t hits = 0;
    for (std::size_t j = 1; j <= r; ++j) hits += rel.count(ranking[j - 1]);
    s += static_cast<LD>(hits) / r;
  }
  return static_cast<double>(s / std::min(k, rel.size()));
}

inline double pearson(const V& x, const V& y) {
  const std::size_t n = x.size();
  LD mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  LD cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

/// Average rank by counting: #smaller + (#equal + 1) / 2.
inline V ranks(const V& v) {
  V r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, eq = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      else if (w == v[i]) ++eq;
    }
    r[i] = less + (eq + 1) / 2;
  }
  return r;
}

inline double spearman(const V& a, const V& b) { return pearson(ranks(a), ranks(b)); }

/// Fleiss' kappa from explicit per-rater labels: agreement over ordered
/// rater pairs per item, chance from pooled label frequencies.
inline double fleiss(const std::vector<std::vector<std::size_t>>& counts) {
  LD pbar = 0;
  std::map<std::size_t, LD> freq;
  LD total = 0;
  for (const auto& row : counts) {
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < row.size(); ++c) {
      for (std::size_t k = 0; k < row[c]; ++k) labels.push_back(c);
    }
    LD agree = 0, pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (i == j) continue;
        ++pairs;
        if (labels[i] == labels[j]) ++agree;
      }
    }
    pbar += agree / pairs;
    for (auto l : labels) {
      freq[l] += 1;
      total += 1;
    }
  }
  pbar /= counts.size();
  LD pe = 0;
  for (const auto& [_, f] : freq) pe += (f / total) * (f / total);
  if (pe >= 1) return 1.0;
  return static_cast<double>((pbar - pe) / (1 - pe));
}

// ---------------------------------------------------------------------------
// Random instances

inline V random_vec(std::mt19937_64& g, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  V v(d);
  for (double& x : v) x = n(g);
  return v;
}

inline V random_unit(std::mt19937_64& g, std::size_t d) { return unit(random_vec(g, d)); }

}  // namespace oracle
