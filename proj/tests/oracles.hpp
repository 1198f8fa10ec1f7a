// Test-only reference implementations, independent of the library's
// computation paths.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "mgacl/graph.hpp"
#include "mgacl/metrics.hpp"
#include "mgacl/params.hpp"

namespace oracle {

inline double rel_err(double a, double b, double floor = 1e-2) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences of f over every entry of every tensor.
template <typename LossFn>
std::array<mgacl::Array, mgacl::kNumParams> finite_diff_grads(const mgacl::ParameterStore& base,
                                                              LossFn f, double h = 1e-5) {
  std::array<mgacl::Array, mgacl::kNumParams> out;
  mgacl::ParameterStore work = base;
  for (int pi = 0; pi < mgacl::kNumParams; ++pi) {
    mgacl::Param p = static_cast<mgacl::Param>(pi);
    const mgacl::Array& t = base.tensor(p);
    out[pi] = mgacl::Array(t.shape);
    for (size_t k = 0; k < t.data.size(); ++k) {
      double orig = t.data[k];
      work.tensor(p).data[k] = orig + h;
      double up = f(work);
      work.tensor(p).data[k] = orig - h;
      double down = f(work);
      work.tensor(p).data[k] = orig;
      out[pi].data[k] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

// All-pairs AUC: every positive compared against every negative.
inline double brute_auc(const std::vector<mgacl::ScoredPair>& pairs) {
  long wins = 0, ties = 0, np = 0, nn = 0;
  for (const auto& p : pairs) (p.label == 1 ? np : nn) += 1;
  for (const auto& p : pairs) {
    if (p.label != 1) continue;
    for (const auto& q : pairs) {
      if (q.label != 0) continue;
      if (p.score > q.score) ++wins;
      else if (p.score == q.score) ++ties;
    }
  }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
         (static_cast<double>(np) * static_cast<double>(nn));
}

inline std::pair<double, double> brute_acc_f1(const std::vector<mgacl::ScoredPair>& pairs,
                                              double threshold = 0.5) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& p : pairs) {
    bool pred = p.score >= threshold;
    if (pred && p.label == 1) ++tp;
    if (pred && p.label == 0) ++fp;
    if (!pred && p.label == 1) ++fn;
    if (!pred && p.label == 0) ++tn;
  }
  double acc = static_cast<double>(tp + tn) / static_cast<double>(tp + fp + fn + tn);
  double f1 = 0.0;
  if (tp + fp > 0 && tp + fn > 0) {
    double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
  }
  return {acc, f1};
}

inline std::pair<double, double> brute_recall_ndcg(const std::vector<int>& ranked,
                                                   const std::vector<int>& relevant, int k) {
  std::set<int> rel(relevant.begin(), relevant.end());
  long hits = 0;
  double dcg = 0.0;
  for (int pos = 0; pos < std::min<int>(k, static_cast<int>(ranked.size())); ++pos) {
    if (rel.count(ranked[pos])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
  }
  double idcg = 0.0;
  for (int pos = 0; pos < std::min<int>(k, static_cast<int>(rel.size())); ++pos)
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  double recall = static_cast<double>(hits) / static_cast<double>(rel.size());
  return {recall, idcg > 0 ? dcg / idcg : 0.0};
}

// Breadth-first p-step image over the raw triple list (ignores head_index).
inline std::vector<int> brute_frontier(const std::vector<mgacl::Triple>& triples,
                                       std::vector<int> start, int p) {
  std::set<int> cur(start.begin(), start.end());
  for (int step = 0; step < p; ++step) {
    std::set<int> next;
    for (const auto& t : triples)
      if (cur.count(t.head)) next.insert(t.tail);
    cur = std::move(next);
  }
  return std::vector<int>(cur.begin(), cur.end());
}

// k-core by repeated removal of a random violating endpoint.
inline std::vector<std::pair<int, int>> brute_kcore(std::vector<std::pair<int, int>> pairs,
                                                    int k, std::mt19937_64& rng) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  while (true) {
    std::map<int, int> udeg, vdeg;
    for (auto [u, v] : pairs) {
      udeg[u]++;
      vdeg[v]++;
    }
    std::vector<std::pair<bool, int>> violating;  // (is_user, id)
    for (auto [u, d] : udeg)
      if (d < k) violating.push_back({true, u});
    for (auto [v, d] : vdeg)
      if (d < k) violating.push_back({false, v});
    if (violating.empty()) return pairs;
    std::uniform_int_distribution<size_t> pick(0, violating.size() - 1);
    auto [is_user, id] = violating[pick(rng)];
    std::vector<std::pair<int, int>> kept;
    for (auto& e : pairs)
      if (!((is_user && e.first == id) || (!is_user && e.second == id))) kept.push_back(e);
    pairs = std::move(kept);
  }
}

// Plain Adam recurrence for scalar sequences.
inline std::vector<double> adam_trajectory(double theta0, const std::vector<double>& grads,
                                           double lr) {
  double m = 0, v = 0, theta = theta0;
  std::vector<double> out;
  for (size_t t = 1; t <= grads.size(); ++t) {
    double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    double vhat = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    theta -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    out.push_back(theta);
  }
  return out;
}

// Gradient-descent logistic regression on one-hot (user, item) features;
// shows a pair set is separable when its loss can be driven near zero.
inline double logistic_fit_loss(const std::vector<std::array<int, 3>>& pairs, int num_users,
                                int num_items, int steps, double lr) {
  std::vector<double> wu(num_users, 0.0), wi(num_items, 0.0);
  double b = 0.0;
  for (int s = 0; s < steps; ++s) {
    std::vector<double> gu(num_users, 0.0), gi(num_items, 0.0);
    double gb = 0.0;
    for (const auto& [u, v, y] : pairs) {
      double z = wu[u] + wi[v] + b;
      double p = 1.0 / (1.0 + std::exp(-z));
      double d = p - y;
      gu[u] += d;
      gi[v] += d;
      gb += d;
    }
    for (int u = 0; u < num_users; ++u) wu[u] -= lr * gu[u];
    for (int v = 0; v < num_items; ++v) wi[v] -= lr * gi[v];
    b -= lr * gb;
  }
  double loss = 0.0;
  for (const auto& [u, v, y] : pairs) {
    double z = wu[u] + wi[v] + b;
    double p = std::clamp(1.0 / (1.0 + std::exp(-z)), 1e-12, 1.0 - 1e-12);
    loss -= y * std::log(p) + (1 - y) * std::log(1.0 - p);
  }
  return loss;
}

}  // namespace oracle
