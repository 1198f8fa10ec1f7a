#include "mgacl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace mgacl {

double auc(std::span<const ScoredPair> pairs) {
  long np = 0, nn = 0;
  for (const ScoredPair& p : pairs) (p.label == 1 ? np : nn) += 1;
  if (np == 0 || nn == 0)
    throw DataError("auc undefined: need both classes, got " + std::to_string(np) +
                    " positives and " + std::to_string(nn) + " negatives");

  std::vector<const ScoredPair*> sorted;
  sorted.reserve(pairs.size());
  for (const ScoredPair& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair* a, const ScoredPair* b) { return a->score < b->score; });

  // Group equal scores so ties contribute one half.
  long wins = 0, ties = 0, neg_below = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    long pos_g = 0, neg_g = 0;
    while (j < sorted.size() && sorted[j]->score == sorted[i]->score) {
      (sorted[j]->label == 1 ? pos_g : neg_g) += 1;
      ++j;
    }
    wins += pos_g * neg_below;
    ties += pos_g * neg_g;
    neg_below += neg_g;
    i = j;
  }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
         (static_cast<double>(np) * static_cast<double>(nn));
}

std::pair<double, double> acc_f1(std::span<const ScoredPair> pairs, double threshold) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const ScoredPair& p : pairs) {
    bool pred = p.score >= threshold;
    if (pred && p.label == 1) ++tp;
    else if (pred && p.label == 0) ++fp;
    else if (!pred && p.label == 1) ++fn;
    else ++tn;
  }
  long n = tp + fp + fn + tn;
  double acc = n > 0 ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
  double f1 = 0.0;
  if (tp + fp > 0 && tp + fn > 0) {
    double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
  }
  return {acc, f1};
}

RankingMetrics recall_ndcg_at_k(const std::vector<std::vector<int>>& ranked,
                                const std::vector<std::vector<int>>& relevant, int k) {
  if (k < 1) throw ConfigError("k must be >= 1, got " + std::to_string(k));
  RankingMetrics out;
  double recall_sum = 0.0, ndcg_sum = 0.0;
  for (size_t u = 0; u < ranked.size(); ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;  // nothing to retrieve for this user
    std::unordered_set<int> rel_set(rel.begin(), rel.end());
    long hits = 0;
    double dcg = 0.0;
    int top = std::min<int>(k, static_cast<int>(ranked[u].size()));
    for (int pos = 0; pos < top; ++pos) {
      if (rel_set.count(ranked[u][pos])) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
      }
    }
    double idcg = 0.0;
    int ideal = std::min<int>(k, static_cast<int>(rel.size()));
    for (int pos = 0; pos < ideal; ++pos) idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    recall_sum += static_cast<double>(hits) / static_cast<double>(rel.size());
    ndcg_sum += idcg > 0.0 ? dcg / idcg : 0.0;
    out.users += 1;
  }
  if (out.users > 0) {
    out.recall = recall_sum / out.users;
    out.ndcg = ndcg_sum / out.users;
  }
  return out;
}

std::string MetricsReport::to_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"auc\":%.17g,\"acc\":%.17g,\"f1\":%.17g,"
                "\"recall_at_k\":%.17g,\"ndcg_at_k\":%.17g,\"k\":%d,"
                "\"num_pairs\":%ld,\"num_ranked_users\":%d,\"has_ranking\":%s,"
                "\"protocol\":\"ctr on labeled eval pairs; ranking over full catalog minus "
                "train positives\"}",
                auc, acc, f1, recall_at_k, ndcg_at_k, k, num_pairs, num_ranked_users,
                has_ranking ? "true" : "false");
  return buf;
}

std::string MetricsReport::to_table() const {
  std::string s;
  char buf[160];
  s += "# ctr metrics on labeled eval pairs; ranking over full catalog minus train positives\n";
  std::snprintf(buf, sizeof(buf), "%-12s %10s\n", "metric", "value");
  s += buf;
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%-12s %10.4f\n", name, v);
    s += buf;
  };
  row("AUC", auc);
  row("ACC", acc);
  row("F1", f1);
  if (has_ranking) {
    std::snprintf(buf, sizeof(buf), "%-9s@%-2d %10.4f\n", "RECALL", k, recall_at_k);
    s += buf;
    std::snprintf(buf, sizeof(buf), "%-9s@%-2d %10.4f\n", "NDCG", k, ndcg_at_k);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-12s %10ld\n", "pairs", num_pairs);
  s += buf;
  std::snprintf(buf, sizeof(buf), "%-12s %10d\n", "ranked_users", num_ranked_users);
  s += buf;
  return s;
}

}  // namespace mgacl
