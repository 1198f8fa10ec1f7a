#pragma once

#include <span>
#include <string>
#include <vector>

#include "mgacl/array.hpp"

namespace mgacl {

struct ScoredPair {
  int user = 0;
  int item = 0;
  double score = 0.0;
  int label = 0;
};

// Rank-based AUC; ties count one half. Requires both classes present.
double auc(std::span<const ScoredPair> pairs);

// Accuracy and F1 at a fixed threshold; F1 = 2PR/(P+R), 0 when degenerate.
std::pair<double, double> acc_f1(std::span<const ScoredPair> pairs, double threshold = 0.5);

// Per-user recall@k and NDCG@k (binary gain, 1/log2(rank+1) discount, IDCG
// over min(k, |relevant|)), averaged over users with non-empty relevant sets.
// `ranked` lists must already be ordered best-first.
struct RankingMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
  int users = 0;
};
RankingMetrics recall_ndcg_at_k(const std::vector<std::vector<int>>& ranked,
                                const std::vector<std::vector<int>>& relevant, int k);

struct MetricsReport {
  double auc = 0.0, acc = 0.0, f1 = 0.0;
  double recall_at_k = 0.0, ndcg_at_k = 0.0;
  int k = 0;
  long num_pairs = 0;
  int num_ranked_users = 0;
  bool has_ranking = false;

  std::string to_json() const;
  std::string to_table() const;
};

}  // namespace mgacl
