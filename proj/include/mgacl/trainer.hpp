#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgacl/contrastive.hpp"
#include "mgacl/ingest.hpp"
#include "mgacl/itemrep.hpp"
#include "mgacl/metrics.hpp"
#include "mgacl/params.hpp"
#include "mgacl/userrep.hpp"

namespace mgacl {

enum class ExecMode { Serial, Parallel };

struct TrainConfig {
  int lp = 1;             // user sampling depth (hops 0..lp)
  int lh = 1;             // item receptive depth
  int M = 8;              // triples per user hop
  int N = 4;              // children per tree node
  double tau = 0.2;
  double lambda1 = 0.1;
  double lambda2 = 1e-5;
  int dim = 64;
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 20;
  uint64_t seed = 42;
  double drop_prob = 0.1;
  int neg_ratio = 1;      // carried for the resolved config; applied at prepare time
  AblationFlags ablation;
  int top_k = 20;
  int eval_every = 5;
  int threads = 0;        // 0 = runtime default
  ExecMode mode = ExecMode::Parallel;

  // All violations collected so a bad config reports everything at once.
  std::vector<std::string> validate() const;
};

// Everything random about one example, fixed before the forward pass so the
// loss is a pure function of the parameters given the plan.
struct ExamplePlan {
  int user = 0;
  int item = 0;
  int label = 0;
  int item_entity = 0;
  std::vector<PreferenceSet> prefs;  // hops 0..lp
  ItemTree tree;
  std::vector<double> mask_u, mask_v;  // inverted-dropout masks, empty if unused
  bool skipped = false;                // cold start
};

struct BatchPlan {
  std::vector<ExamplePlan> examples;
  int skipped = 0;
};

BatchPlan make_batch_plan(const FusedGraph& g, std::span<const LabeledPair> batch,
                          const TrainConfig& cfg, uint64_t epoch, uint64_t batch_index);

// Inverted dropout: zero with probability drop_prob, else 1/(1-drop_prob);
// all-ones (bitwise identity) at drop_prob = 0.
std::vector<double> dropout_mask(int dim, double drop_prob, std::mt19937_64& rng);

struct BatchLosses {
  double base = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double interaction = 0.0;
  double reg = 0.0;
  double total = 0.0;
  int used = 0;
  int skipped = 0;
};

struct BatchResult {
  BatchLosses losses;
  DenseGrads grads;
};

// Forward (+ optional backward) for one batch. Serial and parallel modes are
// bitwise-identical: per-example tapes run independently, the batch-level
// loss tape and the gradient merge stay in a fixed order.
class BatchExecutor {
 public:
  BatchExecutor(const FusedGraph& g, const TrainConfig& cfg);

  BatchResult run(const ParameterStore& store, const BatchPlan& plan, bool compute_grads,
                  ExecMode mode);
  BatchLosses loss_only(const ParameterStore& store, const BatchPlan& plan);

 private:
  const FusedGraph& graph_;
  TrainConfig cfg_;
};

double predict_probability(std::span<const double> o_u, std::span<const double> o_v);

// Eq-20-style cross entropy over clamped probabilities (batch sum).
double base_loss(std::span<const double> predictions, std::span<const int> labels);

double total_loss(double base, const CLLosses& cl, double reg, double lambda1, double lambda2);

struct EpochLog {
  int epoch = 0;
  // per-example means of the batch sums
  double base = 0.0, intra = 0.0, inter = 0.0, interaction = 0.0, reg = 0.0, total = 0.0;
  long examples = 0;
  int skipped = 0;
  bool has_eval = false;
  double eval_auc = 0.0, eval_acc = 0.0, eval_f1 = 0.0;

  std::string to_json() const;
};

struct FitOptions {
  // Optional early stop once both targets are reached at an eval point
  // (negative = disabled).
  double stop_train_auc = -1.0;
  double stop_eval_auc = -1.0;
  bool quiet = true;
};

struct FitResult {
  ParameterStore params;       // final parameters
  ParameterStore best_params;  // best eval AUC checkpoint
  double best_auc = -1.0;
  int best_epoch = -1;
  std::vector<EpochLog> history;
};

FitResult fit(const TrainConfig& cfg, const DatasetSplit& split, const FusedGraph& graph,
              const FitOptions& options = {});

// Scores a labeled pair list with the trained parameters (deterministic
// per-pair sampling seeds).
std::vector<ScoredPair> score_pairs(const ParameterStore& store, const FusedGraph& graph,
                                    std::span<const LabeledPair> pairs, const TrainConfig& cfg,
                                    ExecMode mode);

// CTR metrics on the labeled pairs; optionally full-catalog ranking metrics
// (candidates exclude the user's train positives, relevant = eval positives).
MetricsReport evaluate(const ParameterStore& store, const FusedGraph& graph,
                       const DatasetSplit& split, const TrainConfig& cfg, int k,
                       bool with_ranking, ExecMode mode);

}  // namespace mgacl
