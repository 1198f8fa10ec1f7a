#include "mgacl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mgacl/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgacl {

namespace {

template <typename F>
void for_each_index(int n, ExecMode mode, int threads, F&& f) {
#ifdef _OPENMP
  if (mode == ExecMode::Parallel) {
    std::atomic<bool> failed{false};
    std::exception_ptr eptr = nullptr;
    int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 4) num_threads(nt)
    for (int i = 0; i < n; ++i) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        f(i);
      } catch (...) {
#pragma omp critical
        {
          if (!failed.exchange(true)) eptr = std::current_exception();
        }
      }
    }
    if (eptr) std::rethrow_exception(eptr);
    return;
  }
#else
  (void)threads;
  (void)mode;
#endif
  for (int i = 0; i < n; ++i) f(i);
}

NodeId sum_terms(Tape& t, const std::vector<NodeId>& terms) {
  if (terms.empty()) return t.leaf(Array::scalar(0.0));
  NodeId acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return acc;
}

void sorted_unique(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::vector<double> dropout_mask(int dim, double drop_prob, std::mt19937_64& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0))
    throw ConfigError("drop probability must be in [0,1), got " + std::to_string(drop_prob));
  std::vector<double> mask(dim, 1.0);
  if (drop_prob == 0.0) return mask;  // identity, bitwise
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double keep = 1.0 - drop_prob;
  for (double& m : mask) m = unif(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> errs;
  if (lp < 0) errs.push_back("lp must be >= 0");
  if (lh < 1) errs.push_back("lh must be >= 1");
  if (M < 1) errs.push_back("M must be >= 1");
  if (N < 1) errs.push_back("N must be >= 1");
  if (!(tau > 0.0)) errs.push_back("temp must be > 0");
  if (lambda1 < 0.0) errs.push_back("lambda1 must be >= 0");
  if (lambda2 < 0.0) errs.push_back("lambda2 must be >= 0");
  if (dim < 1) errs.push_back("dim must be >= 1");
  if (!(lr > 0.0)) errs.push_back("lr must be > 0");
  if (batch_size < 1) errs.push_back("batch must be >= 1");
  if (epochs < 0) errs.push_back("epochs must be >= 0");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) errs.push_back("drop-prob must be in [0,1)");
  if (neg_ratio < 1) errs.push_back("neg-ratio must be >= 1");
  if (top_k < 1) errs.push_back("k must be >= 1");
  if (eval_every < 1) errs.push_back("eval-every must be >= 1");
  if (threads < 0) errs.push_back("threads must be >= 0");
  return errs;
}

BatchPlan make_batch_plan(const FusedGraph& g, std::span<const LabeledPair> batch,
                          const TrainConfig& cfg, uint64_t epoch, uint64_t batch_index) {
  BatchPlan plan;
  plan.examples.resize(batch.size());
  bool want_masks = cfg.ablation.cl && cfg.lambda1 != 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    ExamplePlan& ep = plan.examples[i];
    ep.user = batch[i].user;
    ep.item = batch[i].item;
    ep.label = batch[i].label;
    ep.item_entity = g.item_entity[batch[i].item];
    std::mt19937_64 rng = make_rng({cfg.seed, stream::kSample, epoch, batch_index, i});
    try {
      for (int p = 0; p <= cfg.lp; ++p)
        ep.prefs.push_back(sample_preference_set(g, ep.user, p, cfg.M, rng));
      ep.tree = sample_receptive_tree(g, ep.item_entity, cfg.lh, cfg.N, rng);
    } catch (const ColdStartError&) {
      ep.skipped = true;
      plan.skipped += 1;
      continue;
    }
    if (want_masks) {
      std::mt19937_64 drng = make_rng({cfg.seed, stream::kDropout, epoch, batch_index, i});
      ep.mask_u = dropout_mask(cfg.dim, cfg.drop_prob, drng);
      ep.mask_v = dropout_mask(cfg.dim, cfg.drop_prob, drng);
    }
  }
  return plan;
}

double predict_probability(std::span<const double> o_u, std::span<const double> o_v) {
  double s = 0.0;
  for (size_t i = 0; i < o_u.size(); ++i) s += o_u[i] * o_v[i];
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

double base_loss(std::span<const double> predictions, std::span<const int> labels) {
  double loss = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    double p = std::clamp(predictions[i], 1e-12, 1.0 - 1e-12);
    loss -= labels[i] * std::log(p) + (1 - labels[i]) * std::log(1.0 - p);
  }
  return loss;
}

double total_loss(double base, const CLLosses& cl, double reg, double lambda1, double lambda2) {
  return base + lambda1 * (cl.interaction + cl.intra + cl.inter) + lambda2 * reg;
}

BatchExecutor::BatchExecutor(const FusedGraph& g, const TrainConfig& cfg)
    : graph_(g), cfg_(cfg) {}

BatchResult BatchExecutor::run(const ParameterStore& store, const BatchPlan& plan,
                               bool compute_grads, ExecMode mode) {
  const int n = static_cast<int>(plan.examples.size());
  const bool cl_active = cfg_.ablation.cl && cfg_.lambda1 != 0.0;

  struct ExForward {
    Tape tape;
    UserRepNodes user;
    ItemRepNodes item;
    bool live = false;
  };
  std::vector<ExForward> fwd(n);

  if (plan.skipped == n) {  // nothing usable in this batch
    BatchResult out;
    out.losses.skipped = plan.skipped;
    if (compute_grads) {
      out.grads.init_like(store);
      out.grads.zero();
    }
    return out;
  }

  // Per-example forward passes are independent: each runs on its own tape
  // against the shared parameter snapshot.
  for_each_index(n, mode, cfg_.threads, [&](int i) {
    const ExamplePlan& ep = plan.examples[i];
    if (ep.skipped) return;
    ExForward& f = fwd[i];
    f.tape = Tape(&store);
    f.user = build_user_rep(f.tape, ep.user, ep.item_entity, ep.prefs, cfg_.ablation);
    f.item = build_item_rep(f.tape, f.user.u, ep.tree, cfg_.ablation);
    f.live = true;
  });

  // Batch-level loss tape: boundary inputs carry the example outputs, base
  // embeddings are gathered directly.
  Tape bt(&store);
  BatchViewNodes views;
  views.ex.resize(n);
  std::vector<NodeId> base_terms;
  base_terms.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto& e = views.ex[i];
    if (!fwd[i].live) {
      e.live = false;
      continue;
    }
    const ExamplePlan& ep = plan.examples[i];
    e.live = true;
    e.user = ep.user;
    e.item = ep.item;
    e.label = ep.label;
    e.o_u = bt.input(fwd[i].tape.value(fwd[i].user.o_u));
    if (fwd[i].user.o_r >= 0) e.o_r = bt.input(fwd[i].tape.value(fwd[i].user.o_r));
    if (fwd[i].user.o_e >= 0) e.o_e = bt.input(fwd[i].tape.value(fwd[i].user.o_e));
    e.o_v = bt.input(fwd[i].tape.value(fwd[i].item.o_v));
    e.o_c = bt.input(fwd[i].tape.value(fwd[i].item.o_c));
    e.o_s = bt.input(fwd[i].tape.value(fwd[i].item.o_s));
    e.e_u = bt.param_row(Param::UserEmb, ep.user);
    e.e_v = bt.param_row(Param::EntityEmb, ep.item_entity);
    if (cl_active) {
      e.o_u_hat = bt.mul(e.o_u, bt.leaf(Array::vec(ep.mask_u)));
      e.o_v_hat = bt.mul(e.o_v, bt.leaf(Array::vec(ep.mask_v)));
    }
    NodeId p = bt.sigmoid(bt.dot(e.o_u, e.o_v));
    NodeId term = bt.add(bt.scale(bt.log(p), static_cast<double>(ep.label)),
                         bt.scale(bt.log(bt.affine(p, -1.0, 1.0)),
                                  static_cast<double>(1 - ep.label)));
    base_terms.push_back(bt.scale(term, -1.0));
  }
  NodeId base_node = sum_terms(bt, base_terms);

  CLLossNodes cl;
  if (cl_active) {
    auto interacts = [this](int u, int v) { return graph_.interactions.has(u, v); };
    cl = build_cl_losses(bt, views, interacts, cfg_.ablation, cfg_.tau);
  }

  // L2 penalty over the rows this batch actually touched.
  std::vector<int> users, entities, relations;
  for (int i = 0; i < n; ++i) {
    if (!fwd[i].live) continue;
    const ExamplePlan& ep = plan.examples[i];
    users.push_back(ep.user);
    entities.push_back(ep.item_entity);
    for (const PreferenceSet& ps : ep.prefs)
      for (const Triple& tr : ps.triples) {
        if (cfg_.ablation.ev) entities.push_back(tr.tail);
        if (cfg_.ablation.rv) {
          entities.push_back(tr.tail);
          relations.push_back(tr.rel);
        }
      }
    if (cfg_.ablation.gcn)
      for (const auto& node : ep.tree.nodes) {
        entities.push_back(node.entity);
        if (node.rel_from_parent >= 0) relations.push_back(node.rel_from_parent);
      }
  }
  sorted_unique(users);
  sorted_unique(entities);
  sorted_unique(relations);
  std::vector<NodeId> reg_terms;
  if (!users.empty()) reg_terms.push_back(bt.l2_norm_sq(bt.param_rows(Param::UserEmb, users)));
  if (!entities.empty())
    reg_terms.push_back(bt.l2_norm_sq(bt.param_rows(Param::EntityEmb, entities)));
  if (!relations.empty())
    reg_terms.push_back(bt.l2_norm_sq(bt.param_rows(Param::RelationEmb, relations)));
  if (cfg_.ablation.gcn) {
    reg_terms.push_back(bt.l2_norm_sq(bt.param_tensor(Param::GcnW)));
    reg_terms.push_back(bt.l2_norm_sq(bt.param_tensor(Param::GcnB)));
  }
  NodeId reg_node = sum_terms(bt, reg_terms);

  NodeId total = base_node;
  if (cl_active) {
    NodeId cl_sum = bt.add(bt.add(cl.interaction, cl.intra), cl.inter);
    total = bt.add(total, bt.scale(cl_sum, cfg_.lambda1));
  }
  total = bt.add(total, bt.scale(reg_node, cfg_.lambda2));

  BatchResult out;
  out.losses.base = bt.value(base_node).data[0];
  out.losses.intra = cl_active ? bt.value(cl.intra).data[0] : 0.0;
  out.losses.inter = cl_active ? bt.value(cl.inter).data[0] : 0.0;
  out.losses.interaction = cl_active ? bt.value(cl.interaction).data[0] : 0.0;
  out.losses.reg = bt.value(reg_node).data[0];
  out.losses.total = bt.value(total).data[0];
  out.losses.used = static_cast<int>(base_terms.size());
  out.losses.skipped = plan.skipped;

  // Accounting identity of the joint objective, checked every step.
  CLLosses cl_vals{out.losses.intra, out.losses.inter, out.losses.interaction};
  double recomposed =
      total_loss(out.losses.base, cl_vals, out.losses.reg, cl_active ? cfg_.lambda1 : 0.0,
                 cfg_.lambda2);
  if (std::abs(recomposed - out.losses.total) >
      1e-6 * std::max(1.0, std::abs(out.losses.total)))
    throw NumericError("loss accounting identity violated: total=" +
                       std::to_string(out.losses.total) + " recomposed=" +
                       std::to_string(recomposed));
  if (!std::isfinite(out.losses.total))
    throw NumericError("non-finite batch loss: base=" + std::to_string(out.losses.base) +
                       " intra=" + std::to_string(out.losses.intra) +
                       " inter=" + std::to_string(out.losses.inter) +
                       " interaction=" + std::to_string(out.losses.interaction) +
                       " reg=" + std::to_string(out.losses.reg));

  if (!compute_grads) return out;

  bt.backward(total);

  // Seed each example tape with the boundary gradients and run its backward.
  for_each_index(n, mode, cfg_.threads, [&](int i) {
    if (!fwd[i].live) return;
    const auto& e = views.ex[i];
    std::vector<std::pair<NodeId, Array>> seeds;
    auto add_seed = [&](NodeId boundary, NodeId example_node) {
      if (boundary >= 0 && example_node >= 0 && bt.has_grad(boundary))
        seeds.emplace_back(example_node, bt.grad(boundary));
    };
    add_seed(e.o_u, fwd[i].user.o_u);
    add_seed(e.o_r, fwd[i].user.o_r);
    add_seed(e.o_e, fwd[i].user.o_e);
    add_seed(e.o_v, fwd[i].item.o_v);
    add_seed(e.o_c, fwd[i].item.o_c);
    add_seed(e.o_s, fwd[i].item.o_s);
    fwd[i].tape.backward_seeded(seeds);
  });

  // Merge in a fixed order: batch tape first, then examples by index.
  out.grads.init_like(store);
  out.grads.accumulate(bt.param_grads());
  for (int i = 0; i < n; ++i)
    if (fwd[i].live) out.grads.accumulate(fwd[i].tape.param_grads());
  return out;
}

BatchLosses BatchExecutor::loss_only(const ParameterStore& store, const BatchPlan& plan) {
  return run(store, plan, /*compute_grads=*/false, ExecMode::Serial).losses;
}

std::string EpochLog::to_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%d,\"base\":%.17g,\"intra\":%.17g,\"inter\":%.17g,"
                "\"interaction\":%.17g,\"reg\":%.17g,\"total\":%.17g,"
                "\"examples\":%ld,\"skipped\":%d",
                epoch, base, intra, inter, interaction, reg, total, examples, skipped);
  std::string s(buf);
  if (has_eval) {
    std::snprintf(buf, sizeof(buf), ",\"eval\":{\"auc\":%.17g,\"acc\":%.17g,\"f1\":%.17g}",
                  eval_auc, eval_acc, eval_f1);
    s += buf;
  }
  s += "}";
  return s;
}

FitResult fit(const TrainConfig& cfg, const DatasetSplit& split, const FusedGraph& graph,
              const FitOptions& options) {
  auto errs = cfg.validate();
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }

  FitResult out;
  out.params = ParameterStore::init(graph.interactions.num_users, graph.kg.num_entities,
                                    graph.relation_rows(), cfg.dim, cfg.seed);
  AdamState adam = AdamState::init_like(out.params);
  BatchExecutor exec(graph, cfg);

  std::vector<int> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng =
        make_rng({cfg.seed, stream::kShuffle, static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    double sum_base = 0, sum_intra = 0, sum_inter = 0, sum_interaction = 0, sum_reg = 0,
           sum_total = 0;
    long used = 0;
    uint64_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<LabeledPair> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(split.train[order[i]]);
      BatchPlan plan =
          make_batch_plan(graph, batch, cfg, static_cast<uint64_t>(epoch), batch_index);
      BatchResult res = exec.run(out.params, plan, /*compute_grads=*/true, cfg.mode);
      adam_step(out.params, adam, res.grads, cfg.lr);
      sum_base += res.losses.base;
      sum_intra += res.losses.intra;
      sum_inter += res.losses.inter;
      sum_interaction += res.losses.interaction;
      sum_reg += res.losses.reg;
      sum_total += res.losses.total;
      used += res.losses.used;
      log.skipped += res.losses.skipped;
    }
    log.examples = used;
    if (used > 0) {
      log.base = sum_base / used;
      log.intra = sum_intra / used;
      log.inter = sum_inter / used;
      log.interaction = sum_interaction / used;
      log.reg = sum_reg / used;
      log.total = sum_total / used;
    }

    bool eval_point = !split.eval.empty() &&
                      ((epoch + 1) % cfg.eval_every == 0 || epoch == cfg.epochs - 1);
    if (eval_point) {
      std::vector<ScoredPair> scored =
          score_pairs(out.params, graph, split.eval, cfg, cfg.mode);
      long pos = 0;
      for (const auto& p : scored) pos += p.label;
      if (pos > 0 && pos < static_cast<long>(scored.size())) {
        log.has_eval = true;
        log.eval_auc = auc(scored);
        auto [a, f] = acc_f1(scored);
        log.eval_acc = a;
        log.eval_f1 = f;
        if (log.eval_auc > out.best_auc) {
          out.best_auc = log.eval_auc;
          out.best_epoch = epoch;
          out.best_params = out.params;
        }
      }
    }
    out.history.push_back(log);

    if (log.has_eval && options.stop_eval_auc >= 0.0 && log.eval_auc >= options.stop_eval_auc) {
      bool train_ok = true;
      if (options.stop_train_auc >= 0.0) {
        std::vector<ScoredPair> tr = score_pairs(out.params, graph, split.train, cfg, cfg.mode);
        long pos = 0;
        for (const auto& p : tr) pos += p.label;
        if (pos > 0 && pos < static_cast<long>(tr.size()))
          train_ok = auc(tr) >= options.stop_train_auc;
      }
      if (train_ok) break;
    }
  }
  if (out.best_epoch < 0) out.best_params = out.params;
  return out;
}

std::vector<ScoredPair> score_pairs(const ParameterStore& store, const FusedGraph& graph,
                                    std::span<const LabeledPair> pairs, const TrainConfig& cfg,
                                    ExecMode mode) {
  std::vector<ScoredPair> out(pairs.size());
  for_each_index(static_cast<int>(pairs.size()), mode, cfg.threads, [&](int i) {
    const LabeledPair& p = pairs[i];
    out[i] = ScoredPair{p.user, p.item, 0.5, p.label};
    std::mt19937_64 rng = make_rng({cfg.seed, stream::kEval, static_cast<uint64_t>(p.user),
                                    static_cast<uint64_t>(p.item)});
    int entity = graph.item_entity[p.item];
    try {
      Tape t(&store);
      std::vector<PreferenceSet> prefs;
      for (int hop = 0; hop <= cfg.lp; ++hop)
        prefs.push_back(sample_preference_set(graph, p.user, hop, cfg.M, rng));
      UserRepNodes u = build_user_rep(t, p.user, entity, prefs, cfg.ablation);
      ItemTree tree = sample_receptive_tree(graph, entity, cfg.lh, cfg.N, rng);
      ItemRepNodes v = build_item_rep(t, u.u, tree, cfg.ablation);
      out[i].score = predict_probability(t.value(u.o_u).data, t.value(v.o_v).data);
    } catch (const ColdStartError&) {
      // users without usable history get an uninformative score
    }
  });
  return out;
}

MetricsReport evaluate(const ParameterStore& store, const FusedGraph& graph,
                       const DatasetSplit& split, const TrainConfig& cfg, int k,
                       bool with_ranking, ExecMode mode) {
  if (split.eval.empty()) throw DataError("empty eval split");
  if (store.dim != cfg.dim)
    throw ConfigError("checkpoint dim " + std::to_string(store.dim) + " != config dim " +
                      std::to_string(cfg.dim));
  if (store.user_emb.rows() != graph.interactions.num_users ||
      store.entity_emb.rows() != graph.kg.num_entities ||
      store.relation_emb.rows() != graph.relation_rows())
    throw ConfigError("checkpoint shape does not match graph");

  MetricsReport report;
  std::vector<ScoredPair> scored = score_pairs(store, graph, split.eval, cfg, mode);
  report.num_pairs = static_cast<long>(scored.size());
  report.auc = auc(scored);
  auto [a, f] = acc_f1(scored);
  report.acc = a;
  report.f1 = f;
  report.k = k;

  if (with_ranking) {
    std::vector<std::vector<int>> relevant(split.num_users);
    for (const auto& p : split.eval)
      if (p.label == 1) relevant[p.user].push_back(p.item);
    std::vector<int> users;
    for (int u = 0; u < split.num_users; ++u)
      if (!relevant[u].empty()) users.push_back(u);

    std::vector<std::vector<int>> ranked(users.size());
    std::vector<std::vector<int>> rel(users.size());
    for_each_index(static_cast<int>(users.size()), mode, cfg.threads, [&](int ui) {
      int u = users[ui];
      rel[ui] = relevant[u];
      const auto& train_pos = graph.interactions.user_items[u];
      std::vector<LabeledPair> cand;
      cand.reserve(split.num_items);
      for (int v = 0; v < split.num_items; ++v) {
        if (std::binary_search(train_pos.begin(), train_pos.end(), v)) continue;
        cand.push_back(LabeledPair{u, v, 0});
      }
      std::vector<ScoredPair> scores = score_pairs(store, graph, cand, cfg, ExecMode::Serial);
      std::sort(scores.begin(), scores.end(), [](const ScoredPair& x, const ScoredPair& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.item < y.item;  // deterministic ties
      });
      int top = std::min<int>(k, static_cast<int>(scores.size()));
      ranked[ui].reserve(top);
      for (int i = 0; i < top; ++i) ranked[ui].push_back(scores[i].item);
    });
    RankingMetrics rm = recall_ndcg_at_k(ranked, rel, k);
    report.recall_at_k = rm.recall;
    report.ndcg_at_k = rm.ndcg;
    report.num_ranked_users = rm.users;
    report.has_ranking = true;
  }
  return report;
}

}  // namespace mgacl
