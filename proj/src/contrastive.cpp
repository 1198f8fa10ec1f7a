#include "mgacl/contrastive.hpp"

namespace mgacl {

NodeId info_nce_sims(Tape& t, NodeId positive_sim, std::span<const NodeId> negative_sims,
                     double tau) {
  if (tau <= 0.0) throw ConfigError("temperature must be > 0, got " + std::to_string(tau));
  std::vector<NodeId> logits;
  logits.reserve(negative_sims.size() + 1);
  logits.push_back(positive_sim);
  logits.insert(logits.end(), negative_sims.begin(), negative_sims.end());
  return t.neg_log_softmax(t.scale(t.stack_scalars(logits), 1.0 / tau), 0);
}

NodeId info_nce(Tape& t, NodeId anchor, NodeId positive,
                std::span<const std::pair<NodeId, NodeId>> negative_pairs, double tau) {
  NodeId pos = t.dot(anchor, positive);
  std::vector<NodeId> sims;
  sims.reserve(negative_pairs.size());
  for (const auto& [a, b] : negative_pairs) sims.push_back(t.dot(a, b));
  return info_nce_sims(t, pos, sims, tau);
}

namespace {

NodeId sum_or_zero(Tape& t, const std::vector<NodeId>& terms) {
  if (terms.empty()) return t.leaf(Array::scalar(0.0));
  NodeId acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return acc;
}

}  // namespace

CLLossNodes build_cl_losses(Tape& t, const BatchViewNodes& batch,
                            const std::function<bool(int, int)>& interacts,
                            const AblationFlags& flags, double tau) {
  const auto& ex = batch.ex;
  size_t n = ex.size();

  // Lazily shared base-embedding similarity matrix over non-interacting pairs.
  std::vector<NodeId> sim(n * n, -1);
  auto base_sim = [&](size_t i, size_t j) {
    NodeId& s = sim[i * n + j];
    if (s < 0) s = t.dot(ex[i].e_u, ex[j].e_v);
    return s;
  };
  auto negatives_for_user = [&](size_t i) {
    std::vector<NodeId> negs;
    for (size_t j = 0; j < n; ++j)
      if (ex[j].live && !interacts(ex[i].user, ex[j].item)) negs.push_back(base_sim(i, j));
    return negs;
  };
  auto negatives_for_item = [&](size_t j) {
    std::vector<NodeId> negs;
    for (size_t i = 0; i < n; ++i)
      if (ex[i].live && !interacts(ex[i].user, ex[j].item)) negs.push_back(base_sim(i, j));
    return negs;
  };

  CLLossNodes out;

  // Intra level: the two user views and the two item components as positives.
  {
    std::vector<NodeId> user_terms, item_terms;
    for (size_t i = 0; i < n; ++i) {
      if (!ex[i].live) continue;
      if (flags.rv && flags.ev)
        user_terms.push_back(
            info_nce_sims(t, t.dot(ex[i].o_r, ex[i].o_e), negatives_for_user(i), tau));
      if (flags.gcn)
        item_terms.push_back(
            info_nce_sims(t, t.dot(ex[i].o_s, ex[i].o_c), negatives_for_item(i), tau));
    }
    out.intra =
        t.scale(t.add(sum_or_zero(t, user_terms), sum_or_zero(t, item_terms)), 0.5);
  }

  // Inter level: clean vs dropout-perturbed representations.
  {
    std::vector<NodeId> user_terms, item_terms;
    for (size_t i = 0; i < n; ++i) {
      if (!ex[i].live) continue;
      user_terms.push_back(
          info_nce_sims(t, t.dot(ex[i].o_u, ex[i].o_u_hat), negatives_for_user(i), tau));
      item_terms.push_back(
          info_nce_sims(t, t.dot(ex[i].o_v, ex[i].o_v_hat), negatives_for_item(i), tau));
    }
    out.inter =
        t.scale(t.add(sum_or_zero(t, user_terms), sum_or_zero(t, item_terms)), 0.5);
  }

  // Interaction level: each interacting pair against the user's in-batch
  // non-interacted items, scored with the final representations.
  {
    std::vector<NodeId> terms;
    for (size_t i = 0; i < n; ++i) {
      if (!ex[i].live || ex[i].label != 1) continue;
      std::vector<NodeId> negs;
      for (size_t j = 0; j < n; ++j)
        if (ex[j].live && !interacts(ex[i].user, ex[j].item))
          negs.push_back(t.dot(ex[i].o_u, ex[j].o_v));
      terms.push_back(info_nce_sims(t, t.dot(ex[i].o_u, ex[i].o_v), negs, tau));
    }
    out.interaction = sum_or_zero(t, terms);
  }

  return out;
}

}  // namespace mgacl
