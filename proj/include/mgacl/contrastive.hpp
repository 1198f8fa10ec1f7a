#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mgacl/tape.hpp"
#include "mgacl/userrep.hpp"

namespace mgacl {

// InfoNCE with the positive term included in the denominator, so the loss is
// 0 with no negatives and always non-negative.
//   -log( exp(a.p / tau) / (exp(a.p / tau) + sum_k exp(s_k / tau)) )
NodeId info_nce(Tape& t, NodeId anchor, NodeId positive,
                std::span<const std::pair<NodeId, NodeId>> negative_pairs, double tau);

// Same loss from precomputed similarity scalars (lets a batch share one
// similarity matrix across the three levels).
NodeId info_nce_sims(Tape& t, NodeId positive_sim, std::span<const NodeId> negative_sims,
                     double tau);

// One example's node handles on the batch tape.
struct BatchViewNodes {
  struct Example {
    int user = 0;
    int item = 0;
    int label = 0;
    bool live = true;     // false for skipped (cold-start) examples
    NodeId o_u = -1, o_r = -1, o_e = -1;
    NodeId o_v = -1, o_c = -1, o_s = -1;
    NodeId e_u = -1, e_v = -1;          // base embeddings
    NodeId o_u_hat = -1, o_v_hat = -1;  // dropout-perturbed representations
  };
  std::vector<Example> ex;
};

struct CLLossNodes {
  NodeId intra = -1;
  NodeId inter = -1;
  NodeId interaction = -1;
};

// interacts(u, v) decides negativity: in-batch pairs with no interaction are
// the negatives at every level. Intra/inter negatives are scored with base
// embeddings, the interaction level with the final representations.
CLLossNodes build_cl_losses(Tape& t, const BatchViewNodes& batch,
                            const std::function<bool(int, int)>& interacts,
                            const AblationFlags& flags, double tau);

struct CLLosses {
  double intra = 0.0;
  double inter = 0.0;
  double interaction = 0.0;
};

}  // namespace mgacl
