#pragma once

#include <vector>

#include "mgacl/graph.hpp"
#include "mgacl/tape.hpp"

namespace mgacl {

struct AblationFlags {
  bool rv = true;   // user relation view
  bool ev = true;   // user entity view
  bool gcn = true;  // item neighborhood encoder
  bool cl = true;   // all contrastive losses
};

// Tape handles for one user's multi-view representation. o_u = u + o_r + o_e
// (views dropped under ablation); weight nodes are kept per hop for
// diagnostics and normalization checks.
struct UserRepNodes {
  NodeId u = -1;    // base user embedding
  NodeId o_u = -1;
  NodeId o_r = -1;  // -1 when the relation view is ablated
  NodeId o_e = -1;  // -1 when the entity view is ablated
  std::vector<NodeId> rel_weights;       // per hop, softmax over M triples
  std::vector<NodeId> ent_weights_user;  // per hop
  std::vector<NodeId> ent_weights_item;  // per hop
  std::vector<NodeId> o_r_partial;       // per hop
  std::vector<NodeId> o_e_partial;       // per hop
};

// Softmax over u . r_i for the sampled triples.
NodeId relation_attention(Tape& t, NodeId u_vec, const PreferenceSet& prefs);

// Softmaxes over u . e_i and v . e_i where e_i is the tail entity embedding.
std::pair<NodeId, NodeId> entity_attention(Tape& t, NodeId u_vec, NodeId v_vec,
                                           const PreferenceSet& prefs);

// Weighted sum of tail embeddings for one hop.
NodeId aggregate_relation_view(Tape& t, NodeId weights, const PreferenceSet& prefs);

// Sum over tails weighted by the two entity-view softmaxes (weights sum to 2).
NodeId aggregate_entity_view(Tape& t, NodeId weights_user, NodeId weights_item,
                             const PreferenceSet& prefs);

// Full multi-view distillation: per-hop attention + aggregation, then the
// sum aggregator over base embedding and both views. `item_entity` is the
// entity of the target item (conditioning the entity view).
UserRepNodes build_user_rep(Tape& t, int user, int item_entity,
                            const std::vector<PreferenceSet>& prefs_per_hop,
                            const AblationFlags& flags);

// Value-level snapshot for inspection and serialization.
struct UserViews {
  std::vector<double> o_u, o_r, o_e;
  std::vector<std::vector<double>> rel_weights, ent_weights_user, ent_weights_item;
  std::vector<std::vector<double>> o_r_partials, o_e_partials;
};

UserViews extract_user_views(const Tape& t, const UserRepNodes& n);

}  // namespace mgacl
