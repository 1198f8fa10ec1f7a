#pragma once

#include <random>
#include <vector>

#include "mgacl/graph.hpp"
#include "mgacl/tape.hpp"
#include "mgacl/userrep.hpp"

namespace mgacl {

// Sampled receptive field around an item's entity: node 0 is the root, every
// node above the deepest level has exactly N children.
struct ItemTree {
  struct Node {
    int entity = 0;
    int rel_from_parent = -1;  // -1 at the root
    int level = 0;
    std::vector<int> children;
  };
  std::vector<Node> nodes;
  int depth = 0;
  int branching = 0;
};

ItemTree sample_receptive_tree(const FusedGraph& g, int root_entity, int depth, int N,
                               std::mt19937_64& rng);

// Tape handles for one item representation; o_v = o_c + o_s.
struct ItemRepNodes {
  NodeId o_v = -1;
  NodeId o_c = -1;  // central: raw root entity embedding
  NodeId o_s = -1;  // neighborhood aggregate at the root
  std::vector<NodeId> node_weights;  // softmax per internal tree node (root first)
};

// pi = w . (u + r + t) + b
NodeId triple_score(Tape& t, NodeId u_vec, NodeId r_vec, NodeId t_vec);

// Softmax over the N sampled scores of one neighborhood.
NodeId normalize_scores(Tape& t, std::span<const NodeId> scores);

// Weighted sum of (updated) child vectors.
NodeId aggregate_neighborhood(Tape& t, NodeId weights, std::span<const NodeId> child_vecs);

// Outside-in propagation over the sampled tree: deepest nodes keep their raw
// embeddings, every inner node is updated once as neighborhood + own
// embedding; the child vector feeding both the score and the aggregation is
// the child's updated one. With the encoder ablated the item representation
// collapses to the raw root embedding.
ItemRepNodes build_item_rep(Tape& t, NodeId u_vec, const ItemTree& tree,
                            const AblationFlags& flags);

// Convenience: sample a tree and run the encoder.
ItemRepNodes propagate(Tape& t, const FusedGraph& g, NodeId u_vec, int item_entity, int depth,
                       int N, std::mt19937_64& rng, const AblationFlags& flags = {});

struct ItemViews {
  std::vector<double> o_v, o_c, o_s;
  std::vector<std::vector<double>> node_weights;
};

ItemViews extract_item_views(const Tape& t, const ItemRepNodes& n);

}  // namespace mgacl
