#include "mgacl/itemrep.hpp"

namespace mgacl {

ItemTree sample_receptive_tree(const FusedGraph& g, int root_entity, int depth, int N,
                               std::mt19937_64& rng) {
  if (depth < 1) throw ConfigError("receptive depth must be >= 1, got " + std::to_string(depth));
  ItemTree tree;
  tree.depth = depth;
  tree.branching = N;
  tree.nodes.push_back(ItemTree::Node{root_entity, -1, 0, {}});
  size_t level_begin = 0;
  for (int level = 0; level < depth; ++level) {
    size_t level_end = tree.nodes.size();
    for (size_t i = level_begin; i < level_end; ++i) {
      SampledItemNeighborhood nb = sample_item_neighborhood(g, tree.nodes[i].entity, N, rng);
      for (const Triple& tr : nb.triples) {
        tree.nodes.push_back(ItemTree::Node{tr.tail, tr.rel, level + 1, {}});
        tree.nodes[i].children.push_back(static_cast<int>(tree.nodes.size()) - 1);
      }
    }
    level_begin = level_end;
  }
  return tree;
}

NodeId triple_score(Tape& t, NodeId u_vec, NodeId r_vec, NodeId t_vec) {
  NodeId s = t.add(t.add(u_vec, r_vec), t_vec);
  return t.add(t.dot(t.param_tensor(Param::GcnW), s), t.param_tensor(Param::GcnB));
}

NodeId normalize_scores(Tape& t, std::span<const NodeId> scores) {
  return t.softmax(t.stack_scalars(scores));
}

NodeId aggregate_neighborhood(Tape& t, NodeId weights, std::span<const NodeId> child_vecs) {
  return t.weighted_combine(weights, child_vecs);
}

ItemRepNodes build_item_rep(Tape& t, NodeId u_vec, const ItemTree& tree,
                            const AblationFlags& flags) {
  ItemRepNodes out;
  if (!flags.gcn) {
    out.o_c = t.param_row(Param::EntityEmb, tree.nodes[0].entity);
    out.o_s = t.leaf(Array(t.value(out.o_c).shape));
    out.o_v = t.add(out.o_c, out.o_s);
    return out;
  }

  std::vector<NodeId> value(tree.nodes.size(), -1);
  std::vector<NodeId> neighborhood(tree.nodes.size(), -1);
  // Update inner levels from the deepest one inward; leaves keep raw embeddings.
  for (int i = static_cast<int>(tree.nodes.size()) - 1; i >= 0; --i) {
    const ItemTree::Node& node = tree.nodes[i];
    NodeId self = t.param_row(Param::EntityEmb, node.entity);
    if (node.children.empty()) {
      value[i] = self;
      continue;
    }
    std::vector<NodeId> scores, child_vecs;
    scores.reserve(node.children.size());
    child_vecs.reserve(node.children.size());
    for (int c : node.children) {
      NodeId rel = t.param_row(Param::RelationEmb, tree.nodes[c].rel_from_parent);
      scores.push_back(triple_score(t, u_vec, rel, value[c]));
      child_vecs.push_back(value[c]);
    }
    NodeId w = normalize_scores(t, scores);
    neighborhood[i] = aggregate_neighborhood(t, w, child_vecs);
    value[i] = t.add(neighborhood[i], self);
    if (i == 0) {
      out.o_c = self;
      out.o_s = neighborhood[i];
      out.o_v = value[i];
    }
    out.node_weights.push_back(w);
  }
  if (out.o_v < 0) {  // childless root: nothing to aggregate
    out.o_c = value[0];
    out.o_s = t.leaf(Array(t.value(out.o_c).shape));
    out.o_v = t.add(out.o_c, out.o_s);
    return out;
  }
  // Weights were gathered deepest-first; flip so the root comes first.
  std::reverse(out.node_weights.begin(), out.node_weights.end());
  return out;
}

ItemRepNodes propagate(Tape& t, const FusedGraph& g, NodeId u_vec, int item_entity, int depth,
                       int N, std::mt19937_64& rng, const AblationFlags& flags) {
  ItemTree tree = sample_receptive_tree(g, item_entity, depth, N, rng);
  return build_item_rep(t, u_vec, tree, flags);
}

ItemViews extract_item_views(const Tape& t, const ItemRepNodes& n) {
  ItemViews v;
  v.o_v = t.value(n.o_v).data;
  v.o_c = t.value(n.o_c).data;
  v.o_s = t.value(n.o_s).data;
  for (NodeId id : n.node_weights) v.node_weights.push_back(t.value(id).data);
  return v;
}

}  // namespace mgacl
