#include "mgacl/userrep.hpp"

namespace mgacl {

namespace {

std::vector<int> relation_ids(const PreferenceSet& p) {
  std::vector<int> out;
  out.reserve(p.triples.size());
  for (const Triple& t : p.triples) out.push_back(t.rel);
  return out;
}

std::vector<int> tail_ids(const PreferenceSet& p) {
  std::vector<int> out;
  out.reserve(p.triples.size());
  for (const Triple& t : p.triples) out.push_back(t.tail);
  return out;
}

}  // namespace

NodeId relation_attention(Tape& t, NodeId u_vec, const PreferenceSet& prefs) {
  if (prefs.triples.empty()) throw ColdStartError("relation_attention: empty preference set");
  NodeId rels = t.param_rows(Param::RelationEmb, relation_ids(prefs));
  return t.softmax(t.matvec(rels, u_vec));
}

std::pair<NodeId, NodeId> entity_attention(Tape& t, NodeId u_vec, NodeId v_vec,
                                           const PreferenceSet& prefs) {
  if (prefs.triples.empty()) throw ColdStartError("entity_attention: empty preference set");
  NodeId tails = t.param_rows(Param::EntityEmb, tail_ids(prefs));
  NodeId wu = t.softmax(t.matvec(tails, u_vec));
  NodeId wv = t.softmax(t.matvec(tails, v_vec));
  return {wu, wv};
}

NodeId aggregate_relation_view(Tape& t, NodeId weights, const PreferenceSet& prefs) {
  NodeId tails = t.param_rows(Param::EntityEmb, tail_ids(prefs));
  return t.weighted_sum(weights, tails);
}

NodeId aggregate_entity_view(Tape& t, NodeId weights_user, NodeId weights_item,
                             const PreferenceSet& prefs) {
  NodeId tails = t.param_rows(Param::EntityEmb, tail_ids(prefs));
  return t.weighted_sum(t.add(weights_user, weights_item), tails);
}

UserRepNodes build_user_rep(Tape& t, int user, int item_entity,
                            const std::vector<PreferenceSet>& prefs_per_hop,
                            const AblationFlags& flags) {
  UserRepNodes out;
  out.u = t.param_row(Param::UserEmb, user);
  NodeId v = t.param_row(Param::EntityEmb, item_entity);

  for (const PreferenceSet& prefs : prefs_per_hop) {
    if (flags.rv) {
      NodeId w = relation_attention(t, out.u, prefs);
      out.rel_weights.push_back(w);
      out.o_r_partial.push_back(aggregate_relation_view(t, w, prefs));
    }
    if (flags.ev) {
      auto [wu, wv] = entity_attention(t, out.u, v, prefs);
      out.ent_weights_user.push_back(wu);
      out.ent_weights_item.push_back(wv);
      out.o_e_partial.push_back(aggregate_entity_view(t, wu, wv, prefs));
    }
  }

  auto sum_partials = [&t](const std::vector<NodeId>& parts) {
    NodeId acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = t.add(acc, parts[i]);
    return acc;
  };

  NodeId acc = out.u;
  if (flags.rv && !out.o_r_partial.empty()) {
    out.o_r = sum_partials(out.o_r_partial);
    acc = t.add(acc, out.o_r);
  }
  if (flags.ev && !out.o_e_partial.empty()) {
    out.o_e = sum_partials(out.o_e_partial);
    acc = t.add(acc, out.o_e);
  }
  out.o_u = acc;
  return out;
}

UserViews extract_user_views(const Tape& t, const UserRepNodes& n) {
  UserViews v;
  v.o_u = t.value(n.o_u).data;
  if (n.o_r >= 0) v.o_r = t.value(n.o_r).data;
  if (n.o_e >= 0) v.o_e = t.value(n.o_e).data;
  for (NodeId id : n.rel_weights) v.rel_weights.push_back(t.value(id).data);
  for (NodeId id : n.ent_weights_user) v.ent_weights_user.push_back(t.value(id).data);
  for (NodeId id : n.ent_weights_item) v.ent_weights_item.push_back(t.value(id).data);
  for (NodeId id : n.o_r_partial) v.o_r_partials.push_back(t.value(id).data);
  for (NodeId id : n.o_e_partial) v.o_e_partials.push_back(t.value(id).data);
  return v;
}

}  // namespace mgacl
