#include "mgacl/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace mgacl {

InteractionGraph InteractionGraph::from_edges(int num_users, int num_items,
                                              std::vector<std::pair<int, int>> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  InteractionGraph g;
  g.num_users = num_users;
  g.num_items = num_items;
  g.user_items.resize(num_users);
  g.item_users.resize(num_items);
  for (auto [u, v] : edges) {
    if (u < 0 || u >= num_users || v < 0 || v >= num_items)
      throw DataError("interaction edge (" + std::to_string(u) + "," + std::to_string(v) +
                      ") out of range");
    g.user_items[u].push_back(v);
    g.item_users[v].push_back(u);
  }
  g.edges = std::move(edges);
  return g;
}

bool InteractionGraph::has(int user, int item) const {
  if (user < 0 || user >= num_users) return false;
  const auto& items = user_items[user];
  return std::binary_search(items.begin(), items.end(), item);
}

KnowledgeGraph KnowledgeGraph::from_triples(int num_entities, int num_relations,
                                            std::vector<Triple> triples) {
  KnowledgeGraph g;
  g.num_entities = num_entities;
  g.num_relations = num_relations;
  g.head_index.resize(num_entities);
  for (size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    if (t.head < 0 || t.head >= num_entities || t.tail < 0 || t.tail >= num_entities ||
        t.rel < 0 || t.rel >= num_relations)
      throw DataError("triple (" + std::to_string(t.head) + "," + std::to_string(t.rel) + "," +
                      std::to_string(t.tail) + ") out of range");
    g.head_index[t.head].push_back(static_cast<int>(i));
  }
  g.triples = std::move(triples);
  return g;
}

FusedGraph build_fused_graph(InteractionGraph interactions, KnowledgeGraph kg,
                             const std::vector<std::pair<int, int>>& alignment) {
  FusedGraph f;
  f.item_entity.assign(interactions.num_items, -1);
  std::vector<int> entity_owner(kg.num_entities, -1);
  for (auto [item, entity] : alignment) {
    if (item < 0 || item >= interactions.num_items)
      throw DataError("alignment item " + std::to_string(item) + " out of range");
    if (entity < 0 || entity >= kg.num_entities)
      throw DataError("alignment entity " + std::to_string(entity) + " out of range");
    if (f.item_entity[item] != -1)
      throw DataError("alignment conflict: item " + std::to_string(item) + " mapped twice");
    if (entity_owner[entity] != -1)
      throw DataError("alignment conflict: items " + std::to_string(entity_owner[entity]) +
                      " and " + std::to_string(item) + " both map to entity " +
                      std::to_string(entity));
    f.item_entity[item] = entity;
    entity_owner[entity] = item;
  }
  // Items absent from the KG keep their supervision via fresh isolated entities.
  for (int v = 0; v < interactions.num_items; ++v) {
    if (f.item_entity[v] == -1) {
      f.item_entity[v] = kg.num_entities;
      kg.num_entities += 1;
      kg.head_index.emplace_back();
    }
  }
  f.click_relation = kg.num_relations;
  f.interactions = std::move(interactions);
  f.kg = std::move(kg);
  return f;
}

std::vector<int> entity_frontier(const FusedGraph& g, int user, int p) {
  if (user < 0 || user >= g.interactions.num_users)
    throw NotFoundError("unknown user " + std::to_string(user));
  if (p < 0) throw ConfigError("hop must be >= 0, got " + std::to_string(p));
  std::vector<int> cur;
  cur.reserve(g.interactions.user_items[user].size());
  for (int v : g.interactions.user_items[user]) cur.push_back(g.item_entity[v]);
  std::sort(cur.begin(), cur.end());
  cur.erase(std::unique(cur.begin(), cur.end()), cur.end());
  for (int step = 0; step < p; ++step) {
    std::vector<int> next;
    for (int e : cur)
      for (int ti : g.kg.head_index[e]) next.push_back(g.kg.triples[ti].tail);
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    cur = std::move(next);
  }
  return cur;
}

namespace {

// k uniform picks from [0, n): a uniform subset when n >= k (Floyd's
// algorithm), independent draws with replacement otherwise.
std::vector<long> sample_indices(long n, int k, std::mt19937_64& rng) {
  std::vector<long> out;
  out.reserve(k);
  if (n >= k) {
    for (long j = n - k; j < n; ++j) {
      std::uniform_int_distribution<long> d(0, j);
      long t = d(rng);
      if (std::find(out.begin(), out.end(), t) != out.end())
        out.push_back(j);
      else
        out.push_back(t);
    }
  } else {
    std::uniform_int_distribution<long> d(0, n - 1);
    for (int i = 0; i < k; ++i) out.push_back(d(rng));
  }
  return out;
}

}  // namespace

PreferenceSet sample_preference_set(const FusedGraph& g, int user, int p, int M,
                                    std::mt19937_64& rng) {
  if (M < 1) throw ConfigError("preference set size must be >= 1, got " + std::to_string(M));
  PreferenceSet out;
  out.user = user;
  out.hop = p;
  out.triples.reserve(M);
  if (p == 0) {
    std::vector<int> clicked = entity_frontier(g, user, 0);
    if (clicked.empty())
      throw ColdStartError("user " + std::to_string(user) + " has no click history");
    for (long idx : sample_indices(static_cast<long>(clicked.size()), M, rng))
      out.triples.push_back(Triple{user, g.click_relation, clicked[idx]});
    return out;
  }
  std::vector<int> frontier = entity_frontier(g, user, p - 1);
  // Candidates are all triples headed in the frontier; prefix sums let us
  // index into them without materializing the list.
  std::vector<long> prefix(frontier.size() + 1, 0);
  for (size_t i = 0; i < frontier.size(); ++i)
    prefix[i + 1] = prefix[i] + static_cast<long>(g.kg.head_index[frontier[i]].size());
  long total = prefix.back();
  if (total == 0)
    throw ColdStartError("user " + std::to_string(user) + " has no hop-" + std::to_string(p) +
                         " candidate triples");
  for (long idx : sample_indices(total, M, rng)) {
    size_t e = std::upper_bound(prefix.begin(), prefix.end(), idx) - prefix.begin() - 1;
    int ti = g.kg.head_index[frontier[e]][idx - prefix[e]];
    out.triples.push_back(g.kg.triples[ti]);
  }
  return out;
}

SampledItemNeighborhood sample_item_neighborhood(const FusedGraph& g, int entity, int N,
                                                 std::mt19937_64& rng) {
  if (N < 1) throw ConfigError("neighborhood size must be >= 1, got " + std::to_string(N));
  if (entity < 0 || entity >= g.kg.num_entities)
    throw NotFoundError("unknown entity " + std::to_string(entity));
  SampledItemNeighborhood out;
  out.entity = entity;
  out.triples.reserve(N);
  const std::vector<int>& cand = g.kg.head_index[entity];
  if (cand.empty()) {
    // Self-loops keep the neighborhood aggregation away from empty sums.
    out.triples.assign(N, Triple{entity, g.click_relation, entity});
    return out;
  }
  for (long idx : sample_indices(static_cast<long>(cand.size()), N, rng))
    out.triples.push_back(g.kg.triples[cand[idx]]);
  return out;
}

}  // namespace mgacl
