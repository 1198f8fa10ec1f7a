#pragma once

#include <random>
#include <utility>
#include <vector>

#include "mgacl/array.hpp"

namespace mgacl {

// User-item bipartite graph; an edge means an observed click (y_uv = 1).
struct InteractionGraph {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::pair<int, int>> edges;       // sorted unique (user, item)
  std::vector<std::vector<int>> user_items;     // sorted per user
  std::vector<std::vector<int>> item_users;     // sorted per item

  static InteractionGraph from_edges(int num_users, int num_items,
                                     std::vector<std::pair<int, int>> edges);
  bool has(int user, int item) const;
};

struct Triple {
  int head = 0;
  int rel = 0;
  int tail = 0;
  bool operator==(const Triple&) const = default;
};

// Directed multigraph of (head, relation, tail) triples; duplicates retained.
struct KnowledgeGraph {
  int num_entities = 0;
  int num_relations = 0;
  std::vector<Triple> triples;
  std::vector<std::vector<int>> head_index;  // entity -> indices into triples

  static KnowledgeGraph from_triples(int num_entities, int num_relations,
                                     std::vector<Triple> triples);
};

// Interaction graph merged with the KG via item-entity alignment. Items
// missing from the KG get fresh isolated entities; click_relation is the
// reserved relation id for the synthetic user-click edges.
struct FusedGraph {
  InteractionGraph interactions;
  KnowledgeGraph kg;                  // num_entities includes appended isolated entities
  std::vector<int> item_entity;       // item -> entity, complete after build
  int click_relation = -1;

  int relation_rows() const { return click_relation + 1; }
};

// alignment: (item, entity) pairs; must be injective on its targets.
FusedGraph build_fused_graph(InteractionGraph interactions, KnowledgeGraph kg,
                             const std::vector<std::pair<int, int>>& alignment);

// Triple set sampled for one user at one hop; heads of hop-0 triples are the
// user id itself (the synthetic click triples).
struct PreferenceSet {
  int user = 0;
  int hop = 0;
  std::vector<Triple> triples;  // exactly M after sampling
};

struct SampledItemNeighborhood {
  int entity = 0;
  int hop = 0;
  std::vector<Triple> triples;  // exactly N, every head == entity
};

// Exact p-step forward image of the user's clicked entities (sorted, unique).
// p = 0 yields the clicked items' entities themselves.
std::vector<int> entity_frontier(const FusedGraph& g, int user, int p);

// Uniform sample of M triples whose heads lie in frontier(p-1); without
// replacement when enough candidates exist, with replacement otherwise.
// Hop 0 samples the synthetic (user, click_relation, clicked-entity) triples.
PreferenceSet sample_preference_set(const FusedGraph& g, int user, int p, int M,
                                    std::mt19937_64& rng);

// As above over one entity's outgoing triples; an entity with no triples
// yields N copies of a (entity, click_relation, entity) self-loop.
SampledItemNeighborhood sample_item_neighborhood(const FusedGraph& g, int entity, int N,
                                                 std::mt19937_64& rng);

}  // namespace mgacl
