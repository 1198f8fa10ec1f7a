#pragma once

#include <cstdint>
#include <istream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mgacl/graph.hpp"

namespace mgacl {

struct RawInteraction {
  std::string user_key;
  std::string item_key;
  double rating = 0.0;
};

// Lines are `user \t item \t rating`; malformed lines raise ParseError with
// the 1-based line number.
std::vector<RawInteraction> parse_interactions(std::istream& in);

struct ParsedKg {
  KnowledgeGraph kg;
  std::vector<std::string> entity_keys;    // id -> key, first-seen order
  std::vector<std::string> relation_keys;
  std::unordered_map<std::string, int> entity_id;
  std::unordered_map<std::string, int> relation_id;
};

// Lines are `head \t relation \t tail`; duplicate triples are retained.
ParsedKg parse_triples(std::istream& in);

// Lines are `item \t entity`; every entity key must exist in the KG.
std::vector<std::pair<std::string, int>> parse_alignment(std::istream& in, const ParsedKg& kg);

using KeyPair = std::pair<std::string, std::string>;

// Keep pairs with rating >= threshold as positives.
std::vector<KeyPair> binarize(std::span<const RawInteraction> raw, double threshold);

// Iteratively peel users and items of degree < k until fixpoint. Duplicates
// are collapsed; surviving pairs keep their first-occurrence order.
std::vector<KeyPair> k_core_filter(std::vector<KeyPair> pairs, int k);

struct LabeledPair {
  int user = 0;
  int item = 0;
  int label = 0;
};

struct DatasetSplit {
  int num_users = 0;
  int num_items = 0;
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> eval;
  std::vector<std::string> user_keys;  // empty for synthetic id-space data
  std::vector<std::string> item_keys;
};

// Per-user split of positives; a user's single positive always stays in
// train. Id-space core shared with the synthetic generator.
std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_pairs_by_user(
    const std::vector<std::pair<int, int>>& positives, int num_users, double eval_fraction,
    std::mt19937_64& rng);

// Assigns dense ids in first-seen order, then splits.
DatasetSplit split_train_eval(const std::vector<KeyPair>& positives, double eval_fraction,
                              std::mt19937_64& rng);

struct NegSampleStats {
  int users_skipped = 0;
  long sampled = 0;
};

// Appends `ratio` label-0 pairs per positive, drawn uniformly from items the
// user never interacted with (train or eval). Users who interacted with the
// whole catalog are skipped and counted.
NegSampleStats sample_negatives(DatasetSplit& split, int ratio, std::mt19937_64& rng);

// ---- prepared dataset (CLI cache) ----

struct PrepareParams {
  double threshold = 4.0;
  int kcore = 20;
  double eval_fraction = 0.2;
  int neg_ratio = 1;
  uint64_t seed = 42;
};

struct PreparedData {
  DatasetSplit split;
  FusedGraph graph;  // interactions = train positives only
  std::vector<std::string> entity_keys;
  std::vector<std::string> relation_keys;
  PrepareParams params;
  NegSampleStats neg_stats;
  int kg_entities = 0;  // before isolated-entity padding
};

PreparedData prepare_dataset(std::istream& interactions, std::istream& kg_stream,
                             std::istream& alignment, const PrepareParams& params);

void save_cache(const std::string& path, const PreparedData& data);
PreparedData load_cache(const std::string& path);

std::string manifest_json(const PreparedData& data);

}  // namespace mgacl
