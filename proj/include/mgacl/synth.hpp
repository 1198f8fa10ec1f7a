#pragma once

#include <cstdint>
#include <string>

#include "mgacl/ingest.hpp"

namespace mgacl {

// Clustered implicit-feedback dataset with an aligned KG: users and items
// share cluster structure, item entities link to per-cluster hub and
// attribute entities, plus a little cross-cluster noise.
struct SynthConfig {
  int users = 200;
  int items = 200;
  int entities = 500;  // items + clusters(hubs) + attributes
  int clusters = 4;
  int clicks_per_user = 20;
  double in_cluster = 0.9;  // probability a click stays in the user's cluster
  double eval_fraction = 0.2;
  int neg_ratio = 1;
  uint64_t seed = 7;
};

struct SynthData {
  FusedGraph graph;   // interactions = train positives only
  DatasetSplit split;
};

SynthData make_clustered_dataset(const SynthConfig& cfg);

// The same dataset as raw tsv files (interactions/kg/alignment) for the CLI.
void write_synth_tsv(const SynthConfig& cfg, const std::string& dir);

}  // namespace mgacl
