#include "mgacl/synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mgacl/rng.hpp"

namespace mgacl {

namespace {

struct SynthRaw {
  std::vector<std::pair<int, int>> clicks;  // (user, item)
  std::vector<Triple> triples;
  int num_entities = 0;
  int num_relations = 4;  // category, attribute, noise, attribute-hub link
};

SynthRaw generate(const SynthConfig& cfg) {
  if (cfg.entities < cfg.items + cfg.clusters + cfg.clusters)
    throw ConfigError("synth: entities must cover items + hubs + some attributes");
  SynthRaw out;
  std::mt19937_64 rng = make_rng({cfg.seed, stream::kSynth});

  int hub_base = cfg.items;                      // entities [0, items) mirror items
  int attr_base = cfg.items + cfg.clusters;      // then one hub per cluster
  int num_attrs = cfg.entities - attr_base;      // the rest are attributes
  out.num_entities = cfg.entities;

  auto cluster_of_item = [&](int v) { return v % cfg.clusters; };
  auto cluster_of_user = [&](int u) { return u % cfg.clusters; };
  // Attributes are assigned to clusters round-robin.
  auto attrs_in_cluster = [&](int c) {
    std::vector<int> ids;
    for (int a = 0; a < num_attrs; ++a)
      if (a % cfg.clusters == c) ids.push_back(attr_base + a);
    return ids;
  };

  // KG: every item entity points at its cluster hub and two same-cluster
  // attributes; attributes link to their hub; ~10% of items get a noise edge.
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int v = 0; v < cfg.items; ++v) {
    int c = cluster_of_item(v);
    out.triples.push_back(Triple{v, 0, hub_base + c});
    std::vector<int> attrs = attrs_in_cluster(c);
    for (int pick = 0; pick < 2 && !attrs.empty(); ++pick) {
      std::uniform_int_distribution<size_t> d(0, attrs.size() - 1);
      out.triples.push_back(Triple{v, 1, attrs[d(rng)]});
    }
    if (unif(rng) < 0.1) {
      std::uniform_int_distribution<int> d(attr_base, cfg.entities - 1);
      out.triples.push_back(Triple{v, 2, d(rng)});
    }
  }
  for (int a = 0; a < num_attrs; ++a)
    out.triples.push_back(Triple{attr_base + a, 3, hub_base + (a % cfg.clusters)});

  // Interactions: clicks mostly stay inside the user's cluster.
  std::vector<std::vector<int>> items_by_cluster(cfg.clusters);
  for (int v = 0; v < cfg.items; ++v) items_by_cluster[cluster_of_item(v)].push_back(v);
  for (int u = 0; u < cfg.users; ++u) {
    int c = cluster_of_user(u);
    std::set<int> chosen;
    int attempts = 0;
    while (static_cast<int>(chosen.size()) < cfg.clicks_per_user &&
           attempts < cfg.clicks_per_user * 50) {
      ++attempts;
      int v;
      if (unif(rng) < cfg.in_cluster) {
        const auto& pool = items_by_cluster[c];
        std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
        v = pool[d(rng)];
      } else {
        std::uniform_int_distribution<int> d(0, cfg.items - 1);
        v = d(rng);
      }
      chosen.insert(v);
    }
    for (int v : chosen) out.clicks.emplace_back(u, v);
  }
  return out;
}

}  // namespace

SynthData make_clustered_dataset(const SynthConfig& cfg) {
  SynthRaw raw = generate(cfg);

  SynthData out;
  out.split.num_users = cfg.users;
  out.split.num_items = cfg.items;
  std::mt19937_64 split_rng = make_rng({cfg.seed, stream::kSplit});
  auto [train, eval] = split_pairs_by_user(raw.clicks, cfg.users, cfg.eval_fraction, split_rng);
  out.split.train = std::move(train);
  out.split.eval = std::move(eval);
  std::mt19937_64 neg_rng = make_rng({cfg.seed, stream::kNegatives});
  sample_negatives(out.split, cfg.neg_ratio, neg_rng);

  std::vector<std::pair<int, int>> train_edges;
  for (const auto& p : out.split.train)
    if (p.label == 1) train_edges.emplace_back(p.user, p.item);
  InteractionGraph ig = InteractionGraph::from_edges(cfg.users, cfg.items, train_edges);
  KnowledgeGraph kg =
      KnowledgeGraph::from_triples(raw.num_entities, raw.num_relations, raw.triples);
  std::vector<std::pair<int, int>> alignment;
  for (int v = 0; v < cfg.items; ++v) alignment.emplace_back(v, v);
  out.graph = build_fused_graph(std::move(ig), std::move(kg), alignment);
  return out;
}

void write_synth_tsv(const SynthConfig& cfg, const std::string& dir) {
  SynthRaw raw = generate(cfg);
  {
    std::ofstream f(dir + "/interactions.tsv");
    if (!f) throw DataError("cannot write " + dir + "/interactions.tsv");
    for (auto [u, v] : raw.clicks) f << "u" << u << "\ti" << v << "\t5\n";
  }
  {
    std::ofstream f(dir + "/kg.tsv");
    if (!f) throw DataError("cannot write " + dir + "/kg.tsv");
    for (const Triple& t : raw.triples)
      f << "e" << t.head << "\tr" << t.rel << "\te" << t.tail << "\n";
  }
  {
    std::ofstream f(dir + "/alignment.tsv");
    if (!f) throw DataError("cannot write " + dir + "/alignment.tsv");
    for (int v = 0; v < cfg.items; ++v) f << "i" << v << "\te" << v << "\n";
  }
}

}  // namespace mgacl
