#include "mgacl/ingest.hpp"

#include "mgacl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <set>
#include <sstream>

namespace mgacl {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<RawInteraction> parse_interactions(std::istream& in) {
  std::vector<RawInteraction> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty())
      throw ParseError("interactions line " + std::to_string(lineno) +
                       ": expected `user\\titem\\trating`");
    char* end = nullptr;
    double rating = std::strtod(fields[2].c_str(), &end);
    if (end == fields[2].c_str() || *end != '\0')
      throw ParseError("interactions line " + std::to_string(lineno) + ": bad rating `" +
                       fields[2] + "`");
    out.push_back(RawInteraction{fields[0], fields[1], rating});
  }
  return out;
}

ParsedKg parse_triples(std::istream& in) {
  ParsedKg out;
  std::vector<Triple> triples;
  auto intern = [](std::unordered_map<std::string, int>& map, std::vector<std::string>& keys,
                   const std::string& k) {
    auto it = map.find(k);
    if (it != map.end()) return it->second;
    int id = static_cast<int>(keys.size());
    keys.push_back(k);
    map.emplace(k, id);
    return id;
  };
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw ParseError("kg line " + std::to_string(lineno) +
                       ": expected `head\\trelation\\ttail`");
    int h = intern(out.entity_id, out.entity_keys, fields[0]);
    int r = intern(out.relation_id, out.relation_keys, fields[1]);
    int t = intern(out.entity_id, out.entity_keys, fields[2]);
    triples.push_back(Triple{h, r, t});
  }
  out.kg = KnowledgeGraph::from_triples(static_cast<int>(out.entity_keys.size()),
                                        static_cast<int>(out.relation_keys.size()),
                                        std::move(triples));
  return out;
}

std::vector<std::pair<std::string, int>> parse_alignment(std::istream& in, const ParsedKg& kg) {
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw ParseError("alignment line " + std::to_string(lineno) +
                       ": expected `item\\tentity`");
    auto it = kg.entity_id.find(fields[1]);
    if (it == kg.entity_id.end())
      throw DataError("alignment line " + std::to_string(lineno) + ": entity `" + fields[1] +
                      "` not found in kg");
    out.emplace_back(fields[0], it->second);
  }
  return out;
}

std::vector<KeyPair> binarize(std::span<const RawInteraction> raw, double threshold) {
  std::vector<KeyPair> out;
  for (const RawInteraction& r : raw)
    if (r.rating >= threshold) out.emplace_back(r.user_key, r.item_key);
  return out;
}

std::vector<KeyPair> k_core_filter(std::vector<KeyPair> pairs, int k) {
  if (k < 1) throw ConfigError("k-core requires k >= 1, got " + std::to_string(k));
  // Dedup, keeping first occurrences.
  {
    std::set<KeyPair> seen;
    std::vector<KeyPair> unique;
    for (auto& p : pairs)
      if (seen.insert(p).second) unique.push_back(std::move(p));
    pairs = std::move(unique);
  }
  std::unordered_map<std::string, int> user_deg, item_deg;
  for (const auto& [u, v] : pairs) {
    user_deg[u] += 1;
    item_deg[v] += 1;
  }
  bool changed = true;
  std::vector<char> alive(pairs.size(), 1);
  while (changed) {
    changed = false;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (!alive[i]) continue;
      if (user_deg[pairs[i].first] < k || item_deg[pairs[i].second] < k) {
        alive[i] = 0;
        user_deg[pairs[i].first] -= 1;
        item_deg[pairs[i].second] -= 1;
        changed = true;
      }
    }
  }
  std::vector<KeyPair> out;
  for (size_t i = 0; i < pairs.size(); ++i)
    if (alive[i]) out.push_back(std::move(pairs[i]));
  return out;
}

std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_pairs_by_user(
    const std::vector<std::pair<int, int>>& positives, int num_users, double eval_fraction,
    std::mt19937_64& rng) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw ConfigError("eval fraction must be in (0,1), got " + std::to_string(eval_fraction));
  std::vector<std::vector<int>> by_user(num_users);
  for (const auto& [u, v] : positives) by_user[u].push_back(v);
  std::vector<LabeledPair> train, eval;
  for (int u = 0; u < num_users; ++u) {
    auto& items = by_user[u];
    long n = static_cast<long>(items.size());
    if (n == 0) continue;
    std::shuffle(items.begin(), items.end(), rng);
    long n_eval = std::min(static_cast<long>(std::floor(n * eval_fraction)), n - 1);
    for (long i = 0; i < n; ++i) {
      if (i < n_eval)
        eval.push_back(LabeledPair{u, items[i], 1});
      else
        train.push_back(LabeledPair{u, items[i], 1});
    }
  }
  return {std::move(train), std::move(eval)};
}

DatasetSplit split_train_eval(const std::vector<KeyPair>& positives, double eval_fraction,
                              std::mt19937_64& rng) {
  DatasetSplit out;
  std::unordered_map<std::string, int> user_id, item_id;
  std::vector<std::pair<int, int>> id_pairs;
  id_pairs.reserve(positives.size());
  for (const auto& [uk, vk] : positives) {
    auto [uit, unew] = user_id.try_emplace(uk, static_cast<int>(out.user_keys.size()));
    if (unew) out.user_keys.push_back(uk);
    auto [vit, vnew] = item_id.try_emplace(vk, static_cast<int>(out.item_keys.size()));
    if (vnew) out.item_keys.push_back(vk);
    id_pairs.emplace_back(uit->second, vit->second);
  }
  out.num_users = static_cast<int>(out.user_keys.size());
  out.num_items = static_cast<int>(out.item_keys.size());
  auto [train, eval] = split_pairs_by_user(id_pairs, out.num_users, eval_fraction, rng);
  out.train = std::move(train);
  out.eval = std::move(eval);
  return out;
}

NegSampleStats sample_negatives(DatasetSplit& split, int ratio, std::mt19937_64& rng) {
  if (ratio < 1) throw ConfigError("negative ratio must be >= 1, got " + std::to_string(ratio));
  NegSampleStats stats;
  std::vector<std::vector<int>> pos(split.num_users);
  for (const auto& p : split.train) pos[p.user].push_back(p.item);
  for (const auto& p : split.eval) pos[p.user].push_back(p.item);
  for (auto& v : pos) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::vector<char> warned(split.num_users, 0);
  std::uniform_int_distribution<int> pick(0, split.num_items - 1);
  auto draw_for = [&](std::vector<LabeledPair>& list, size_t n_positives) {
    for (size_t i = 0; i < n_positives; ++i) {
      const LabeledPair& p = list[i];
      if (static_cast<int>(pos[p.user].size()) >= split.num_items) {
        if (!warned[p.user]) {
          warned[p.user] = 1;
          stats.users_skipped += 1;
        }
        continue;
      }
      for (int r = 0; r < ratio; ++r) {
        int item;
        do {
          item = pick(rng);
        } while (std::binary_search(pos[p.user].begin(), pos[p.user].end(), item));
        list.push_back(LabeledPair{p.user, item, 0});
        stats.sampled += 1;
      }
    }
  };
  draw_for(split.train, split.train.size());
  draw_for(split.eval, split.eval.size());
  return stats;
}

PreparedData prepare_dataset(std::istream& interactions, std::istream& kg_stream,
                             std::istream& alignment, const PrepareParams& params) {
  std::vector<std::string> errs;
  if (!(params.eval_fraction > 0.0 && params.eval_fraction < 1.0))
    errs.push_back("eval fraction must be in (0,1)");
  if (params.kcore < 1) errs.push_back("kcore must be >= 1");
  if (params.neg_ratio < 1) errs.push_back("neg ratio must be >= 1");
  if (!errs.empty()) {
    std::string msg = "invalid prepare parameters:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }

  PreparedData out;
  out.params = params;
  auto raw = parse_interactions(interactions);
  auto positives = k_core_filter(binarize(raw, params.threshold), params.kcore);
  std::mt19937_64 split_rng = make_rng({params.seed, stream::kSplit});
  out.split = split_train_eval(positives, params.eval_fraction, split_rng);
  std::mt19937_64 neg_rng = make_rng({params.seed, stream::kNegatives});
  out.neg_stats = sample_negatives(out.split, params.neg_ratio, neg_rng);

  ParsedKg parsed = parse_triples(kg_stream);
  out.kg_entities = parsed.kg.num_entities;
  auto align_keys = parse_alignment(alignment, parsed);
  out.entity_keys = parsed.entity_keys;
  out.relation_keys = parsed.relation_keys;

  // Resolve alignment onto surviving item ids; entries for filtered-out items
  // are dropped.
  std::unordered_map<std::string, int> item_id;
  for (size_t i = 0; i < out.split.item_keys.size(); ++i)
    item_id.emplace(out.split.item_keys[i], static_cast<int>(i));
  std::vector<std::pair<int, int>> align_ids;
  for (const auto& [item_key, entity] : align_keys) {
    auto it = item_id.find(item_key);
    if (it != item_id.end()) align_ids.emplace_back(it->second, entity);
  }
  std::sort(align_ids.begin(), align_ids.end());

  // Train positives only feed the graph; eval interactions stay unseen.
  std::vector<std::pair<int, int>> train_edges;
  for (const auto& p : out.split.train)
    if (p.label == 1) train_edges.emplace_back(p.user, p.item);
  InteractionGraph ig =
      InteractionGraph::from_edges(out.split.num_users, out.split.num_items, train_edges);
  out.graph = build_fused_graph(std::move(ig), std::move(parsed.kg), align_ids);
  return out;
}

// ---- cache serialization ----

namespace {

constexpr char kCacheMagic[8] = {'M', 'G', 'C', 'L', 'D', 'A', 'T', '1'};

void put_i64(std::FILE* f, int64_t v) { std::fwrite(&v, sizeof(v), 1, f); }
void put_f64(std::FILE* f, double v) { std::fwrite(&v, sizeof(v), 1, f); }
void put_str(std::FILE* f, const std::string& s) {
  put_i64(f, static_cast<int64_t>(s.size()));
  std::fwrite(s.data(), 1, s.size(), f);
}
void put_strs(std::FILE* f, const std::vector<std::string>& v) {
  put_i64(f, static_cast<int64_t>(v.size()));
  for (const auto& s : v) put_str(f, s);
}
void put_pairs(std::FILE* f, const std::vector<LabeledPair>& v) {
  put_i64(f, static_cast<int64_t>(v.size()));
  for (const auto& p : v) {
    put_i64(f, p.user);
    put_i64(f, p.item);
    put_i64(f, p.label);
  }
}

int64_t get_i64(std::FILE* f) {
  int64_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw DataError("cache truncated");
  return v;
}
double get_f64(std::FILE* f) {
  double v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw DataError("cache truncated");
  return v;
}
std::string get_str(std::FILE* f) {
  int64_t n = get_i64(f);
  std::string s(static_cast<size_t>(n), '\0');
  if (n > 0 && std::fread(s.data(), 1, s.size(), f) != s.size())
    throw DataError("cache truncated");
  return s;
}
std::vector<std::string> get_strs(std::FILE* f) {
  int64_t n = get_i64(f);
  std::vector<std::string> v;
  v.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) v.push_back(get_str(f));
  return v;
}
std::vector<LabeledPair> get_pairs(std::FILE* f) {
  int64_t n = get_i64(f);
  std::vector<LabeledPair> v;
  v.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    LabeledPair p;
    p.user = static_cast<int>(get_i64(f));
    p.item = static_cast<int>(get_i64(f));
    p.label = static_cast<int>(get_i64(f));
    v.push_back(p);
  }
  return v;
}

}  // namespace

void save_cache(const std::string& path, const PreparedData& data) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write cache: " + path);
  std::fwrite(kCacheMagic, 1, sizeof(kCacheMagic), f);
  put_f64(f, data.params.threshold);
  put_i64(f, data.params.kcore);
  put_f64(f, data.params.eval_fraction);
  put_i64(f, data.params.neg_ratio);
  put_i64(f, static_cast<int64_t>(data.params.seed));
  put_i64(f, data.neg_stats.users_skipped);
  put_i64(f, data.neg_stats.sampled);
  put_i64(f, data.kg_entities);

  put_i64(f, data.split.num_users);
  put_i64(f, data.split.num_items);
  put_strs(f, data.split.user_keys);
  put_strs(f, data.split.item_keys);
  put_pairs(f, data.split.train);
  put_pairs(f, data.split.eval);

  put_strs(f, data.entity_keys);
  put_strs(f, data.relation_keys);
  put_i64(f, data.graph.kg.num_relations);
  put_i64(f, static_cast<int64_t>(data.graph.kg.triples.size()));
  for (const Triple& t : data.graph.kg.triples) {
    put_i64(f, t.head);
    put_i64(f, t.rel);
    put_i64(f, t.tail);
  }
  // item->entity for items aligned to real KG entities (isolated ones are
  // re-derived on load)
  std::vector<std::pair<int, int>> aligned;
  for (int v = 0; v < data.split.num_items; ++v)
    if (data.graph.item_entity[v] < data.kg_entities)
      aligned.emplace_back(v, data.graph.item_entity[v]);
  put_i64(f, static_cast<int64_t>(aligned.size()));
  for (auto [v, e] : aligned) {
    put_i64(f, v);
    put_i64(f, e);
  }
  std::fclose(f);
}

PreparedData load_cache(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot read cache: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kCacheMagic, 8) != 0) {
    std::fclose(f);
    throw DataError("bad cache magic in " + path);
  }
  PreparedData out;
  try {
    out.params.threshold = get_f64(f);
    out.params.kcore = static_cast<int>(get_i64(f));
    out.params.eval_fraction = get_f64(f);
    out.params.neg_ratio = static_cast<int>(get_i64(f));
    out.params.seed = static_cast<uint64_t>(get_i64(f));
    out.neg_stats.users_skipped = static_cast<int>(get_i64(f));
    out.neg_stats.sampled = get_i64(f);
    out.kg_entities = static_cast<int>(get_i64(f));

    out.split.num_users = static_cast<int>(get_i64(f));
    out.split.num_items = static_cast<int>(get_i64(f));
    out.split.user_keys = get_strs(f);
    out.split.item_keys = get_strs(f);
    out.split.train = get_pairs(f);
    out.split.eval = get_pairs(f);

    out.entity_keys = get_strs(f);
    out.relation_keys = get_strs(f);
    int num_relations = static_cast<int>(get_i64(f));
    int64_t ntrip = get_i64(f);
    std::vector<Triple> triples;
    triples.reserve(static_cast<size_t>(ntrip));
    for (int64_t i = 0; i < ntrip; ++i) {
      Triple t;
      t.head = static_cast<int>(get_i64(f));
      t.rel = static_cast<int>(get_i64(f));
      t.tail = static_cast<int>(get_i64(f));
      triples.push_back(t);
    }
    int64_t nalign = get_i64(f);
    std::vector<std::pair<int, int>> aligned;
    for (int64_t i = 0; i < nalign; ++i) {
      int v = static_cast<int>(get_i64(f));
      int e = static_cast<int>(get_i64(f));
      aligned.emplace_back(v, e);
    }
    std::vector<std::pair<int, int>> train_edges;
    for (const auto& p : out.split.train)
      if (p.label == 1) train_edges.emplace_back(p.user, p.item);
    InteractionGraph ig =
        InteractionGraph::from_edges(out.split.num_users, out.split.num_items, train_edges);
    KnowledgeGraph kg = KnowledgeGraph::from_triples(out.kg_entities, num_relations,
                                                     std::move(triples));
    out.graph = build_fused_graph(std::move(ig), std::move(kg), aligned);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return out;
}

std::string manifest_json(const PreparedData& d) {
  long train_pos = 0, eval_pos = 0;
  for (const auto& p : d.split.train) train_pos += p.label;
  for (const auto& p : d.split.eval) eval_pos += p.label;
  long interactions = train_pos + eval_pos;
  double avg_user = d.split.num_users ? static_cast<double>(interactions) / d.split.num_users : 0;
  double avg_item = d.split.num_items ? static_cast<double>(interactions) / d.split.num_items : 0;
  std::ostringstream os;
  os << "{\n"
     << "  \"seed\": " << d.params.seed << ",\n"
     << "  \"threshold\": " << d.params.threshold << ",\n"
     << "  \"kcore\": " << d.params.kcore << ",\n"
     << "  \"eval_fraction\": " << d.params.eval_fraction << ",\n"
     << "  \"neg_ratio\": " << d.params.neg_ratio << ",\n"
     << "  \"stats\": {\n"
     << "    \"users\": " << d.split.num_users << ",\n"
     << "    \"items\": " << d.split.num_items << ",\n"
     << "    \"interactions\": " << interactions << ",\n"
     << "    \"avg_user_clicks\": " << avg_user << ",\n"
     << "    \"avg_clicked_items\": " << avg_item << ",\n"
     << "    \"entities\": " << d.kg_entities << ",\n"
     << "    \"entities_with_isolated\": " << d.graph.kg.num_entities << ",\n"
     << "    \"relations\": " << d.graph.kg.num_relations << ",\n"
     << "    \"triples\": " << d.graph.kg.triples.size() << "\n"
     << "  },\n"
     << "  \"split\": {\n"
     << "    \"train_positives\": " << train_pos << ",\n"
     << "    \"eval_positives\": " << eval_pos << ",\n"
     << "    \"train_total\": " << d.split.train.size() << ",\n"
     << "    \"eval_total\": " << d.split.eval.size() << ",\n"
     << "    \"neg_sampled\": " << d.neg_stats.sampled << ",\n"
     << "    \"neg_users_skipped\": " << d.neg_stats.users_skipped << "\n"
     << "  }\n"
     << "}\n";
  return os.str();
}

}  // namespace mgacl
