#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mgacl/itemrep.hpp"
#include "mgacl/rng.hpp"
#include "mgacl/synth.hpp"

#ifndef MGACL_BUILD_ID
#define MGACL_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;

namespace mgacl::cli {

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << content;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void validate_or_die(const TrainConfig& cfg) {
  auto errs = cfg.validate();
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

int guarded(const char* what, const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return 1;
  }
}

MetricsReport run_eval(const PreparedData& data, const ParameterStore& store,
                       const TrainConfig& cfg) {
  return evaluate(store, data.graph, data.split, cfg, cfg.top_k, /*with_ranking=*/true,
                  cfg.mode);
}

// One train+eval cycle into run_dir; shared by cmd_train/cmd_sweep.
MetricsReport train_into(const PreparedData& data, const TrainConfig& cfg,
                         const std::string& run_dir, const std::string& command) {
  fs::create_directories(run_dir);
  write_file(run_dir + "/resolved_config.txt", resolved_config(cfg, command, "", run_dir));
  FitResult res = fit(cfg, data.split, data.graph);
  std::ostringstream log;
  for (const auto& epoch : res.history) log << epoch.to_json() << "\n";
  write_file(run_dir + "/train_log.jsonl", log.str());
  save_checkpoint(run_dir + "/checkpoint.bin", res.best_params);
  MetricsReport report = run_eval(data, res.best_params, cfg);
  write_file(run_dir + "/metrics.json", report.to_json() + "\n");
  write_file(run_dir + "/metrics_table.txt", report.to_table());
  return report;
}

}  // namespace

void apply_ablation(TrainConfig& cfg, const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    if (name == "rv") cfg.ablation.rv = false;
    else if (name == "ev") cfg.ablation.ev = false;
    else if (name == "gcn") cfg.ablation.gcn = false;
    else if (name == "cl") cfg.ablation.cl = false;
    else
      throw ConfigError("unknown ablation `" + name + "` (expected rv, ev, gcn or cl)");
  }
}

std::string resolved_config(const TrainConfig& cfg, const std::string& command,
                            const std::string& data, const std::string& out) {
  std::ostringstream os;
  os << "# resolved configuration, defaults materialized\n";
  os << "build_id=" << MGACL_BUILD_ID << "\n";
  os << "command=" << command << "\n";
  if (!data.empty()) os << "data=" << data << "\n";
  if (!out.empty()) os << "out=" << out << "\n";
  os << "lp=" << cfg.lp << "\n";
  os << "lh=" << cfg.lh << "\n";
  os << "M=" << cfg.M << "\n";
  os << "N=" << cfg.N << "\n";
  os << "temp=" << fmt_double(cfg.tau) << "\n";
  os << "lambda1=" << fmt_double(cfg.lambda1) << "\n";
  os << "lambda2=" << fmt_double(cfg.lambda2) << "\n";
  os << "dim=" << cfg.dim << "\n";
  os << "lr=" << fmt_double(cfg.lr) << "\n";
  os << "batch=" << cfg.batch_size << "\n";
  os << "epochs=" << cfg.epochs << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "drop-prob=" << fmt_double(cfg.drop_prob) << "\n";
  os << "neg-ratio=" << cfg.neg_ratio << "\n";
  std::string ablate;
  if (!cfg.ablation.rv) ablate += "rv,";
  if (!cfg.ablation.ev) ablate += "ev,";
  if (!cfg.ablation.gcn) ablate += "gcn,";
  if (!cfg.ablation.cl) ablate += "cl,";
  if (!ablate.empty()) ablate.pop_back();
  os << "ablate=" << ablate << "\n";
  os << "k=" << cfg.top_k << "\n";
  os << "eval-every=" << cfg.eval_every << "\n";
  os << "threads=" << cfg.threads << "\n";
  os << "serial=" << (cfg.mode == ExecMode::Serial ? 1 : 0) << "\n";
  return os.str();
}

int cmd_prepare(const PrepareArgs& args) {
  return guarded("prepare", [&]() {
    const std::vector<std::pair<std::string, std::string>> inputs = {
        {"interactions", args.interactions}, {"kg", args.kg}, {"alignment", args.alignment}};
    for (const auto& [label, path] : inputs) {
      if (!fs::exists(path)) {
        std::cerr << "prepare: " << label << " file not found: " << path << "\n";
        return 1;
      }
    }
    std::ifstream inter(args.interactions), kg(args.kg), align(args.alignment);
    PreparedData data = prepare_dataset(inter, kg, align, args.params);
    fs::create_directories(args.out);
    save_cache(args.out + "/cache.bin", data);
    write_file(args.out + "/manifest.json", manifest_json(data));
    std::cout << manifest_json(data);
    return 0;
  });
}

int cmd_train(const TrainArgs& args) {
  return guarded("train", [&]() {
    TrainConfig cfg = args.cfg;
    apply_ablation(cfg, args.ablate);
    validate_or_die(cfg);
    PreparedData data = load_cache(args.data + "/cache.bin");
    fs::create_directories(args.out);
    write_file(args.out + "/resolved_config.txt",
               resolved_config(cfg, "train", args.data, args.out));
    FitResult res = fit(cfg, data.split, data.graph);
    std::ostringstream log;
    for (const auto& epoch : res.history) log << epoch.to_json() << "\n";
    write_file(args.out + "/train_log.jsonl", log.str());
    save_checkpoint(args.out + "/checkpoint.bin", res.best_params);
    std::cout << "trained " << res.history.size() << " epochs; best eval auc "
              << (res.best_auc >= 0 ? fmt_double(res.best_auc) : "n/a") << " at epoch "
              << res.best_epoch << "\n";
    return 0;
  });
}

namespace {

nlohmann::json attention_trace(const PreparedData& data, const ParameterStore& store,
                               const TrainConfig& cfg, const LabeledPair& pair) {
  const FusedGraph& g = data.graph;
  std::mt19937_64 rng = make_rng({cfg.seed, stream::kEval, static_cast<uint64_t>(pair.user),
                                  static_cast<uint64_t>(pair.item)});
  int entity = g.item_entity[pair.item];
  Tape t(&store);
  std::vector<PreferenceSet> prefs;
  for (int hop = 0; hop <= cfg.lp; ++hop)
    prefs.push_back(sample_preference_set(g, pair.user, hop, cfg.M, rng));
  UserRepNodes u = build_user_rep(t, pair.user, entity, prefs, cfg.ablation);
  ItemTree tree = sample_receptive_tree(g, entity, cfg.lh, cfg.N, rng);
  ItemRepNodes v = build_item_rep(t, u.u, tree, cfg.ablation);
  UserViews uv = extract_user_views(t, u);
  ItemViews iv = extract_item_views(t, v);

  nlohmann::json out;
  out["user"] = pair.user;
  out["item"] = pair.item;
  out["label"] = pair.label;
  out["score"] = predict_probability(uv.o_u, iv.o_v);
  nlohmann::json hops = nlohmann::json::array();
  for (size_t p = 0; p < prefs.size(); ++p) {
    nlohmann::json hop;
    hop["hop"] = static_cast<int>(p);
    nlohmann::json triples = nlohmann::json::array();
    for (const Triple& tr : prefs[p].triples)
      triples.push_back({tr.head, tr.rel, tr.tail});
    hop["triples"] = triples;
    if (p < uv.rel_weights.size()) hop["relation_weights"] = uv.rel_weights[p];
    if (p < uv.ent_weights_user.size()) {
      hop["entity_weights_user"] = uv.ent_weights_user[p];
      hop["entity_weights_item"] = uv.ent_weights_item[p];
    }
    hops.push_back(hop);
  }
  out["hops"] = hops;
  nlohmann::json tree_json = nlohmann::json::array();
  for (size_t n = 0; n < tree.nodes.size(); ++n) {
    const auto& node = tree.nodes[n];
    tree_json.push_back({{"entity", node.entity},
                         {"relation", node.rel_from_parent},
                         {"level", node.level},
                         {"children", node.children}});
  }
  out["item_tree"] = tree_json;
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : iv.node_weights) weights.push_back(w);
  out["item_tree_weights"] = weights;
  return out;
}

}  // namespace

int cmd_eval(const EvalArgs& args) {
  return guarded("eval", [&]() {
    TrainConfig cfg = args.cfg;
    apply_ablation(cfg, args.ablate);
    validate_or_die(cfg);
    PreparedData data = load_cache(args.data + "/cache.bin");
    ParameterStore store = load_checkpoint(args.checkpoint);
    MetricsReport report =
        evaluate(store, data.graph, data.split, cfg, cfg.top_k, /*with_ranking=*/true,
                 cfg.mode);
    fs::create_directories(args.out);
    write_file(args.out + "/metrics.json", report.to_json() + "\n");
    write_file(args.out + "/metrics_table.txt", report.to_table());
    if (args.dump_attention > 0) {
      nlohmann::json traces = nlohmann::json::array();
      int limit = std::min<int>(args.dump_attention, static_cast<int>(data.split.eval.size()));
      for (int i = 0; i < limit; ++i) {
        try {
          traces.push_back(attention_trace(data, store, cfg, data.split.eval[i]));
        } catch (const ColdStartError&) {
          continue;
        }
      }
      write_file(args.out + "/attention.json", traces.dump(2) + "\n");
    }
    std::cout << report.to_table();
    return 0;
  });
}

namespace {

struct SweepAxis {
  std::string name;
  std::vector<std::string> values;
};

SweepAxis parse_axis(const std::string& spec) {
  size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
    throw ConfigError("bad sweep axis `" + spec + "` (expected name=v1,v2,...)");
  SweepAxis axis;
  axis.name = spec.substr(0, eq);
  std::string rest = spec.substr(eq + 1);
  size_t start = 0;
  while (true) {
    size_t comma = rest.find(',', start);
    std::string v = rest.substr(start, comma == std::string::npos ? comma : comma - start);
    if (v.empty()) throw ConfigError("bad sweep axis `" + spec + "`: empty value");
    axis.values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return axis;
}

void apply_axis_value(TrainConfig& cfg, const std::string& name, const std::string& value) {
  auto as_int = [&]() { return std::stoi(value); };
  auto as_double = [&]() { return std::stod(value); };
  if (name == "lp") cfg.lp = as_int();
  else if (name == "lh") cfg.lh = as_int();
  else if (name == "M") cfg.M = as_int();
  else if (name == "N") cfg.N = as_int();
  else if (name == "temp") cfg.tau = as_double();
  else if (name == "lambda1") cfg.lambda1 = as_double();
  else if (name == "lambda2") cfg.lambda2 = as_double();
  else if (name == "dim") cfg.dim = as_int();
  else if (name == "lr") cfg.lr = as_double();
  else if (name == "batch") cfg.batch_size = as_int();
  else if (name == "epochs") cfg.epochs = as_int();
  else if (name == "seed") cfg.seed = std::stoull(value);
  else if (name == "drop-prob") cfg.drop_prob = as_double();
  else if (name == "k") cfg.top_k = as_int();
  else
    throw ConfigError("unknown sweep axis `" + name + "`");
}

struct SweepRun {
  std::string run_id;
  std::vector<std::pair<std::string, std::string>> settings;  // axis name -> value
  TrainConfig cfg;
  bool failed = false;
  std::string error;
  MetricsReport report;
};

}  // namespace

int cmd_sweep(const SweepArgs& args) {
  return guarded("sweep", [&]() {
    TrainConfig base = args.cfg;
    apply_ablation(base, args.ablate);

    std::vector<SweepAxis> axes;
    for (const std::string& spec : args.axes) axes.push_back(parse_axis(spec));
    if (args.ablation_matrix) {
      axes.push_back(SweepAxis{"variant", {"full", "no-rv", "no-ev", "no-gcn", "no-cl"}});
    }
    if (axes.empty()) throw ConfigError("sweep needs at least one --axis or --ablation-matrix");

    // Cartesian product of axis values.
    std::vector<SweepRun> runs;
    std::vector<size_t> idx(axes.size(), 0);
    while (true) {
      SweepRun run;
      run.cfg = base;
      for (size_t a = 0; a < axes.size(); ++a) {
        const std::string& value = axes[a].values[idx[a]];
        run.settings.emplace_back(axes[a].name, value);
        if (axes[a].name == "variant") {
          if (value == "no-rv") run.cfg.ablation.rv = false;
          else if (value == "no-ev") run.cfg.ablation.ev = false;
          else if (value == "no-gcn") run.cfg.ablation.gcn = false;
          else if (value == "no-cl") run.cfg.ablation.cl = false;
        } else {
          apply_axis_value(run.cfg, axes[a].name, value);
        }
      }
      char buf[16];
      std::snprintf(buf, sizeof(buf), "run_%03zu", runs.size());
      run.run_id = buf;
      runs.push_back(std::move(run));
      size_t a = 0;
      while (a < axes.size() && ++idx[a] == axes[a].values.size()) {
        idx[a] = 0;
        ++a;
      }
      if (a == axes.size()) break;
    }
    for (auto& run : runs) {
      auto errs = run.cfg.validate();
      if (!errs.empty()) {
        std::string msg;
        for (const auto& e : errs) msg += e + "; ";
        throw ConfigError("sweep config for " + run.run_id + " invalid: " + msg);
      }
    }

    PreparedData data = load_cache(args.data + "/cache.bin");
    fs::create_directories(args.out);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= runs.size()) return;
        SweepRun& run = runs[i];
        try {
          run.report = train_into(data, run.cfg, args.out + "/" + run.run_id, "sweep");
        } catch (const std::exception& e) {
          run.failed = true;
          run.error = e.what();
        }
      }
    };
    int jobs = std::max(1, args.jobs);
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    // Aggregated table: one row per configuration.
    std::ostringstream csv;
    csv << "run";
    for (const auto& [name, _] : runs[0].settings) csv << "," << name;
    csv << ",status,auc,acc,f1,recall@k,ndcg@k\n";
    bool any_failed = false;
    for (const auto& run : runs) {
      csv << run.run_id;
      for (const auto& [_, value] : run.settings) csv << "," << value;
      if (run.failed) {
        any_failed = true;
        csv << ",failed,,,,,\n";
        std::cerr << "sweep: " << run.run_id << " failed: " << run.error << "\n";
      } else {
        csv << ",ok," << fmt_double(run.report.auc) << "," << fmt_double(run.report.acc) << ","
            << fmt_double(run.report.f1) << "," << fmt_double(run.report.recall_at_k) << ","
            << fmt_double(run.report.ndcg_at_k) << "\n";
      }
    }
    write_file(args.out + "/sweep.csv", csv.str());
    std::cout << csv.str();
    return any_failed ? 1 : 0;
  });
}

int cmd_synth(const SynthArgs& args) {
  return guarded("synth", [&]() {
    fs::create_directories(args.out);
    write_synth_tsv(args.cfg, args.out);
    std::cout << "wrote " << args.out << "/{interactions,kg,alignment}.tsv\n";
    return 0;
  });
}

}  // namespace mgacl::cli
