#pragma once

#include <string>
#include <vector>

#include "mgacl/trainer.hpp"

namespace mgacl::cli {

struct PrepareArgs {
  std::string interactions, kg, alignment, out;
  PrepareParams params;
};

struct TrainArgs {
  std::string data, out;
  TrainConfig cfg;
  std::vector<std::string> ablate;  // names: rv, ev, gcn, cl
};

struct EvalArgs {
  std::string data, checkpoint, out;
  TrainConfig cfg;
  std::vector<std::string> ablate;
  int dump_attention = 0;  // number of eval pairs to trace
};

struct SweepArgs {
  std::string data, out;
  TrainConfig cfg;
  std::vector<std::string> ablate;
  std::vector<std::string> axes;  // "name=v1,v2,..."
  bool ablation_matrix = false;
  int jobs = 1;
};

struct SynthArgs {
  std::string out;
  SynthConfig cfg;
};

int cmd_prepare(const PrepareArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_sweep(const SweepArgs& args);
int cmd_synth(const SynthArgs& args);

// Applies --ablate names onto the config; unknown names raise ConfigError.
void apply_ablation(TrainConfig& cfg, const std::vector<std::string>& names);

// Flat key=value dump of the fully resolved configuration.
std::string resolved_config(const TrainConfig& cfg, const std::string& command,
                            const std::string& data, const std::string& out);

}  // namespace mgacl::cli
