#include <CLI11.hpp>

#include "cli.hpp"

using namespace mgacl;

namespace {

// Shared model/training flags; config file values are overridden by flags.
void add_config_options(CLI::App* app, TrainConfig& cfg, std::vector<std::string>& ablate,
                        bool& serial) {
  app->set_config("--config", "", "flat key=value config file; flags win");
  app->add_option("--lp", cfg.lp, "user sampling depth (hops 0..lp)");
  app->add_option("--lh", cfg.lh, "item receptive depth");
  app->add_option("--M", cfg.M, "triples sampled per user hop");
  app->add_option("--N", cfg.N, "children sampled per tree node");
  app->add_option("--temp", cfg.tau, "contrastive temperature");
  app->add_option("--lambda1", cfg.lambda1, "contrastive loss coefficient");
  app->add_option("--lambda2", cfg.lambda2, "l2 penalty coefficient");
  app->add_option("--dim", cfg.dim, "embedding dimension");
  app->add_option("--lr", cfg.lr, "learning rate");
  app->add_option("--batch", cfg.batch_size, "batch size");
  app->add_option("--epochs", cfg.epochs, "training epochs");
  app->add_option("--seed", cfg.seed, "master seed");
  app->add_option("--drop-prob", cfg.drop_prob, "inter-level dropout probability");
  app->add_option("--neg-ratio", cfg.neg_ratio, "negatives per positive (prepare-time)");
  app->add_option("--ablate", ablate, "disable modules: rv, ev, gcn, cl")
      ->delimiter(',');
  app->add_option("--k", cfg.top_k, "ranking cutoff");
  app->add_option("--eval-every", cfg.eval_every, "epochs between eval passes");
  app->add_option("--threads", cfg.threads, "worker threads (0 = runtime default)");
  app->add_flag("--serial", serial, "run single-threaded reference kernels");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-aware recommender: multi-view user distillation, item GCN, "
               "multi-level contrastive learning"};
  app.require_subcommand(1);

  // prepare
  cli::PrepareArgs prep;
  CLI::App* prepare = app.add_subcommand("prepare", "parse, filter and split raw tsv data");
  prepare->add_option("--interactions", prep.interactions, "user\\titem\\trating tsv")
      ->required();
  prepare->add_option("--kg", prep.kg, "head\\trelation\\ttail tsv")->required();
  prepare->add_option("--alignment", prep.alignment, "item\\tentity tsv")->required();
  prepare->add_option("--out", prep.out, "output directory")->required();
  prepare->add_option("--threshold", prep.params.threshold, "binarization threshold");
  prepare->add_option("--kcore", prep.params.kcore, "k-core filter size");
  prepare->add_option("--eval-fraction", prep.params.eval_fraction, "per-user eval share");
  prepare->add_option("--neg-ratio", prep.params.neg_ratio, "negatives per positive");
  prepare->add_option("--seed", prep.params.seed, "split/negative seed");

  // train
  cli::TrainArgs train;
  bool train_serial = false;
  CLI::App* train_cmd = app.add_subcommand("train", "fit the model on a prepared dataset");
  train_cmd->add_option("--data", train.data, "prepared dataset directory")->required();
  train_cmd->add_option("--out", train.out, "run output directory")->required();
  add_config_options(train_cmd, train.cfg, train.ablate, train_serial);

  // eval
  cli::EvalArgs eval;
  bool eval_serial = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the eval split");
  eval_cmd->add_option("--data", eval.data, "prepared dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--out", eval.out, "report output directory")->required();
  eval_cmd->add_option("--dump-attention", eval.dump_attention,
                       "write attention traces for the first N eval pairs");
  add_config_options(eval_cmd, eval.cfg, eval.ablate, eval_serial);

  // sweep
  cli::SweepArgs sweep;
  bool sweep_serial = false;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid of train+eval runs");
  sweep_cmd->add_option("--data", sweep.data, "prepared dataset directory")->required();
  sweep_cmd->add_option("--out", sweep.out, "sweep output directory")->required();
  sweep_cmd->add_option("--axis", sweep.axes, "sweep axis, e.g. lp=1,2,3")
      ->take_all();
  sweep_cmd->add_flag("--ablation-matrix", sweep.ablation_matrix,
                      "full model plus the four w/o variants");
  sweep_cmd->add_option("--jobs", sweep.jobs, "concurrent runs");
  add_config_options(sweep_cmd, sweep.cfg, sweep.ablate, sweep_serial);

  // synth
  cli::SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a clustered synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--users", synth.cfg.users, "user count");
  synth_cmd->add_option("--items", synth.cfg.items, "item count");
  synth_cmd->add_option("--entities", synth.cfg.entities, "entity count");
  synth_cmd->add_option("--clusters", synth.cfg.clusters, "cluster count");
  synth_cmd->add_option("--clicks", synth.cfg.clicks_per_user, "clicks per user");
  synth_cmd->add_option("--seed", synth.cfg.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  if (prepare->parsed()) return cli::cmd_prepare(prep);
  if (train_cmd->parsed()) {
    if (train_serial) train.cfg.mode = ExecMode::Serial;
    return cli::cmd_train(train);
  }
  if (eval_cmd->parsed()) {
    if (eval_serial) eval.cfg.mode = ExecMode::Serial;
    return cli::cmd_eval(eval);
  }
  if (sweep_cmd->parsed()) {
    if (sweep_serial) sweep.cfg.mode = ExecMode::Serial;
    return cli::cmd_sweep(sweep);
  }
  if (synth_cmd->parsed()) return cli::cmd_synth(synth);
  return 1;
}
