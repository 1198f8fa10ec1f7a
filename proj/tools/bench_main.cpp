// Compares the OpenMP batch kernels against the serial reference on a
// synthetic workload and verifies they produce identical numbers.
#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mgacl/synth.hpp"
#include "mgacl/trainer.hpp"

using namespace mgacl;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  int batches = argc > 1 ? std::atoi(argv[1]) : 8;

  SynthConfig scfg;
  scfg.users = 200;
  scfg.items = 200;
  scfg.entities = 500;
  SynthData data = make_clustered_dataset(scfg);

  TrainConfig cfg;
  cfg.dim = 32;
  cfg.M = 8;
  cfg.N = 4;
  cfg.batch_size = 128;
  cfg.seed = 13;
  BatchExecutor exec(data.graph, cfg);
  ParameterStore store =
      ParameterStore::init(data.graph.interactions.num_users, data.graph.kg.num_entities,
                           data.graph.relation_rows(), cfg.dim, cfg.seed);

  std::vector<BatchPlan> plans;
  for (int b = 0; b < batches; ++b) {
    size_t lo = (static_cast<size_t>(b) * cfg.batch_size) % data.split.train.size();
    size_t hi = std::min(lo + cfg.batch_size, data.split.train.size());
    std::vector<LabeledPair> batch(data.split.train.begin() + lo,
                                   data.split.train.begin() + hi);
    plans.push_back(make_batch_plan(data.graph, batch, cfg, 0, b));
  }

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("batch forward+backward over %d batches of %d (dim=%d, M=%d, N=%d)\n", batches,
              cfg.batch_size, cfg.dim, cfg.M, cfg.N);

  auto t0 = Clock::now();
  std::vector<BatchResult> serial;
  for (const auto& plan : plans) serial.push_back(exec.run(store, plan, true, ExecMode::Serial));
  double serial_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<BatchResult> parallel;
  for (const auto& plan : plans)
    parallel.push_back(exec.run(store, plan, true, ExecMode::Parallel));
  double parallel_ms = ms_since(t0);

  bool equal = true;
  for (int b = 0; b < batches; ++b) {
    equal = equal && serial[b].losses.total == parallel[b].losses.total;
    for (int pi = 0; pi < kNumParams; ++pi)
      equal = equal && serial[b].grads.g[pi].data == parallel[b].grads.g[pi].data;
  }

  std::printf("  serial reference : %8.2f ms  (%.2f ms/batch)\n", serial_ms,
              serial_ms / batches);
  std::printf("  openmp (%2d thr)  : %8.2f ms  (%.2f ms/batch)  speedup %.2fx\n", threads,
              parallel_ms, parallel_ms / batches, serial_ms / parallel_ms);
  std::printf("  results identical: %s\n", equal ? "yes" : "NO");

  // eval-side scoring benchmark
  std::vector<LabeledPair> pairs = data.split.eval;
  t0 = Clock::now();
  auto scored_serial = score_pairs(store, data.graph, pairs, cfg, ExecMode::Serial);
  double eval_serial_ms = ms_since(t0);
  t0 = Clock::now();
  auto scored_parallel = score_pairs(store, data.graph, pairs, cfg, ExecMode::Parallel);
  double eval_parallel_ms = ms_since(t0);
  bool eval_equal = true;
  for (size_t i = 0; i < pairs.size(); ++i)
    eval_equal = eval_equal && scored_serial[i].score == scored_parallel[i].score;

  std::printf("pair scoring over %zu eval pairs\n", pairs.size());
  std::printf("  serial reference : %8.2f ms\n", eval_serial_ms);
  std::printf("  openmp (%2d thr)  : %8.2f ms  speedup %.2fx\n", threads, eval_parallel_ms,
              eval_serial_ms / eval_parallel_ms);
  std::printf("  results identical: %s\n", eval_equal ? "yes" : "NO");

  return equal && eval_equal ? 0 : 1;
}
