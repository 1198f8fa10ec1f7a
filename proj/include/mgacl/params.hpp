#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgacl/array.hpp"

namespace mgacl {

enum class Param : int {
  UserEmb = 0,
  EntityEmb = 1,
  RelationEmb = 2,
  GcnW = 3,
  GcnB = 4,
};
constexpr int kNumParams = 5;
const char* param_name(Param p);

// All trainable tensors. The relation table carries one extra row for the
// synthetic click relation; gcn_w / gcn_b are the neighborhood score weights.
struct ParameterStore {
  int dim = 0;
  Array user_emb;      // {num_users, dim}
  Array entity_emb;    // {num_entities, dim}
  Array relation_emb;  // {num_relation_rows, dim}
  Array gcn_w;         // {dim}
  Array gcn_b;         // {1}

  static ParameterStore init(int num_users, int num_entities, int num_relation_rows, int dim,
                             uint64_t seed);

  Array& tensor(Param p);
  const Array& tensor(Param p) const;
  // Number of addressable rows for sparse gradient bookkeeping (1 for w and b).
  int num_rows(Param p) const;
  int row_len(Param p) const;
  bool same_shape(const ParameterStore& o) const;
};

// Row-sparse gradients of one tape. Ordered by row id so merging is
// deterministic regardless of how the tape was built.
struct SparseGrads {
  std::array<std::map<int, std::vector<double>>, kNumParams> rows;

  void add(Param p, int row, const double* g, size_t n);
  void clear();
  bool empty() const;
};

// Dense per-tensor gradient accumulator aligned with a ParameterStore.
struct DenseGrads {
  std::array<Array, kNumParams> g;

  void init_like(const ParameterStore& s);
  void zero();
  void accumulate(const SparseGrads& sg);
  const Array& of(Param p) const { return g[static_cast<int>(p)]; }
  Array& of(Param p) { return g[static_cast<int>(p)]; }
};

struct AdamState {
  std::array<Array, kNumParams> m, v;
  long t = 0;

  static AdamState init_like(const ParameterStore& s);
};

// Adam with (beta1, beta2, eps) = (0.9, 0.999, 1e-8); weight_decay adds
// wd * theta to the gradient and defaults to 0 (the L2 penalty lives in the
// loss instead).
void adam_step(ParameterStore& store, AdamState& state, const DenseGrads& grads, double lr,
               double weight_decay = 0.0);

// Versioned little-endian binary checkpoint; round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ParameterStore& store);
ParameterStore load_checkpoint(const std::string& path);

}  // namespace mgacl
