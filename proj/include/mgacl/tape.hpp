#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mgacl/array.hpp"
#include "mgacl/params.hpp"

namespace mgacl {

using NodeId = int32_t;

// Reverse-mode tape over dense arrays. One tape per forward pass; nodes are
// appended in topological order, so the backward sweep is a single reverse
// scan that visits each node exactly once.
class Tape {
 public:
  explicit Tape(const ParameterStore* params = nullptr) : params_(params) {}

  void reset();

  // ---- leaves ----
  NodeId leaf(Array value);   // constant, no gradient tracked
  NodeId input(Array value);  // boundary leaf whose gradient is readable after backward
  NodeId param_row(Param p, int row);                    // {d} (or {1} for gcn_b)
  NodeId param_rows(Param p, std::vector<int> rows);     // {k, d}
  NodeId param_tensor(Param p);                          // whole tensor (gcn_w, gcn_b)

  // ---- forward ops ----
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId affine(NodeId a, double mul, double shift);  // mul * x + shift, elementwise
  NodeId mul(NodeId a, NodeId b);                     // elementwise
  NodeId dot(NodeId a, NodeId b);                     // {n},{n} -> {1}
  NodeId matvec(NodeId m, NodeId v);                  // {k,d},{d} -> {k}
  NodeId softmax(NodeId v);                           // {k} -> {k}, max-subtracted
  NodeId weighted_sum(NodeId w, NodeId m);            // {k},{k,d} -> {d}
  NodeId weighted_combine(NodeId w, std::span<const NodeId> vs);  // {k}, k x {d} -> {d}
  NodeId stack_scalars(std::span<const NodeId> xs);   // k x {1} -> {k}
  NodeId neg_log_softmax(NodeId logits, int index);   // logsumexp(x) - x[index] -> {1}
  NodeId sigmoid(NodeId a);
  NodeId log(NodeId a);  // input clamped to >= 1e-12
  NodeId l2_norm_sq(NodeId a);
  NodeId mean(NodeId a);

  // ---- inspection ----
  const Array& value(NodeId id) const { return nodes_[id].value; }
  // Gradient of a node after backward; zeros if the node never received one.
  const Array& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return !nodes_[id].grad.empty(); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  long backward_visits() const { return backward_visits_; }

  // ---- backward ----
  void backward(NodeId scalar_loss);
  void backward_seeded(std::span<const std::pair<NodeId, Array>> seeds);

  // Row-sparse parameter gradients accumulated by the latest backward call.
  const SparseGrads& param_grads() const { return param_grads_; }

  static constexpr double kLogClamp = 1e-12;

 private:
  enum class Op : uint8_t {
    Leaf, Input, ParamRow, ParamRows, ParamTensor,
    Add, Scale, Affine, Mul, Dot, MatVec, Softmax, WeightedSum,
    WeightedCombine, Stack, NegLogSoftmax, Sigmoid, Log, L2NormSq, Mean,
  };

  struct Node {
    Op op;
    Param param = Param::UserEmb;
    int aux = 0;        // pick index / single row id
    double a = 0.0;     // scale / affine coefficients
    double b = 0.0;
    std::vector<NodeId> inputs;
    std::vector<int> rows;  // ParamRows
    Array value;
    Array grad;   // lazily sized during backward
    Array extra;  // cached softmax for NegLogSoftmax
  };

  NodeId push(Node n);
  Array& grow_grad(NodeId id);
  void accumulate_inputs(NodeId id);
  void sweep();
  void collect_param_grads();
  const char* op_name(Op op) const;
  void check_finite(const Node& n) const;

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  SparseGrads param_grads_;
  long backward_visits_ = 0;
  mutable Array zero_grad_;  // scratch for grad() of untouched nodes
};

}  // namespace mgacl
