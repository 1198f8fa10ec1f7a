#include "mgacl/tape.hpp"

#include <algorithm>
#include <cmath>

namespace mgacl {

void Tape::reset() {
  nodes_.clear();
  param_grads_.clear();
  backward_visits_ = 0;
}

NodeId Tape::push(Node n) {
  check_finite(n);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_finite(const Node& n) const {
  if (!all_finite(n.value))
    throw NumericError(std::string("non-finite value produced by op ") + op_name(n.op));
}

const char* Tape::op_name(Op op) const {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Input: return "input";
    case Op::ParamRow: return "param_row";
    case Op::ParamRows: return "param_rows";
    case Op::ParamTensor: return "param_tensor";
    case Op::Add: return "add";
    case Op::Scale: return "scale";
    case Op::Affine: return "affine";
    case Op::Mul: return "mul";
    case Op::Dot: return "dot";
    case Op::MatVec: return "matvec";
    case Op::Softmax: return "softmax";
    case Op::WeightedSum: return "weighted_sum";
    case Op::WeightedCombine: return "weighted_combine";
    case Op::Stack: return "stack_scalars";
    case Op::NegLogSoftmax: return "neg_log_softmax";
    case Op::Sigmoid: return "sigmoid";
    case Op::Log: return "log";
    case Op::L2NormSq: return "l2_norm_sq";
    case Op::Mean: return "mean";
  }
  return "?";
}

NodeId Tape::leaf(Array value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::input(Array value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::param_row(Param p, int row) {
  if (!params_) throw Error("tape has no parameter store bound");
  const Array& t = params_->tensor(p);
  int nrows = params_->num_rows(p);
  if (row < 0 || row >= nrows)
    throw NotFoundError(std::string(param_name(p)) + " row " + std::to_string(row) +
                        " out of range [0," + std::to_string(nrows) + ")");
  Node n;
  n.op = Op::ParamRow;
  n.param = p;
  n.aux = row;
  int len = params_->row_len(p);
  n.value = Array(Shape::vector(len));
  const double* src = t.shape.rank == 2 ? t.row_ptr(row) : t.data.data();
  std::copy(src, src + len, n.value.data.begin());
  return push(std::move(n));
}

NodeId Tape::param_rows(Param p, std::vector<int> rows) {
  if (!params_) throw Error("tape has no parameter store bound");
  const Array& t = params_->tensor(p);
  if (t.shape.rank != 2) throw ShapeError(std::string(param_name(p)) + " is not a table");
  int nrows = t.shape.d0, len = t.shape.d1;
  Node n;
  n.op = Op::ParamRows;
  n.param = p;
  n.value = Array(Shape::matrix(static_cast<int>(rows.size()), len));
  for (size_t i = 0; i < rows.size(); ++i) {
    int r = rows[i];
    if (r < 0 || r >= nrows)
      throw NotFoundError(std::string(param_name(p)) + " row " + std::to_string(r) +
                          " out of range [0," + std::to_string(nrows) + ")");
    std::copy(t.row_ptr(r), t.row_ptr(r) + len, n.value.row_ptr(static_cast<int>(i)));
  }
  n.rows = std::move(rows);
  return push(std::move(n));
}

NodeId Tape::param_tensor(Param p) {
  if (!params_) throw Error("tape has no parameter store bound");
  Node n;
  n.op = Op::ParamTensor;
  n.param = p;
  n.value = params_->tensor(p);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_shape(nodes_[a].value, nodes_[b].value, "add");
  Node n;
  n.op = Op::Add;
  n.inputs = {a, b};
  n.value = Array(nodes_[a].value.shape);
  const auto& x = nodes_[a].value.data;
  const auto& y = nodes_[b].value.data;
  for (size_t i = 0; i < x.size(); ++i) n.value.data[i] = x[i] + y[i];
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) { return affine(a, c, 0.0); }

NodeId Tape::affine(NodeId a, double mul, double shift) {
  Node n;
  n.op = Op::Affine;
  n.a = mul;
  n.b = shift;
  n.inputs = {a};
  n.value = Array(nodes_[a].value.shape);
  const auto& x = nodes_[a].value.data;
  for (size_t i = 0; i < x.size(); ++i) n.value.data[i] = mul * x[i] + shift;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_shape(nodes_[a].value, nodes_[b].value, "mul");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a, b};
  n.value = Array(nodes_[a].value.shape);
  const auto& x = nodes_[a].value.data;
  const auto& y = nodes_[b].value.data;
  for (size_t i = 0; i < x.size(); ++i) n.value.data[i] = x[i] * y[i];
  return push(std::move(n));
}

NodeId Tape::dot(NodeId a, NodeId b) {
  require_same_shape(nodes_[a].value, nodes_[b].value, "dot");
  Node n;
  n.op = Op::Dot;
  n.inputs = {a, b};
  const auto& x = nodes_[a].value.data;
  const auto& y = nodes_[b].value.data;
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  n.value = Array::scalar(s);
  return push(std::move(n));
}

NodeId Tape::matvec(NodeId m, NodeId v) {
  const Array& a = nodes_[m].value;
  const Array& x = nodes_[v].value;
  if (a.shape.rank != 2 || x.shape.rank != 1 || a.shape.d1 != x.shape.d0)
    throw ShapeError("matvec: shape mismatch " + a.shape.str() + " vs " + x.shape.str());
  Node n;
  n.op = Op::MatVec;
  n.inputs = {m, v};
  n.value = Array(Shape::vector(a.shape.d0));
  for (int i = 0; i < a.shape.d0; ++i) {
    const double* row = a.row_ptr(i);
    double s = 0.0;
    for (int j = 0; j < a.shape.d1; ++j) s += row[j] * x.data[j];
    n.value.data[i] = s;
  }
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId v) {
  const Array& x = nodes_[v].value;
  if (x.shape.rank != 1 || x.shape.d0 < 1)
    throw ShapeError("softmax: need non-empty vector, got " + x.shape.str());
  Node n;
  n.op = Op::Softmax;
  n.inputs = {v};
  n.value = Array(x.shape);
  double m = *std::max_element(x.data.begin(), x.data.end());
  double z = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double e = std::exp(x.data[i] - m);
    n.value.data[i] = e;
    z += e;
  }
  for (double& e : n.value.data) e /= z;
  return push(std::move(n));
}

NodeId Tape::weighted_sum(NodeId w, NodeId m) {
  const Array& wt = nodes_[w].value;
  const Array& a = nodes_[m].value;
  if (wt.shape.rank != 1 || a.shape.rank != 2 || wt.shape.d0 != a.shape.d0)
    throw ShapeError("weighted_sum: shape mismatch " + wt.shape.str() + " vs " + a.shape.str());
  Node n;
  n.op = Op::WeightedSum;
  n.inputs = {w, m};
  n.value = Array(Shape::vector(a.shape.d1));
  for (int i = 0; i < a.shape.d0; ++i) {
    const double* row = a.row_ptr(i);
    double wi = wt.data[i];
    for (int j = 0; j < a.shape.d1; ++j) n.value.data[j] += wi * row[j];
  }
  return push(std::move(n));
}

NodeId Tape::weighted_combine(NodeId w, std::span<const NodeId> vs) {
  const Array& wt = nodes_[w].value;
  if (wt.shape.rank != 1 || wt.shape.d0 != static_cast<int>(vs.size()))
    throw ShapeError("weighted_combine: " + std::to_string(vs.size()) +
                     " vectors vs weights " + wt.shape.str());
  if (vs.empty()) throw ShapeError("weighted_combine: empty vector list");
  const Array& first = nodes_[vs[0]].value;
  Node n;
  n.op = Op::WeightedCombine;
  n.inputs.assign(vs.begin(), vs.end());
  n.inputs.push_back(w);  // weights stored last
  n.value = Array(first.shape);
  for (size_t i = 0; i < vs.size(); ++i) {
    const Array& x = nodes_[vs[i]].value;
    require_same_shape(first, x, "weighted_combine");
    for (size_t j = 0; j < x.data.size(); ++j) n.value.data[j] += wt.data[i] * x.data[j];
  }
  return push(std::move(n));
}

NodeId Tape::stack_scalars(std::span<const NodeId> xs) {
  Node n;
  n.op = Op::Stack;
  n.inputs.assign(xs.begin(), xs.end());
  n.value = Array(Shape::vector(static_cast<int>(xs.size())));
  for (size_t i = 0; i < xs.size(); ++i) {
    const Array& x = nodes_[xs[i]].value;
    if (x.size() != 1)
      throw ShapeError("stack_scalars: input " + std::to_string(i) + " has shape " +
                       x.shape.str());
    n.value.data[i] = x.data[0];
  }
  return push(std::move(n));
}

NodeId Tape::neg_log_softmax(NodeId logits, int index) {
  const Array& x = nodes_[logits].value;
  if (x.shape.rank != 1 || x.shape.d0 < 1)
    throw ShapeError("neg_log_softmax: need non-empty vector, got " + x.shape.str());
  if (index < 0 || index >= x.shape.d0)
    throw ShapeError("neg_log_softmax: index " + std::to_string(index) + " out of " +
                     x.shape.str());
  Node n;
  n.op = Op::NegLogSoftmax;
  n.inputs = {logits};
  n.aux = index;
  double m = *std::max_element(x.data.begin(), x.data.end());
  double z = 0.0;
  n.extra = Array(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    double e = std::exp(x.data[i] - m);
    n.extra.data[i] = e;
    z += e;
  }
  for (double& e : n.extra.data) e /= z;  // cached softmax for backward
  double lse = m + std::log(z);
  n.value = Array::scalar(lse - x.data[index]);
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::Sigmoid;
  n.inputs = {a};
  n.value = Array(nodes_[a].value.shape);
  const auto& x = nodes_[a].value.data;
  for (size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    n.value.data[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = Op::Log;
  n.inputs = {a};
  n.value = Array(nodes_[a].value.shape);
  const auto& x = nodes_[a].value.data;
  for (size_t i = 0; i < x.size(); ++i) n.value.data[i] = std::log(std::max(x[i], kLogClamp));
  return push(std::move(n));
}

NodeId Tape::l2_norm_sq(NodeId a) {
  Node n;
  n.op = Op::L2NormSq;
  n.inputs = {a};
  const auto& x = nodes_[a].value.data;
  double s = 0.0;
  for (double v : x) s += v * v;
  n.value = Array::scalar(s);
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  const Array& x = nodes_[a].value;
  if (x.size() < 1) throw ShapeError("mean: empty input");
  Node n;
  n.op = Op::Mean;
  n.inputs = {a};
  double s = 0.0;
  for (double v : x.data) s += v;
  n.value = Array::scalar(s / static_cast<double>(x.size()));
  return push(std::move(n));
}

const Array& Tape::grad(NodeId id) const {
  const Node& n = nodes_[id];
  if (!n.grad.empty()) return n.grad;
  zero_grad_ = Array(n.value.shape);
  return zero_grad_;
}

Array& Tape::grow_grad(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Array(n.value.shape);
  return n.grad;
}

void Tape::backward(NodeId scalar_loss) {
  if (nodes_[scalar_loss].value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     nodes_[scalar_loss].value.shape.str());
  std::pair<NodeId, Array> seed{scalar_loss, Array::scalar(1.0)};
  backward_seeded({&seed, 1});
}

void Tape::backward_seeded(std::span<const std::pair<NodeId, Array>> seeds) {
  for (auto& n : nodes_) n.grad = Array();
  param_grads_.clear();
  backward_visits_ = 0;
  for (const auto& [id, g] : seeds) {
    require_same_shape(nodes_[id].value, g, "backward seed");
    Array& dst = grow_grad(id);
    for (size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }
  sweep();
  collect_param_grads();
}

void Tape::sweep() {
  // Nodes are in topological order; one reverse pass visits each at most once.
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    if (nodes_[id].grad.empty()) continue;
    ++backward_visits_;
    accumulate_inputs(id);
  }
}

void Tape::accumulate_inputs(NodeId id) {
  Node& n = nodes_[id];
  const Array& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
    case Op::Input:
    case Op::ParamRow:
    case Op::ParamRows:
    case Op::ParamTensor:
      return;  // terminals
    case Op::Add: {
      for (NodeId in : n.inputs) {
        Array& gi = grow_grad(in);
        for (size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
      }
      return;
    }
    case Op::Scale:
    case Op::Affine: {
      Array& gi = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < g.data.size(); ++i) gi.data[i] += n.a * g.data[i];
      return;
    }
    case Op::Mul: {
      const Array& x = nodes_[n.inputs[0]].value;
      const Array& y = nodes_[n.inputs[1]].value;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * y.data[i];
      Array& gy = grow_grad(n.inputs[1]);
      for (size_t i = 0; i < g.data.size(); ++i) gy.data[i] += g.data[i] * x.data[i];
      return;
    }
    case Op::Dot: {
      double g0 = g.data[0];
      const Array& x = nodes_[n.inputs[0]].value;
      const Array& y = nodes_[n.inputs[1]].value;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < x.data.size(); ++i) gx.data[i] += g0 * y.data[i];
      Array& gy = grow_grad(n.inputs[1]);
      for (size_t i = 0; i < y.data.size(); ++i) gy.data[i] += g0 * x.data[i];
      return;
    }
    case Op::MatVec: {
      const Array& a = nodes_[n.inputs[0]].value;
      const Array& x = nodes_[n.inputs[1]].value;
      Array& ga = grow_grad(n.inputs[0]);
      Array& gx = grow_grad(n.inputs[1]);
      for (int i = 0; i < a.shape.d0; ++i) {
        double gi = g.data[i];
        const double* row = a.row_ptr(i);
        double* grow = ga.row_ptr(i);
        for (int j = 0; j < a.shape.d1; ++j) {
          grow[j] += gi * x.data[j];
          gx.data[j] += gi * row[j];
        }
      }
      return;
    }
    case Op::Softmax: {
      const Array& y = n.value;
      double gy = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) gy += g.data[i] * y.data[i];
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < y.data.size(); ++i)
        gx.data[i] += y.data[i] * (g.data[i] - gy);
      return;
    }
    case Op::WeightedSum: {
      const Array& w = nodes_[n.inputs[0]].value;
      const Array& a = nodes_[n.inputs[1]].value;
      Array& gw = grow_grad(n.inputs[0]);
      Array& ga = grow_grad(n.inputs[1]);
      for (int i = 0; i < a.shape.d0; ++i) {
        const double* row = a.row_ptr(i);
        double* grow = ga.row_ptr(i);
        double s = 0.0;
        for (int j = 0; j < a.shape.d1; ++j) {
          s += g.data[j] * row[j];
          grow[j] += w.data[i] * g.data[j];
        }
        gw.data[i] += s;
      }
      return;
    }
    case Op::WeightedCombine: {
      size_t k = n.inputs.size() - 1;
      NodeId wid = n.inputs[k];
      const Array& w = nodes_[wid].value;
      Array& gw = grow_grad(wid);
      for (size_t i = 0; i < k; ++i) {
        const Array& x = nodes_[n.inputs[i]].value;
        Array& gx = grow_grad(n.inputs[i]);
        double s = 0.0;
        for (size_t j = 0; j < x.data.size(); ++j) {
          s += g.data[j] * x.data[j];
          gx.data[j] += w.data[i] * g.data[j];
        }
        gw.data[i] += s;
      }
      return;
    }
    case Op::Stack: {
      for (size_t i = 0; i < n.inputs.size(); ++i) grow_grad(n.inputs[i]).data[0] += g.data[i];
      return;
    }
    case Op::NegLogSoftmax: {
      double g0 = g.data[0];
      const Array& sm = n.extra;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < sm.data.size(); ++i) {
        double delta = (static_cast<int>(i) == n.aux) ? 1.0 : 0.0;
        gx.data[i] += g0 * (sm.data[i] - delta);
      }
      return;
    }
    case Op::Sigmoid: {
      const Array& y = n.value;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < y.data.size(); ++i)
        gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
      return;
    }
    case Op::Log: {
      const Array& x = nodes_[n.inputs[0]].value;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < x.data.size(); ++i)
        if (x.data[i] >= kLogClamp) gx.data[i] += g.data[i] / x.data[i];
      return;
    }
    case Op::L2NormSq: {
      double g0 = g.data[0];
      const Array& x = nodes_[n.inputs[0]].value;
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < x.data.size(); ++i) gx.data[i] += 2.0 * g0 * x.data[i];
      return;
    }
    case Op::Mean: {
      const Array& x = nodes_[n.inputs[0]].value;
      double gi = g.data[0] / static_cast<double>(x.size());
      Array& gx = grow_grad(n.inputs[0]);
      for (size_t i = 0; i < x.data.size(); ++i) gx.data[i] += gi;
      return;
    }
  }
}

void Tape::collect_param_grads() {
  // Forward order keeps the sparse accumulation deterministic.
  for (const Node& n : nodes_) {
    if (n.grad.empty()) continue;
    switch (n.op) {
      case Op::ParamRow:
        param_grads_.add(n.param, n.aux, n.grad.data.data(), n.grad.data.size());
        break;
      case Op::ParamRows: {
        int len = n.value.shape.d1;
        for (size_t i = 0; i < n.rows.size(); ++i)
          param_grads_.add(n.param, n.rows[i], n.grad.row_ptr(static_cast<int>(i)),
                           static_cast<size_t>(len));
        break;
      }
      case Op::ParamTensor:
        param_grads_.add(n.param, 0, n.grad.data.data(), n.grad.data.size());
        break;
      default:
        break;
    }
  }
}

}  // namespace mgacl
