#include "mgacl/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "mgacl/rng.hpp"

namespace mgacl {

const char* param_name(Param p) {
  switch (p) {
    case Param::UserEmb: return "user_emb";
    case Param::EntityEmb: return "entity_emb";
    case Param::RelationEmb: return "relation_emb";
    case Param::GcnW: return "gcn_w";
    case Param::GcnB: return "gcn_b";
  }
  return "?";
}

ParameterStore ParameterStore::init(int num_users, int num_entities, int num_relation_rows,
                                    int dim, uint64_t seed) {
  if (dim < 1) throw ConfigError("embedding dim must be >= 1, got " + std::to_string(dim));
  ParameterStore s;
  s.dim = dim;
  s.user_emb = Array::zeros(num_users, dim);
  s.entity_emb = Array::zeros(num_entities, dim);
  s.relation_emb = Array::zeros(num_relation_rows, dim);
  s.gcn_w = Array::zeros(dim);
  s.gcn_b = Array::zeros(1);

  // Uniform in [-1/sqrt(d), 1/sqrt(d)] keeps initial attention logits O(1).
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::mt19937_64 rng = make_rng({seed, stream::kInit});
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Array* a : {&s.user_emb, &s.entity_emb, &s.relation_emb, &s.gcn_w})
    for (double& x : a->data) x = u(rng);
  // gcn_b stays 0
  return s;
}

Array& ParameterStore::tensor(Param p) {
  switch (p) {
    case Param::UserEmb: return user_emb;
    case Param::EntityEmb: return entity_emb;
    case Param::RelationEmb: return relation_emb;
    case Param::GcnW: return gcn_w;
    case Param::GcnB: return gcn_b;
  }
  throw Error("bad param id");
}

const Array& ParameterStore::tensor(Param p) const {
  return const_cast<ParameterStore*>(this)->tensor(p);
}

int ParameterStore::num_rows(Param p) const {
  const Array& a = tensor(p);
  return a.shape.rank == 2 ? a.shape.d0 : 1;
}

int ParameterStore::row_len(Param p) const {
  const Array& a = tensor(p);
  return a.shape.rank == 2 ? a.shape.d1 : a.shape.d0;
}

bool ParameterStore::same_shape(const ParameterStore& o) const {
  for (int i = 0; i < kNumParams; ++i) {
    Param p = static_cast<Param>(i);
    if (!(tensor(p).shape == o.tensor(p).shape)) return false;
  }
  return dim == o.dim;
}

void SparseGrads::add(Param p, int row, const double* g, size_t n) {
  auto& m = rows[static_cast<int>(p)];
  auto it = m.find(row);
  if (it == m.end()) {
    m.emplace(row, std::vector<double>(g, g + n));
  } else {
    std::vector<double>& acc = it->second;
    for (size_t i = 0; i < n; ++i) acc[i] += g[i];
  }
}

void SparseGrads::clear() {
  for (auto& m : rows) m.clear();
}

bool SparseGrads::empty() const {
  for (const auto& m : rows)
    if (!m.empty()) return false;
  return true;
}

void DenseGrads::init_like(const ParameterStore& s) {
  for (int i = 0; i < kNumParams; ++i) {
    const Array& t = s.tensor(static_cast<Param>(i));
    g[i] = Array(t.shape);
  }
}

void DenseGrads::zero() {
  for (auto& a : g) a.fill(0.0);
}

void DenseGrads::accumulate(const SparseGrads& sg) {
  for (int i = 0; i < kNumParams; ++i) {
    Array& dst = g[i];
    int stride = dst.shape.rank == 2 ? dst.shape.d1 : dst.shape.d0;
    for (const auto& [row, vec] : sg.rows[i]) {
      double* out = dst.data.data() + static_cast<size_t>(row) * stride;
      for (size_t k = 0; k < vec.size(); ++k) out[k] += vec[k];
    }
  }
}

AdamState AdamState::init_like(const ParameterStore& s) {
  AdamState st;
  for (int i = 0; i < kNumParams; ++i) {
    const Array& t = s.tensor(static_cast<Param>(i));
    st.m[i] = Array(t.shape);
    st.v[i] = Array(t.shape);
  }
  return st;
}

void adam_step(ParameterStore& store, AdamState& state, const DenseGrads& grads, double lr,
               double weight_decay) {
  if (lr <= 0.0) throw ConfigError("learning rate must be > 0, got " + std::to_string(lr));
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  state.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (int i = 0; i < kNumParams; ++i) {
    Array& theta = store.tensor(static_cast<Param>(i));
    const Array& g = grads.g[i];
    Array& m = state.m[i];
    Array& v = state.v[i];
    for (size_t k = 0; k < theta.data.size(); ++k) {
      double gk = g.data[k] + weight_decay * theta.data[k];
      m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * gk;
      v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * gk * gk;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      theta.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'M', 'G', 'C', 'L', 'C', 'K', 'P', '1'};

void write_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
void write_doubles(std::FILE* f, const std::vector<double>& v) {
  std::fwrite(v.data(), sizeof(double), v.size(), f);
}

uint32_t read_u32(std::FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw DataError("checkpoint truncated");
  return v;
}

void read_doubles(std::FILE* f, std::vector<double>& v) {
  if (std::fread(v.data(), sizeof(double), v.size(), f) != v.size())
    throw DataError("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write checkpoint: " + path);
  std::fwrite(kMagic, 1, sizeof(kMagic), f);
  write_u32(f, static_cast<uint32_t>(store.dim));
  write_u32(f, static_cast<uint32_t>(store.user_emb.rows()));
  write_u32(f, static_cast<uint32_t>(store.entity_emb.rows()));
  write_u32(f, static_cast<uint32_t>(store.relation_emb.rows()));
  write_doubles(f, store.user_emb.data);
  write_doubles(f, store.entity_emb.data);
  write_doubles(f, store.relation_emb.data);
  write_doubles(f, store.gcn_w.data);
  write_doubles(f, store.gcn_b.data);
  std::fclose(f);
}

ParameterStore load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    std::fclose(f);
    throw DataError("bad checkpoint magic in " + path);
  }
  ParameterStore s;
  try {
    s.dim = static_cast<int>(read_u32(f));
    int nu = static_cast<int>(read_u32(f));
    int ne = static_cast<int>(read_u32(f));
    int nr = static_cast<int>(read_u32(f));
    s.user_emb = Array::zeros(nu, s.dim);
    s.entity_emb = Array::zeros(ne, s.dim);
    s.relation_emb = Array::zeros(nr, s.dim);
    s.gcn_w = Array::zeros(s.dim);
    s.gcn_b = Array::zeros(1);
    read_doubles(f, s.user_emb.data);
    read_doubles(f, s.entity_emb.data);
    read_doubles(f, s.relation_emb.data);
    read_doubles(f, s.gcn_w.data);
    read_doubles(f, s.gcn_b.data);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return s;
}

}  // namespace mgacl
