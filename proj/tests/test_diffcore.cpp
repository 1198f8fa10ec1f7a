#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "mgacl/params.hpp"
#include "mgacl/rng.hpp"
#include "mgacl/tape.hpp"
#include "oracles.hpp"

using namespace mgacl;

namespace {

ParameterStore tiny_store(int d, uint64_t seed) {
  return ParameterStore::init(3, 5, 3, d, seed);
}

}  // namespace

TEST_CASE("softmax basics") {
  Tape t;
  NodeId s = t.softmax(t.leaf(Array::vec({0, 0, 0})));
  for (int i = 0; i < 3; ++i) CHECK(t.value(s)[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  NodeId big = t.softmax(t.leaf(Array::vec({1000, 0})));
  CHECK(t.value(big)[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.value(big)[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(all_finite(t.value(big)));
}

TEST_CASE("softmax sums to one and is shift invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 1 + static_cast<int>(rng() % 8);
    std::vector<double> logits(n);
    for (double& x : logits) x = u(rng);
    Tape t;
    NodeId a = t.softmax(t.leaf(Array::vec(logits)));
    double sum = 0;
    for (double v : t.value(a).data) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    std::vector<double> shifted = logits;
    for (double& x : shifted) x += 3.7;
    NodeId b = t.softmax(t.leaf(Array::vec(shifted)));
    for (int i = 0; i < n; ++i) CHECK(std::abs(t.value(a)[i] - t.value(b)[i]) < 1e-9);
  }
}

TEST_CASE("dot and quadratic gradient") {
  Tape t;
  NodeId d = t.dot(t.leaf(Array::vec({1, 2})), t.leaf(Array::vec({3, 4})));
  CHECK(t.value(d)[0] == 11.0);

  NodeId x = t.input(Array::vec({1, 2}));
  NodeId loss = t.dot(x, x);
  t.backward(loss);
  CHECK(t.grad(x)[0] == 2.0);
  CHECK(t.grad(x)[1] == 4.0);
}

TEST_CASE("log sigmoid gradient matches finite differences") {
  // loss = log(sigmoid(w . x)) at the spec'd step size
  std::vector<double> w = {0.3, -0.7, 0.2};
  std::vector<double> x = {1.0, 2.0, -1.5};
  auto f = [&](const std::vector<double>& wv) {
    Tape t;
    NodeId dotn = t.dot(t.leaf(Array::vec(wv)), t.leaf(Array::vec(x)));
    return t.value(t.log(t.sigmoid(dotn)))[0];
  };
  Tape t;
  NodeId wn = t.input(Array::vec(w));
  t.backward(t.log(t.sigmoid(t.dot(wn, t.leaf(Array::vec(x))))));
  double h = 1e-4;
  for (int i = 0; i < 3; ++i) {
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    double fd = (f(wp) - f(wm)) / (2 * h);
    CHECK(oracle::rel_err(t.grad(wn)[i], fd) < 1e-5);
  }
}

TEST_CASE("unused input has zero gradient") {
  Tape t;
  NodeId used = t.input(Array::vec({1, 1}));
  NodeId unused = t.input(Array::vec({5, 5}));
  t.backward(t.dot(used, used));
  CHECK(t.has_grad(used));
  CHECK(!t.has_grad(unused));
  CHECK(t.grad(unused)[0] == 0.0);
}

TEST_CASE("non-scalar loss rejected") {
  Tape t;
  NodeId v = t.leaf(Array::vec({1, 2}));
  CHECK_THROWS_AS(t.backward(v), ShapeError);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape t;
  NodeId a = t.leaf(Array::vec({1, 2}));
  NodeId b = t.leaf(Array::vec({1, 2, 3}));
  try {
    t.add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("{2}") != std::string::npos);
    CHECK(msg.find("{3}") != std::string::npos);
  }
}

TEST_CASE("non-finite op output raises") {
  Tape t;
  NodeId huge = t.leaf(Array::vec({1e308}));
  CHECK_THROWS_AS(t.affine(huge, 2.0, 0.0), NumericError);  // overflows to inf
}

TEST_CASE("every primitive matches finite differences on random instances") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-2, 2);
  std::uniform_real_distribution<double> upos(0.1, 3.0);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    int d = 2 + static_cast<int>(rng() % 7);  // up to 8
    int k = 2 + static_cast<int>(rng() % 3);
    std::vector<double> xv(d), yv(d), wv(k);
    std::vector<double> mv(k * d);
    for (double& v : xv) v = u(rng);
    for (double& v : yv) v = u(rng);
    for (double& v : wv) v = u(rng);
    for (double& v : mv) v = u(rng);
    std::vector<double> posv(d);
    for (double& v : posv) v = upos(rng);

    // Builds a scalar program exercising one primitive per case; FD wiggles x.
    int which = rep % 10;
    auto build = [&](const std::vector<double>& x, Tape& t, NodeId& xn) {
      xn = t.input(Array::vec(x));
      NodeId y = t.leaf(Array::vec(yv));
      NodeId m = t.leaf(Array(Shape::matrix(k, d), mv));
      NodeId w = t.leaf(Array::vec(wv));
      switch (which) {
        case 0: return t.dot(t.add(xn, y), y);
        case 1: return t.dot(t.mul(xn, y), y);
        case 2: return t.dot(t.affine(xn, 1.7, -0.3), y);
        case 3: return t.l2_norm_sq(t.matvec(m, xn));
        case 4: return t.dot(t.softmax(xn), y);
        case 5: return t.l2_norm_sq(t.weighted_sum(t.softmax(t.matvec(m, xn)), m));
        case 6: return t.mean(t.sigmoid(xn));
        case 7: return t.neg_log_softmax(xn, 0);
        case 8: {
          std::vector<NodeId> pieces;
          for (int i = 0; i < 3; ++i) pieces.push_back(t.dot(xn, y));
          return t.l2_norm_sq(t.stack_scalars(pieces));
        }
        default: {
          std::vector<NodeId> vecs = {xn, y, t.mul(xn, y)};
          return t.l2_norm_sq(t.weighted_combine(t.softmax(t.leaf(Array::vec({wv[0], wv[1], 0.5}))), vecs));
        }
      }
    };
    auto eval = [&](const std::vector<double>& x) {
      Tape t;
      NodeId xn;
      NodeId loss = build(x, t, xn);
      return t.value(loss)[0];
    };
    std::vector<double> x0 = (which == 6) ? posv : xv;
    Tape t;
    NodeId xn;
    NodeId loss = build(x0, t, xn);
    t.backward(loss);
    double h = 1e-5;
    for (int i = 0; i < d; ++i) {
      auto xp = x0, xm = x0;
      xp[i] += h;
      xm[i] -= h;
      double fd = (eval(xp) - eval(xm)) / (2 * h);
      CHECK(oracle::rel_err(t.grad(xn)[i], fd) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("log clamps tiny inputs") {
  Tape t;
  NodeId x = t.leaf(Array::vec({0.0, 1e-20, 1.0}));
  NodeId l = t.log(x);
  CHECK(t.value(l)[0] == doctest::Approx(std::log(1e-12)));
  CHECK(t.value(l)[1] == doctest::Approx(std::log(1e-12)));
  CHECK(t.value(l)[2] == doctest::Approx(0.0));
}

TEST_CASE("backward visits each reachable node once") {
  Tape t;
  NodeId x = t.input(Array::vec({1.0, 2.0, 3.0}));
  NodeId s = t.softmax(x);
  NodeId l = t.dot(s, s);
  t.backward(l);
  // loss, softmax, input: three reachable nodes
  CHECK(t.backward_visits() == 3);
  CHECK(t.num_nodes() == 3);

  // op-count accounting: visits never exceed recorded nodes, and grow
  // linearly when the tape grows
  Tape t2;
  NodeId acc = t2.input(Array::scalar(1.0));
  for (int i = 0; i < 50; ++i) acc = t2.affine(acc, 1.01, 0.0);
  t2.backward(acc);
  CHECK(t2.backward_visits() == t2.num_nodes());
}

TEST_CASE("param gathers route gradients to rows") {
  ParameterStore store = tiny_store(4, 99);
  Tape t(&store);
  NodeId rows = t.param_rows(Param::EntityEmb, {1, 3, 1});
  NodeId w = t.leaf(Array::vec({1.0, 2.0, 4.0}));
  t.backward(t.l2_norm_sq(t.weighted_sum(w, rows)));
  const auto& eg = t.param_grads().rows[static_cast<int>(Param::EntityEmb)];
  CHECK(eg.size() == 2);         // rows 1 and 3
  CHECK(eg.count(1) == 1);
  CHECK(eg.count(3) == 1);
  CHECK(eg.count(0) == 0);       // untouched rows absent

  // the duplicated row collects both gather slots: grad(row 1) is the
  // (w0 + w2)-weighted column, grad(row 3) the w1-weighted one
  const Array& out_grad = t.grad(rows);
  const auto& r1 = eg.at(1);
  for (int j = 0; j < 4; ++j)
    CHECK(r1[j] == doctest::Approx(out_grad.at(0, j) + out_grad.at(2, j)).epsilon(1e-12));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParameterStore store = tiny_store(4, 7);
  ParameterStore before = store;
  AdamState adam = AdamState::init_like(store);
  DenseGrads g;
  g.init_like(store);
  g.zero();
  adam_step(store, adam, g, 0.1);
  CHECK(store.user_emb.data == before.user_emb.data);
  CHECK(store.entity_emb.data == before.entity_emb.data);
  CHECK(adam.t == 1);
}

TEST_CASE("adam single scalar matches hand recurrence") {
  ParameterStore store;
  store.dim = 1;
  store.user_emb = Array::zeros(1, 1);
  store.entity_emb = Array::zeros(1, 1);
  store.relation_emb = Array::zeros(1, 1);
  store.gcn_w = Array::zeros(1);
  store.gcn_b = Array::scalar(0.5);
  AdamState adam = AdamState::init_like(store);
  DenseGrads g;
  g.init_like(store);
  g.zero();
  g.of(Param::GcnB).data[0] = 1.0;

  std::vector<double> grads(5, 1.0);
  auto expected = oracle::adam_trajectory(0.5, grads, 0.1);
  for (size_t i = 0; i < grads.size(); ++i) {
    adam_step(store, adam, g, 0.1);
    CHECK(store.gcn_b.data[0] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  // first step is ~ -lr for a constant unit gradient
  CHECK(expected[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam rejects non-positive lr") {
  ParameterStore store = tiny_store(2, 1);
  AdamState adam = AdamState::init_like(store);
  DenseGrads g;
  g.init_like(store);
  g.zero();
  CHECK_THROWS_AS(adam_step(store, adam, g, 0.0), ConfigError);
  CHECK_THROWS_AS(adam_step(store, adam, g, -1.0), ConfigError);
}

TEST_CASE("init is deterministic and bounded") {
  ParameterStore a = tiny_store(8, 42);
  ParameterStore b = tiny_store(8, 42);
  CHECK(a.user_emb.data == b.user_emb.data);
  CHECK(a.entity_emb.data == b.entity_emb.data);
  double bound = 1.0 / std::sqrt(8.0);
  for (double v : a.entity_emb.data) CHECK(std::abs(v) <= bound);
  for (double v : a.gcn_b.data) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ParameterStore store = tiny_store(6, 2024);
  std::string path = "checkpoint_test.bin";
  save_checkpoint(path, store);
  ParameterStore loaded = load_checkpoint(path);
  CHECK(loaded.dim == store.dim);
  CHECK(loaded.user_emb.data == store.user_emb.data);
  CHECK(loaded.entity_emb.data == store.entity_emb.data);
  CHECK(loaded.relation_emb.data == store.relation_emb.data);
  CHECK(loaded.gcn_w.data == store.gcn_w.data);
  CHECK(loaded.gcn_b.data == store.gcn_b.data);

  // writing the loaded store again produces identical bytes
  std::string path2 = "checkpoint_test2.bin";
  save_checkpoint(path2, loaded);
  auto slurp = [](const std::string& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    REQUIRE(f);
    std::string s;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) s.append(buf, n);
    std::fclose(f);
    return s;
  };
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("seeded backward accumulates boundary gradients") {
  Tape t;
  NodeId x = t.input(Array::vec({1.0, 2.0}));
  NodeId y = t.affine(x, 2.0, 1.0);
  std::vector<std::pair<NodeId, Array>> seeds;
  seeds.emplace_back(y, Array::vec({1.0, 0.5}));
  t.backward_seeded(seeds);
  CHECK(t.grad(x)[0] == 2.0);
  CHECK(t.grad(x)[1] == 1.0);
}
