#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mgacl/itemrep.hpp"
#include "oracles.hpp"

using namespace mgacl;

namespace {

void set_row(Array& table, int row, std::vector<double> v) {
  std::copy(v.begin(), v.end(), table.row_ptr(row));
}

ParameterStore blank_store(int users, int entities, int rel_rows, int d) {
  ParameterStore s;
  s.dim = d;
  s.user_emb = Array::zeros(users, d);
  s.entity_emb = Array::zeros(entities, d);
  s.relation_emb = Array::zeros(rel_rows, d);
  s.gcn_w = Array::zeros(d);
  s.gcn_b = Array::zeros(1);
  return s;
}

// tree with explicit children, node 0 the root
ItemTree manual_tree(std::vector<ItemTree::Node> nodes, int depth, int branching) {
  ItemTree t;
  t.nodes = std::move(nodes);
  t.depth = depth;
  t.branching = branching;
  return t;
}

FusedGraph tiny_fused(int entities, std::vector<Triple> triples, int items = 1) {
  InteractionGraph ig = InteractionGraph::from_edges(1, items, {{0, 0}});
  KnowledgeGraph kg = KnowledgeGraph::from_triples(entities, 3, std::move(triples));
  std::vector<std::pair<int, int>> alignment;
  for (int v = 0; v < items; ++v) alignment.push_back({v, v});
  return build_fused_graph(std::move(ig), std::move(kg), alignment);
}

}  // namespace

TEST_CASE("triple score: zero weights give zero") {
  ParameterStore s = blank_store(1, 2, 1, 2);
  set_row(s.user_emb, 0, {3.0, -2.0});
  Tape t(&s);
  NodeId score = triple_score(t, t.param_row(Param::UserEmb, 0),
                              t.leaf(Array::vec({1.0, 1.0})), t.leaf(Array::vec({5.0, 5.0})));
  CHECK(t.value(score)[0] == 0.0);
}

TEST_CASE("triple score: hand arithmetic") {
  // w=[1,1], b=1, u+r+t=[1,2] -> 4
  ParameterStore s = blank_store(1, 2, 1, 2);
  s.gcn_w = Array::vec({1.0, 1.0});
  s.gcn_b = Array::scalar(1.0);
  Tape t(&s);
  NodeId score = triple_score(t, t.leaf(Array::vec({1.0, 0.0})), t.leaf(Array::vec({0.0, 1.0})),
                              t.leaf(Array::vec({0.0, 1.0})));
  CHECK(t.value(score)[0] == 4.0);
}

TEST_CASE("triple score: gradient wrt w equals u+r+t") {
  ParameterStore s = blank_store(1, 2, 1, 3);
  s.gcn_w = Array::vec({0.4, -0.1, 0.9});
  s.gcn_b = Array::scalar(0.2);
  std::vector<double> u = {1.0, 2.0, -0.5}, r = {0.5, 0.0, 0.25}, tv = {-1.0, 1.0, 1.0};
  Tape t(&s);
  NodeId score = triple_score(t, t.leaf(Array::vec(u)), t.leaf(Array::vec(r)),
                              t.leaf(Array::vec(tv)));
  t.backward(score);
  const auto& gw = t.param_grads().rows[static_cast<int>(Param::GcnW)].at(0);
  for (int i = 0; i < 3; ++i) CHECK(gw[i] == u[i] + r[i] + tv[i]);  // exact

  // and against central differences
  auto loss_of = [&](const ParameterStore& store) {
    Tape t2(&store);
    return t2.value(triple_score(t2, t2.leaf(Array::vec(u)), t2.leaf(Array::vec(r)),
                                 t2.leaf(Array::vec(tv))))[0];
  };
  auto fd = oracle::finite_diff_grads(s, loss_of);
  for (int i = 0; i < 3; ++i)
    CHECK(oracle::rel_err(gw[i], fd[static_cast<int>(Param::GcnW)].data[i]) < 1e-4);
  CHECK(oracle::rel_err(t.param_grads().rows[static_cast<int>(Param::GcnB)].at(0)[0],
                        fd[static_cast<int>(Param::GcnB)].data[0]) < 1e-4);
}

TEST_CASE("normalize scores") {
  Tape t;
  SUBCASE("equal scores are uniform") {
    std::vector<NodeId> scores = {t.leaf(Array::scalar(0.7)), t.leaf(Array::scalar(0.7)),
                                  t.leaf(Array::scalar(0.7))};
    NodeId w = normalize_scores(t, scores);
    for (int i = 0; i < 3; ++i) CHECK(t.value(w)[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("single score is weight one") {
    std::vector<NodeId> scores = {t.leaf(Array::scalar(-2.0))};
    CHECK(t.value(normalize_scores(t, scores))[0] == 1.0);
  }
  SUBCASE("hand case") {
    std::vector<NodeId> scores = {t.leaf(Array::scalar(1.0)), t.leaf(Array::scalar(-1.0))};
    NodeId w = normalize_scores(t, scores);
    double z = std::exp(1.0) + std::exp(-1.0);
    CHECK(t.value(w)[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  }
}

TEST_CASE("aggregate neighborhood") {
  Tape t;
  SUBCASE("one neighbor passes through") {
    std::vector<NodeId> vecs = {t.leaf(Array::vec({2.0, 3.0}))};
    NodeId out = aggregate_neighborhood(t, t.leaf(Array::vec({1.0})), vecs);
    CHECK(t.value(out)[0] == 2.0);
    CHECK(t.value(out)[1] == 3.0);
  }
  SUBCASE("zero embeddings aggregate to zero") {
    std::vector<NodeId> vecs = {t.leaf(Array::zeros(2)), t.leaf(Array::zeros(2))};
    NodeId out = aggregate_neighborhood(t, t.leaf(Array::vec({0.4, 0.6})), vecs);
    CHECK(t.value(out)[0] == 0.0);
  }
  SUBCASE("uniform weights give the mean") {
    std::vector<NodeId> vecs = {t.leaf(Array::vec({1.0, 5.0})), t.leaf(Array::vec({3.0, 1.0}))};
    NodeId out = aggregate_neighborhood(t, t.leaf(Array::vec({0.5, 0.5})), vecs);
    CHECK(t.value(out)[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(t.value(out)[1] == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("propagate: self-loop with zero embedding leaves only the center") {
  ParameterStore s = blank_store(1, 2, 4, 2);  // room for the click relation row
  set_row(s.entity_emb, 0, {0.0, 0.0});
  FusedGraph g = tiny_fused(2, {});  // item entity 0 isolated -> self loops
  std::mt19937_64 rng(1);
  Tape t(&s);
  ItemRepNodes rep = propagate(t, g, t.leaf(Array::vec({1.0, 1.0})), 0, 1, 1, rng, {});
  CHECK(t.value(rep.o_s)[0] == 0.0);
  CHECK(t.value(rep.o_s)[1] == 0.0);
  for (int i = 0; i < 2; ++i) CHECK(t.value(rep.o_v)[i] == t.value(rep.o_c)[i]);
}

TEST_CASE("propagate: single real neighbor adds its embedding") {
  ParameterStore s = blank_store(1, 3, 2, 2);
  set_row(s.entity_emb, 0, {1.0, 2.0});
  set_row(s.entity_emb, 1, {0.25, -0.5});
  FusedGraph g = tiny_fused(3, {{0, 0, 1}});
  std::mt19937_64 rng(1);
  Tape t(&s);
  ItemRepNodes rep = propagate(t, g, t.leaf(Array::vec({0.3, 0.3})), 0, 1, 1, rng, {});
  CHECK(t.value(rep.o_v)[0] == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(t.value(rep.o_v)[1] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("propagate: depth-2 tree matches the explicit unroll") {
  int d = 2;
  ParameterStore s = blank_store(1, 4, 3, d);
  std::vector<std::vector<double>> ent = {{0.2, -0.4}, {1.0, 0.5}, {-0.6, 0.3}, {0.1, 0.9}};
  std::vector<std::vector<double>> rel = {{0.5, 0.0}, {0.0, -0.5}, {0.25, 0.25}};
  for (int e = 0; e < 4; ++e) set_row(s.entity_emb, e, ent[e]);
  for (int r = 0; r < 3; ++r) set_row(s.relation_emb, r, rel[r]);
  s.gcn_w = Array::vec({0.7, -0.2});
  s.gcn_b = Array::scalar(0.1);
  std::vector<double> u = {0.9, -0.1};

  // root e0 -> {e1 via r0, e2 via r1}; e1 -> {e3 via r2, e3 via r0};
  // e2 -> {e3 via r1, e0 via r2}
  ItemTree tree = manual_tree(
      {
          {0, -1, 0, {1, 2}},
          {1, 0, 1, {3, 4}},
          {2, 1, 1, {5, 6}},
          {3, 2, 2, {}},
          {3, 0, 2, {}},
          {3, 1, 2, {}},
          {0, 2, 2, {}},
      },
      2, 2);

  Tape t(&s);
  ItemRepNodes rep = build_item_rep(t, t.leaf(Array::vec(u)), tree, {});

  // hand unroll
  auto dotv = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (int i = 0; i < d; ++i) acc += a[i] * b[i];
    return acc;
  };
  auto score = [&](const std::vector<double>& r, const std::vector<double>& childv) {
    std::vector<double> sum(d);
    for (int i = 0; i < d; ++i) sum[i] = u[i] + r[i] + childv[i];
    return dotv(s.gcn_w.data, sum) + s.gcn_b.data[0];
  };
  auto softmax2 = [](double a, double b) {
    double m = std::max(a, b);
    double ea = std::exp(a - m), eb = std::exp(b - m);
    return std::pair<double, double>{ea / (ea + eb), eb / (ea + eb)};
  };
  auto update = [&](const std::vector<double>& self, const std::vector<double>& r1,
                    const std::vector<double>& c1, const std::vector<double>& r2,
                    const std::vector<double>& c2) {
    auto [w1, w2] = softmax2(score(r1, c1), score(r2, c2));
    std::vector<double> out(d);
    for (int i = 0; i < d; ++i) out[i] = self[i] + w1 * c1[i] + w2 * c2[i];
    return out;
  };
  auto v1 = update(ent[1], rel[2], ent[3], rel[0], ent[3]);
  auto v2 = update(ent[2], rel[1], ent[3], rel[2], ent[0]);
  auto [w1, w2] = softmax2(score(rel[0], v1), score(rel[1], v2));
  std::vector<double> o_s(d), o_v(d);
  for (int i = 0; i < d; ++i) {
    o_s[i] = w1 * v1[i] + w2 * v2[i];
    o_v[i] = o_s[i] + ent[0][i];
  }
  for (int i = 0; i < d; ++i) {
    CHECK(std::abs(t.value(rep.o_s)[i] - o_s[i]) < 1e-9);
    CHECK(std::abs(t.value(rep.o_v)[i] - o_v[i]) < 1e-9);
    CHECK(std::abs(t.value(rep.o_c)[i] - ent[0][i]) < 1e-12);
  }
}

TEST_CASE("propagate: sibling order does not change o_v") {
  ParameterStore s = ParameterStore::init(1, 6, 3, 3, 808);
  std::vector<double> u = {0.1, 0.2, 0.3};
  ItemTree a = manual_tree(
      {{0, -1, 0, {1, 2, 3}}, {1, 0, 1, {}}, {2, 1, 1, {}}, {3, 2, 1, {}}}, 1, 3);
  ItemTree b = manual_tree(
      {{0, -1, 0, {1, 2, 3}}, {3, 2, 1, {}}, {1, 0, 1, {}}, {2, 1, 1, {}}}, 1, 3);
  Tape ta(&s), tb(&s);
  ItemRepNodes ra = build_item_rep(ta, ta.leaf(Array::vec(u)), a, {});
  ItemRepNodes rb = build_item_rep(tb, tb.leaf(Array::vec(u)), b, {});
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(ta.value(ra.o_v)[i] - tb.value(rb.o_v)[i]) < 1e-9);
}

TEST_CASE("propagate: zero score weights reduce to iterated mean aggregation") {
  // w=0, b=0 force uniform attention; depth <= 2 against a mean-GCN oracle
  std::mt19937_64 seed_rng(7);
  for (int depth = 1; depth <= 2; ++depth) {
    ParameterStore s = ParameterStore::init(1, 8, 3, 3, seed_rng());
    s.gcn_w.fill(0.0);
    s.gcn_b.fill(0.0);
    std::vector<Triple> triples = {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {1, 2, 4},
                                   {2, 1, 5}, {2, 2, 6}, {3, 0, 7}};
    FusedGraph g = tiny_fused(8, triples);
    std::mt19937_64 rng(99);
    ItemTree tree = sample_receptive_tree(g, 0, depth, 2, rng);
    Tape t(&s);
    ItemRepNodes rep = build_item_rep(t, t.leaf(Array::vec({0.5, 0.5, 0.5})), tree, {});

    // oracle: recursive mean of updated children + self
    std::function<std::vector<double>(int)> eval = [&](int n) -> std::vector<double> {
      const auto& node = tree.nodes[n];
      std::vector<double> self(s.entity_emb.row_ptr(node.entity),
                               s.entity_emb.row_ptr(node.entity) + 3);
      if (node.children.empty()) return self;
      std::vector<double> mean(3, 0.0);
      for (int c : node.children) {
        auto cv = eval(c);
        for (int i = 0; i < 3; ++i) mean[i] += cv[i] / node.children.size();
      }
      for (int i = 0; i < 3; ++i) mean[i] += self[i];
      return mean;
    };
    auto expect = eval(0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(t.value(rep.o_v)[i] - expect[i]) < 1e-9);
  }
}

TEST_CASE("propagate: encoder ablation returns the raw entity embedding") {
  ParameterStore s = ParameterStore::init(1, 4, 2, 3, 5);
  FusedGraph g = tiny_fused(4, {{0, 0, 1}, {0, 1, 2}});
  AblationFlags flags;
  flags.gcn = false;
  std::mt19937_64 rng(2);
  Tape t(&s);
  ItemRepNodes rep = propagate(t, g, t.leaf(Array::zeros(3)), 0, 2, 2, rng, flags);
  for (int i = 0; i < 3; ++i) {
    CHECK(t.value(rep.o_v)[i] == s.entity_emb.at(0, i));
    CHECK(t.value(rep.o_s)[i] == 0.0);
  }
}

TEST_CASE("gradients through the tree match finite differences") {
  ParameterStore s = ParameterStore::init(2, 6, 3, 4, 606);
  FusedGraph g = tiny_fused(6, {{0, 0, 1}, {0, 1, 2}, {1, 2, 3}, {2, 0, 4}, {1, 1, 5}});
  std::mt19937_64 tree_rng(17);
  ItemTree tree = sample_receptive_tree(g, 0, 2, 2, tree_rng);

  auto loss_of = [&](const ParameterStore& store) {
    Tape t(&store);
    NodeId u = t.param_row(Param::UserEmb, 0);
    ItemRepNodes rep = build_item_rep(t, u, tree, {});
    return t.value(t.l2_norm_sq(rep.o_v))[0];
  };
  Tape t(&s);
  NodeId u = t.param_row(Param::UserEmb, 0);
  ItemRepNodes rep = build_item_rep(t, u, tree, {});
  t.backward(t.l2_norm_sq(rep.o_v));
  DenseGrads dense;
  dense.init_like(s);
  dense.zero();
  dense.accumulate(t.param_grads());

  auto fd = oracle::finite_diff_grads(s, loss_of);
  for (int pi = 0; pi < kNumParams; ++pi) {
    const Array& analytic = dense.g[pi];
    for (size_t k = 0; k < analytic.data.size(); ++k)
      CHECK(oracle::rel_err(analytic.data[k], fd[pi].data[k]) < 1e-4);
  }
}

TEST_CASE("sampled tree has the right shape") {
  FusedGraph g = tiny_fused(6, {{0, 0, 1}, {0, 1, 2}, {1, 2, 3}});
  std::mt19937_64 rng(3);
  ItemTree tree = sample_receptive_tree(g, 0, 2, 3, rng);
  CHECK(tree.nodes.size() == 1 + 3 + 9);
  CHECK(tree.nodes[0].entity == 0);
  for (const auto& n : tree.nodes)
    if (n.level < 2) CHECK(n.children.size() == 3);
}
