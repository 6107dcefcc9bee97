#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "modalgraph/network.hpp"
#include "modalgraph/training.hpp"

using namespace modalgraph;

namespace {

ModelConfig cfg_for(int T, Variant v = Variant::full) {
  ModelConfig c;
  c.P = 5;
  c.input_length = T;
  c.variant = v;
  return c;
}

GraphInput random_graph(int n, int T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::normal_distribution<double> n01;
  TrussSpec t;
  for (int i = 0; i < n; ++i) t.nodes.push_back({u(rng), u(rng)});
  for (int i = 1; i < n; ++i) t.edges.push_back({std::uniform_int_distribution<int>(0, i - 1)(rng), i});
  for (int k = 0; k < n; ++k) {
    const int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const int b = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a != b) t.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(t.edges.begin(), t.edges.end());
  t.edges.erase(std::unique(t.edges.begin(), t.edges.end()), t.edges.end());
  Matrix X(n, T);
  for (Eigen::Index j = 0; j < T; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = n01(rng);
  return make_graph_input(t, X / X.cwiseAbs().maxCoeff());
}

// new node i is old node perm[i]
GraphInput permute(const GraphInput& g, const std::vector<int>& perm) {
  const int n = g.node_count();
  std::vector<int> inv(n);
  for (int i = 0; i < n; ++i) inv[perm[i]] = i;
  GraphInput p;
  p.signals.resize(g.signals.rows(), g.signals.cols());
  p.coords.resize(n);
  p.neighbours.resize(n);
  for (int i = 0; i < n; ++i) {
    p.signals.row(i) = g.signals.row(perm[i]);
    p.coords[i] = g.coords[perm[i]];
    for (int u : g.neighbours[perm[i]]) p.neighbours[i].push_back(inv[u]);
  }
  return p;
}

std::vector<int> random_perm(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

TEST(Network, OutputShapesMatchGraphAndConfig) {
  DecompositionModel m(cfg_for(64), 1);
  const auto g = random_graph(25, 64, 2);
  const auto out = m.forward(g);
  EXPECT_EQ(out.Q.rows(), 5);
  EXPECT_EQ(out.Q.cols(), 64);
  EXPECT_EQ(out.Phi.rows(), 25);
  EXPECT_EQ(out.Phi.cols(), 5);
  EXPECT_EQ(m.encode(g).rows(), 25);
  EXPECT_EQ(m.encode(g).cols(), 128);
}

TEST(Network, PaperWidthsForLongSignals) {
  ModelConfig c;
  c.input_length = 2000;
  DecompositionModel m(c, 1);
  const auto g = random_graph(25, 2000, 3);
  const auto out = m.forward(g);
  EXPECT_EQ(m.encode(g).rows(), 25);
  EXPECT_EQ(m.encode(g).cols(), 128);
  EXPECT_EQ(out.Q.rows(), 7);
  EXPECT_EQ(out.Q.cols(), 2000);
  EXPECT_EQ(out.Phi.rows(), 25);
  EXPECT_EQ(out.Phi.cols(), 7);
}

TEST(Network, RejectsWrongSignalLength) {
  DecompositionModel m(cfg_for(64), 1);
  EXPECT_THROW(m.forward(random_graph(6, 32, 1)), InvalidArgument);
}

TEST(Network, PermutationContract) {
  for (Variant v : {Variant::full, Variant::set_lstm}) {
    DecompositionModel m(cfg_for(48, v), 11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto g = random_graph(8 + trial, 48, 100 + trial);
      const auto perm = random_perm(g.node_count(), 500 + trial);
      const auto a = m.forward(g);
      const auto b = m.forward(permute(g, perm));
      EXPECT_LT((a.Q - b.Q).cwiseAbs().maxCoeff(), 1e-5) << variant_name(v);
      for (int i = 0; i < g.node_count(); ++i)
        EXPECT_LT((b.Phi.row(i) - a.Phi.row(perm[i])).cwiseAbs().maxCoeff(), 1e-5) << variant_name(v);
    }
  }
}

TEST(Network, EncoderIsPermutationEquivariant) {
  DecompositionModel m(cfg_for(48), 4);
  const auto g = random_graph(15, 48, 7);
  const auto perm = random_perm(15, 8);
  const Matrix a = m.encode(g), b = m.encode(permute(g, perm));
  for (int i = 0; i < 15; ++i) EXPECT_LT((b.row(i) - a.row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Network, LossIsPermutationInvariant) {
  DecompositionModel m(cfg_for(48), 21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(12, 48, 40 + trial);
    const auto la = graph_loss(m, g, {}).total;
    const auto lb = graph_loss(m, permute(g, random_perm(12, 60 + trial)), {}).total;
    EXPECT_NEAR(la, lb, 1e-6);
  }
}

TEST(Network, DuplicatingEveryNodeLeavesPooledResponsesUnchanged) {
  // two disjoint copies of the graph: attention pooling weights halve per copy
  DecompositionModel m(cfg_for(32), 5);
  const auto g = random_graph(9, 32, 9);
  GraphInput d;
  const int n = g.node_count();
  d.signals.resize(2 * n, 32);
  d.signals << g.signals, g.signals;
  d.coords = g.coords;
  d.coords.insert(d.coords.end(), g.coords.begin(), g.coords.end());
  d.neighbours = g.neighbours;
  for (const auto& nb : g.neighbours) {
    std::vector<int> shifted;
    for (int u : nb) shifted.push_back(u + n);
    d.neighbours.push_back(shifted);
  }
  const auto a = m.forward(g), b = m.forward(d);
  EXPECT_LT((a.Q - b.Q).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Network, RaggedBatchKeepsRowCounts) {
  DecompositionModel m(cfg_for(40), 2);
  for (int n : {20, 25, 31}) {
    const auto out = m.forward(random_graph(n, 40, n));
    EXPECT_EQ(out.Phi.rows(), n);
    EXPECT_EQ(out.Q.rows(), 5);
  }
}

TEST(Network, FiniteOutputsAtInitialisation) {
  DecompositionModel m(cfg_for(40), 3);
  for (int k = 0; k < 100; ++k) {
    const auto out = m.forward(random_graph(5 + k % 20, 40, 1000 + k));
    ASSERT_TRUE(out.Q.allFinite());
    ASSERT_TRUE(out.Phi.allFinite());
  }
}

TEST(Network, ZeroSignalAndZeroBiasesGiveZeroHidden) {
  DecompositionModel m(cfg_for(32), 6);
  for (auto& p : m.params().all())
    if (p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) p.value.setZero();
  auto g = random_graph(10, 32, 3);
  g.signals.setZero();
  EXPECT_EQ(m.encode(g).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Network, IdenticalHiddenRowsGiveIdenticalShapes) {
  DecompositionModel m(cfg_for(32), 6);
  auto g = random_graph(6, 32, 4);
  // nodes 0 and 1: same signal, same closed neighbourhood
  g.signals.row(1) = g.signals.row(0);
  g.neighbours[0] = {0, 1, 2};
  g.neighbours[1] = {1, 0, 2};
  g.neighbours[2] = {2, 0, 1};
  for (int v = 3; v < 6; ++v) g.neighbours[v] = {v};
  const auto out = m.forward(g);
  EXPECT_EQ(out.Phi.row(0), out.Phi.row(1));
}

TEST(Network, AblationVariantsShareTheOutputContract) {
  const auto g = random_graph(18, 40, 12);
  for (Variant v : {Variant::no_gnn, Variant::set_lstm}) {
    DecompositionModel m(cfg_for(40, v), 8);
    const auto r = m.decompose(g);
    EXPECT_EQ(r.modal_responses.rows(), 5);
    EXPECT_EQ(r.modal_responses.cols(), 40);
    EXPECT_EQ(r.mode_shapes.rows(), 18);
    EXPECT_EQ(r.mode_shapes.cols(), 5);
  }
  DecompositionModel reduced(cfg_for(40, Variant::no_gnn), 8);
  EXPECT_EQ(reduced.forward(g).rows.size(), 5u);
}

TEST(Network, ReducedVariantUsesEvenlySpreadNodes) {
  std::vector<Point2> coords;
  for (int i = 0; i < 10; ++i) coords.push_back({static_cast<double>(9 - i), 0.0});
  const auto s = even_subset(coords, 5);
  // x-order is reversed index order; positions round((i + 1/2) * 2 - 1/2) = 1, 3, 5, 7, 9
  EXPECT_EQ(s, (std::vector<int>{8, 6, 4, 2, 0}));
}

TEST(Network, CanonicalShapesKeepTheProduct) {
  DecompositionModel m(cfg_for(32), 6);
  const auto g = random_graph(9, 32, 31);
  const auto raw = m.forward(g);
  const auto r = m.decompose(g);
  EXPECT_LT((raw.Phi * raw.Q - r.mode_shapes * r.modal_responses).cwiseAbs().maxCoeff(), 1e-10);
  for (int p = 0; p < 5; ++p) {
    EXPECT_NEAR(r.mode_shapes.col(p).cwiseAbs().maxCoeff(), 1.0, 1e-12);
    EXPECT_NEAR(r.mode_shapes.col(p).maxCoeff(), 1.0, 1e-12);
  }
}

TEST(Network, SingleNodeLayerMatchesClosedForm) {
  nn::ParamSet ps;
  std::mt19937_64 rng(3);
  nn::SageLayer layer(ps, "l", 4, 3, nn::Activation::relu, rng);
  Matrix h(1, 4);
  h << 0.3, -1.2, 0.8, 0.5;
  nn::SageLayer::Cache c;
  const Matrix out = layer.forward(h, {{0}}, c);
  const auto relu = [](const Matrix& x) { return x.cwiseMax(0.0); };
  const Matrix z = relu(h * ps.find("l.pool.weight")->value + ps.find("l.pool.bias")->value);
  const Matrix expect = relu(z * ps.find("l.weight")->value) + ps.find("l.bias")->value;
  EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Network, AllEqualFeaturesStayEqual) {
  nn::ParamSet ps;
  std::mt19937_64 rng(4);
  nn::SageLayer layer(ps, "l", 6, 5, nn::Activation::relu, rng);
  const auto g = random_graph(7, 6, 2);
  Matrix h = Matrix::Ones(7, 6) * 0.7;
  nn::SageLayer::Cache c;
  const Matrix out = layer.forward(h, g.neighbours, c);
  for (int i = 1; i < 7; ++i) EXPECT_EQ(out.row(i), out.row(0));
}

TEST(Checkpoint, RoundTripReproducesOutputs) {
  for (Variant v : {Variant::full, Variant::no_gnn, Variant::set_lstm}) {
    DecompositionModel m(cfg_for(32, v), 77);
    const std::string path = testing::TempDir() + "/ckpt_" + variant_name(v) + ".mgc";
    save_checkpoint(m, path, {{"epoch", 3}});
    nlohmann::json meta;
    auto back = load_checkpoint(path, &meta);
    EXPECT_EQ(meta["epoch"], 3);
    EXPECT_EQ(back->config().to_json(), m.config().to_json());
    const auto g = random_graph(10, 32, 5);
    EXPECT_EQ(back->forward(g).Q, m.forward(g).Q);
  }
}

TEST(Checkpoint, WrongKindRejected) {
  Container c;
  c.kind = "dataset";
  const std::string path = testing::TempDir() + "/not_ckpt.mgc";
  write_container(path, c);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig c;
  c.hidden_dim = 130;  // not divisible by 4 heads
  EXPECT_THROW(c.validate(), InvalidArgument);
  ModelConfig d;
  d.variant = Variant::set_lstm;
  d.P = 6;
  EXPECT_EQ(ModelConfig::from_json(d.to_json()).to_json(), d.to_json());
  EXPECT_THROW(parse_variant("mlp"), InvalidArgument);
}
