#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cycle/error.hpp"
#include "cycle/graph_encoder.hpp"
#include "cycle/model.hpp"
#include "oracles.hpp"

using namespace cycle;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t({r, c});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

SnapshotGraph star(std::size_t leaves) {
  std::vector<Edge> e;
  for (NodeId j = 1; j <= leaves; ++j) e.emplace_back(0, j);
  return SnapshotGraph::from_edges(leaves + 1, 0, GraphKind::relation, e);
}

}  // namespace

TEST(Sampler, UnderThresholdKeepsAll) {
  const auto g = star(3);
  EXPECT_EQ(sample_neighbors(g, 0, {5, 1}, 0), (std::vector<NodeId>{1, 2, 3}));
}

TEST(Sampler, OverThresholdDrawsDistinct) {
  const auto g = star(10);
  const auto s = sample_neighbors(g, 0, {4, 1}, 3);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_EQ(std::set<NodeId>(s.begin(), s.end()).size(), 4u);
  for (NodeId j : s) EXPECT_TRUE(g.has_edge(0, j));
  EXPECT_EQ(s, sample_neighbors(g, 0, {4, 1}, 3));
  EXPECT_TRUE(sample_neighbors(g, 1, {4, 1}, 3) == std::vector<NodeId>{0});
  EXPECT_THROW(sample_neighbors(g, 0, {0, 1}, 0), UsageError);
}

TEST(Sampler, IsolatedNodeGetsNothing) {
  const auto g = SnapshotGraph::from_edges(3, 0, GraphKind::relation, std::vector<Edge>{{0, 1}});
  EXPECT_TRUE(sample_neighbors(g, 2, {4, 0}, 0).empty());
}

TEST(Attention, SingleNeighbour) {
  std::mt19937_64 rng(1);
  const auto x = random_matrix(3, 4, rng);
  const auto a = random_vec(8, rng);
  const std::vector<NodeId> nb{2};
  const auto r = attend_aggregate(0, nb, x, a);
  ASSERT_EQ(r.alpha.size(), 1u);
  EXPECT_EQ(r.alpha[0], 1.0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(r.z[c], oracle::elu(x(2, c)));
}

TEST(Attention, IdenticalNeighboursSplitEvenly) {
  std::mt19937_64 rng(2);
  auto x = random_matrix(3, 4, rng);
  for (std::size_t c = 0; c < 4; ++c) x(2, c) = x(1, c);
  const std::vector<NodeId> nb{1, 2};
  const auto r = attend_aggregate(0, nb, x, random_vec(8, rng));
  EXPECT_EQ(r.alpha[0], 0.5);
  EXPECT_EQ(r.alpha[1], 0.5);
}

TEST(Attention, EmptyNeighbourhoodIsIsolated) {
  std::mt19937_64 rng(3);
  const auto r = attend_aggregate(0, {}, random_matrix(2, 3, rng), random_vec(6, rng));
  EXPECT_TRUE(r.isolated);
  for (double v : r.z) EXPECT_EQ(v, 0.0);
}

TEST(Attention, ThreeNeighboursMatchScalarOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_matrix(6, 5, rng);
    const auto a = random_vec(10, rng);
    const std::vector<NodeId> nb{1, 3, 4};
    std::vector<double> alpha;
    const auto want = oracle::aggregate(0, nb, x, a, kAttentionSlope, &alpha);
    const auto got = attend_aggregate(0, nb, x, a);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(got.z[c], want[c], 1e-14);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got.alpha[k], alpha[k], 1e-14);
  }
}

TEST(Attention, WeightsNormalised) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 20;
    const auto x = random_matrix(n, 4, rng);
    const auto a = random_vec(8, rng);
    std::vector<NodeId> nb;
    for (NodeId j = 1; j < n; ++j) nb.push_back(j);
    const auto r = attend_aggregate(0, nb, x, a);
    double total = 0;
    for (double w : r.alpha) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Attention, TapeMatchesPlain) {
  std::mt19937_64 rng(6);
  ad::ParameterStore p;
  p.add("x", random_matrix(5, 3, rng));
  p.add("a", Tensor::vector(random_vec(6, rng)));
  const std::vector<NodeId> nb{0, 2, 4};
  ad::Tape t(&p);
  const auto z = attend_aggregate(t, 1, nb, t.param("x"), t.param("a"));
  const auto want = attend_aggregate(1, nb, p.at("x"), p.at("a").values());
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(t.value(z)[c], want.z[c], 1e-15);
  EXPECT_THROW(attend_aggregate(1, nb, p.at("x"), std::vector<double>(5)), UsageError);
}

TEST(Projection, Examples) {
  std::mt19937_64 rng(7);
  const auto z = random_vec(4, rng);
  const Tensor w1({3, 4}), b1({3}), w2({2, 3}), b2({2});
  for (double v : project(z, w1, b1, w2, b2)) EXPECT_EQ(v, 0.0);

  Tensor id({4, 4});
  for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
  const std::vector<double> pos{0.0, 0.5, 1.25, 3.0};
  EXPECT_EQ(project(pos, id, Tensor({4}), id, Tensor({4})), pos);
  EXPECT_THROW(project(z, Tensor({3, 5}), b1, w2, b2), UsageError);
}

TEST(Projection, MatchesMatrixOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_vec(5, rng);
    const auto w1 = random_matrix(4, 5, rng), w2 = random_matrix(3, 4, rng);
    const auto b1 = Tensor::vector(random_vec(4, rng)), b2 = Tensor::vector(random_vec(3, rng));
    auto h = oracle::affine(w1, b1, z);
    for (auto& v : h) v = oracle::elu(v);
    const auto want = oracle::affine(w2, b2, h);
    const auto got = project(z, w1, b1, w2, b2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
  }
}

TEST(GraphEncoder, PipelineGradientIncludingFeatures) {
  std::mt19937_64 rng(9);
  GraphEncoder enc{3, 4, 2, kAttentionSlope};
  Rng init(1);
  ad::ParameterStore p;
  enc.init_parameters(p, init);
  p.add(GraphEncoder::kFeatures, random_matrix(5, 3, rng));
  const std::vector<NodeId> nb{1, 2, 4};
  const ad::LossFn fn = [&](ad::Tape& t) {
    const auto zp = enc.project(t, enc.embed(t, 0, nb, t.param(GraphEncoder::kFeatures)));
    return t.dot(zp, t.constant(Tensor::vector({0.7, -1.3})));
  };
  for (int probe = 0; probe < 5; ++probe) {
    for (const auto& name : p.names()) {
      for (auto& v : p.at(name).values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    const auto r = ad::grad_check({"graph_pipeline", fn, {}}, p, 1e-4);
    EXPECT_TRUE(r.pass) << r.max_rel_error;
  }
}

TEST(GraphEncoder, ProjectionSharedAcrossViews) {
  // Same structure as both relation and feature graph, so the two views can
  // only differ through their parameters.
  const std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
  const auto rel = SnapshotGraph::from_edges(4, 0, GraphKind::relation, e);
  const auto feat = SnapshotGraph::from_edges(4, 0, GraphKind::feature, e);
  std::mt19937_64 rng(10);
  const auto x = random_matrix(4, 3, rng);
  CycleModel model({4, 5, FusionMode::on, false}, 10, 3);
  auto p = model.init_parameters(1);
  GraphInputs in;
  in.features = &x;
  in.fusion_graph = &rel;
  in.contrast_graph = &rel;
  in.feature_graph = &feat;
  auto views = [&](const ad::ParameterStore& params) {
    ad::Tape t(&params);
    GraphPass pass(t, model, in, {8, 0}, 0);
    const auto r = pass.relation_view(0);
    const auto f = pass.feature_view(0);
    return std::pair<Tensor, Tensor>{t.value(r), t.value(f)};
  };
  const auto [r0, f0] = views(p);
  EXPECT_EQ(r0, f0);
  p.at(GraphEncoder::kW2)(0, 0) += 0.5;
  p.at(GraphEncoder::kB1)[1] -= 0.25;
  const auto [r1, f1] = views(p);
  EXPECT_EQ(r1, f1);
  EXPECT_NE(r1, r0);
}

TEST(GraphEncoder, FullThresholdIsSeedIndependent) {
  std::mt19937_64 rng(11);
  const auto g = oracle::random_graph(30, 0.2, 0, rng);
  std::size_t max_deg = 0;
  for (NodeId i = 0; i < 30; ++i) max_deg = std::max(max_deg, degree(g, i));
  const auto x = random_matrix(30, 4, rng);
  const auto a = random_vec(8, rng);
  for (NodeId i = 0; i < 30; ++i) {
    const auto base = attend_aggregate(i, sample_neighbors(g, i, {max_deg, 0}, 0), x, a).z;
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      EXPECT_EQ(attend_aggregate(i, sample_neighbors(g, i, {max_deg, seed}, seed), x, a).z, base);
    }
  }
}
