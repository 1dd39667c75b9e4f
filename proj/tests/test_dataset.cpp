#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "cycle/dataset.hpp"
#include "cycle/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cycle;

namespace {

// Whitespace split with ids assigned on first sight.
DescriptionTokenizer word_tokenizer() {
  auto table = std::make_shared<std::map<std::string, TokenId>>();
  return [table](const std::string& text) {
    std::vector<TokenId> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
      auto [it, fresh] = table->try_emplace(w, static_cast<TokenId>(table->size()));
      out.push_back(it->second);
    }
    return out;
  };
}

std::string repeat(const std::string& w, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += w + " ";
  return out;
}

std::set<std::pair<NodeId, NodeId>> edge_set(const SnapshotGraph& g) {
  std::set<std::pair<NodeId, NodeId>> s;
  for (auto e : g.edges()) s.insert(e);
  return s;
}

Tensor matrix(std::size_t n, std::size_t d, std::vector<double> v) { return Tensor({n, d}, v); }

}  // namespace

TEST(FeatureMatrix, InclusiveCountBounds) {
  EntityRegistry reg;
  // Four tokens with corpus counts 45, 46, 200, 201 spread over two entities.
  reg.add("Q1", "x", repeat("w45", 20) + repeat("w46", 23) + repeat("w200", 100) + repeat("w201", 100));
  reg.add("Q2", "y", repeat("w45", 25) + repeat("w46", 23) + repeat("w200", 100) + repeat("w201", 101));
  auto tok = word_tokenizer();
  const auto fm = build_feature_matrix(reg, tok, {46, 200});
  EXPECT_EQ(fm.m, 2u);
  const auto ids = tok("w45 w46 w200 w201");
  EXPECT_FALSE(fm.vocab.contains(ids[0]));
  EXPECT_TRUE(fm.vocab.contains(ids[1]));
  EXPECT_TRUE(fm.vocab.contains(ids[2]));
  EXPECT_FALSE(fm.vocab.contains(ids[3]));
  for (const auto& row : fm.rows) EXPECT_EQ(row.size(), 2u);
}

TEST(FeatureMatrix, EmptyAndIdenticalDescriptions) {
  EntityRegistry reg;
  reg.add("Q1", "a", "red blue");
  reg.add("Q2", "b", "");
  reg.add("Q3", "c", "red blue");
  const auto fm = build_feature_matrix(reg, word_tokenizer(), {1, 10});
  EXPECT_TRUE(fm.rows[1].empty());
  EXPECT_EQ(fm.rows[0], fm.rows[2]);
  for (const auto& row : fm.rows) {
    for (auto c : row) EXPECT_LT(c, fm.m);
  }
}

TEST(FeatureMatrix, EverythingFilteredIsAnError) {
  EntityRegistry reg;
  reg.add("Q1", "a", "rare");
  EXPECT_THROW(build_feature_matrix(reg, word_tokenizer(), {46, 200}), DataError);
}

TEST(FeatureMatrix, PermutedEntityOrderPermutesRows) {
  const std::vector<std::pair<std::string, std::string>> ents{
      {"Q1", "red green"}, {"Q2", "green blue blue"}, {"Q3", "red"}, {"Q4", "blue red green"}};
  EntityRegistry a, b;
  for (const auto& [q, d] : ents) a.add(q, "t", d);
  for (auto it = ents.rbegin(); it != ents.rend(); ++it) b.add(it->first, "t", it->second);
  // A fixed token table so both builds share column ids.
  auto tok = [](const std::string& text) {
    static const std::map<std::string, TokenId> ids{{"red", 0}, {"green", 1}, {"blue", 2}};
    std::vector<TokenId> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(ids.at(w));
    return out;
  };
  const auto fa = build_feature_matrix(a, tok, {1, 10});
  const auto fb = build_feature_matrix(b, tok, {1, 10});
  for (const auto& [q, d] : ents) EXPECT_EQ(fa.rows[a.id_of(q)], fb.rows[b.id_of(q)]);
}

TEST(FeatureMatrix, SaveLoadKeepsRows) {
  testutil::TempDir dir;
  EntityRegistry reg;
  reg.add("Q1", "a", "red blue");
  reg.add("Q2", "b", "blue");
  const auto fm = build_feature_matrix(reg, word_tokenizer(), {1, 10});
  fm.save(dir / "f.txt");
  const auto back = FeatureMatrix::load(dir / "f.txt");
  EXPECT_EQ(back.rows, fm.rows);
  EXPECT_EQ(back.m, fm.m);
}

TEST(Embeddings, FeatureRowProviderIsUnitOrZero) {
  EntityRegistry reg;
  reg.add("Q1", "a", "red blue green");
  reg.add("Q2", "b", "");
  reg.add("Q3", "c", "red");
  const auto fm = build_feature_matrix(reg, word_tokenizer(), {1, 10});
  const auto x = embed_descriptions(reg, FeatureRowEmbedder(fm));
  EXPECT_NEAR(l2_norm(x.row(0)), 1.0, 1e-15);
  EXPECT_EQ(l2_norm(x.row(1)), 0.0);
  EXPECT_NEAR(l2_norm(x.row(2)), 1.0, 1e-15);
  EXPECT_EQ(x, embed_descriptions(reg, FeatureRowEmbedder(fm)));
}

TEST(Embeddings, TableProviderAndFailureNamesQid) {
  EntityRegistry reg;
  reg.add("Qa", "a", "a");
  reg.add("Qb", "b", "b");
  TableEmbedder table({{"Qa", {1, 0}}, {"Qb", {0, 1}}});
  const auto x = embed_descriptions(reg, table);
  EXPECT_EQ(x, matrix(2, 2, {1, 0, 0, 1}));
  reg.add("Qc", "c", "c");
  try {
    embed_descriptions(reg, table);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Qc"), std::string::npos);
  }
}

TEST(FeatureGraph, NearestByCosine) {
  const auto x = matrix(3, 2, {1, 0, 0.9, 0.1, -1, 0});
  const auto g = build_feature_graph(x, {1});
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_EQ(g.kind(), GraphKind::feature);
  // Hand value of the winning similarity.
  EXPECT_NEAR(cosine(x.row(0), x.row(1)), 0.9 / std::sqrt(0.82), 1e-15);
  EXPECT_NEAR(cosine(x.row(0), x.row(1)), 0.9939, 1e-4);
  EXPECT_EQ(edge_set(g), oracle::knn_edges(x, 1));
}

TEST(FeatureGraph, TiesGoToLowerId) {
  const auto x = matrix(4, 2, {1, 1, 1, 1, 1, 1, 1, 1});
  const auto g = build_feature_graph(x, {1});
  // 0 picks 1; 1, 2 and 3 pick 0.
  EXPECT_EQ(edge_set(g), (std::set<std::pair<NodeId, NodeId>>{{0, 1}, {0, 2}, {0, 3}}));
}

TEST(FeatureGraph, ZeroRowIsIsolated) {
  const auto x = matrix(4, 2, {1, 0, 0, 0, 0.5, 0.5, 0, 1});
  const auto g = build_feature_graph(x, {2});
  EXPECT_EQ(degree(g, 1), 0u);
}

TEST(FeatureGraph, KAtLeastNIsAnError) {
  const auto x = matrix(3, 2, {1, 0, 0, 1, 1, 1});
  EXPECT_THROW(build_feature_graph(x, {3}), UsageError);
  EXPECT_THROW(build_feature_graph(x, {0}), UsageError);
}

TEST(FeatureGraph, ScaleInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g01;
  Tensor x({80, 6});
  for (auto& v : x.values()) v = g01(rng);
  Tensor y = x;
  for (auto& v : y.values()) v *= 4.0;  // exact in binary
  EXPECT_EQ(edge_set(build_feature_graph(x, {5})), edge_set(build_feature_graph(y, {5})));
}

TEST(FeatureGraph, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g01;
  for (std::size_t n : {10u, 57u, 200u}) {
    Tensor x({n, 8});
    for (auto& v : x.values()) v = g01(rng);
    // Exact duplicate rows exercise the tie rule.
    for (std::size_t c = 0; c < 8; ++c) x(n - 1, c) = x(0, c), x(n - 2, c) = x(1, c);
    for (std::size_t k : {1u, 3u, 7u}) {
      EXPECT_EQ(edge_set(build_feature_graph(x, {k})), oracle::knn_edges(x, k)) << n << " " << k;
    }
  }
}

TEST(DiffPools, WorkedExample) {
  // Nodes 1..3 of the example, node 0 unused.
  const auto t1 = SnapshotGraph::from_edges(4, 2019, GraphKind::relation, std::vector<Edge>{{1, 2}});
  const auto t2 = SnapshotGraph::from_edges(4, 2020, GraphKind::relation, std::vector<Edge>{{1, 3}});
  const auto p = diff_pools(t1, t2);
  EXPECT_EQ(p.positives[1], std::vector<NodeId>{3});
  EXPECT_EQ(p.negatives[1], std::vector<NodeId>{2});
  EXPECT_TRUE(p.positives[2].empty());
  EXPECT_EQ(p.negatives[2], std::vector<NodeId>{1});
  EXPECT_EQ(p.positives[3], std::vector<NodeId>{1});
  EXPECT_TRUE(p.negatives[3].empty());
  EXPECT_EQ(p.t1, 2019);
  EXPECT_EQ(p.t2, 2020);
}

TEST(DiffPools, IdenticalSnapshotsGiveEmptyPools) {
  std::mt19937_64 rng(1);
  const auto g = oracle::random_graph(50, 0.1, 0, rng);
  const auto p = diff_pools(g, g);
  for (NodeId i = 0; i < 50; ++i) {
    EXPECT_TRUE(p.positives[i].empty());
    EXPECT_TRUE(p.negatives[i].empty());
  }
}

TEST(DiffPools, BruteForceAndAntisymmetry) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_graph(100, 0.05, 0, rng);
    const auto b = oracle::random_graph(100, 0.05, 1, rng);
    const auto fwd = diff_pools(a, b);
    const auto bwd = diff_pools(b, a);
    const auto want = oracle::diff(a, b);
    EXPECT_EQ(fwd.positives, want.positives);
    EXPECT_EQ(fwd.negatives, want.negatives);
    EXPECT_EQ(fwd.positives, bwd.negatives);
    EXPECT_EQ(fwd.negatives, bwd.positives);
  }
}

TEST(DiffPools, MismatchedSizeIsAnError) {
  const auto a = SnapshotGraph::from_edges(3, 0, GraphKind::relation, {});
  const auto b = SnapshotGraph::from_edges(4, 1, GraphKind::relation, {});
  EXPECT_THROW(diff_pools(a, b), UsageError);
}

TEST(FeaturePools, StarCompleteAndSeed) {
  std::vector<Edge> star;
  for (NodeId leaf = 1; leaf < 8; ++leaf) star.emplace_back(0, leaf);
  const auto s = SnapshotGraph::from_edges(8, 0, GraphKind::feature, star);
  const auto ps = pools_feature(s, 3, 9);
  EXPECT_EQ(ps.positives[0], (std::vector<NodeId>{1, 2, 3, 4, 5, 6, 7}));
  EXPECT_TRUE(ps.negatives[0].empty());
  for (NodeId leaf = 1; leaf < 8; ++leaf) {
    EXPECT_EQ(ps.negatives[leaf].size(), 3u);
    for (NodeId j : ps.negatives[leaf]) {
      EXPECT_NE(j, leaf);
      EXPECT_NE(j, 0u);
    }
  }
  EXPECT_EQ(ps, pools_feature(s, 3, 9));

  std::vector<Edge> complete;
  for (NodeId i = 0; i < 6; ++i) {
    for (NodeId j = i + 1; j < 6; ++j) complete.emplace_back(i, j);
  }
  const auto pc = pools_feature(SnapshotGraph::from_edges(6, 0, GraphKind::feature, complete), 32, 1);
  for (const auto& neg : pc.negatives) EXPECT_TRUE(neg.empty());
}

TEST(Pools, SaveLoadRoundTrip) {
  testutil::TempDir dir;
  std::mt19937_64 rng(4);
  const auto p = diff_pools(oracle::random_graph(30, 0.2, 2019, rng),
                            oracle::random_graph(30, 0.2, 2020, rng));
  p.save(dir / "p.jsonl", "abc");
  EXPECT_EQ(SamplePools::load(dir / "p.jsonl"), p);
}
