#include <gtest/gtest.h>

#include <map>

#include "cycle/error.hpp"
#include "cycle/run_config.hpp"
#include "test_util.hpp"

using namespace cycle;

TEST(RunConfig, DefaultsMirrorModuleDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.token_filter().min_count, 46u);
  EXPECT_EQ(c.token_filter().max_count, 200u);
  EXPECT_DOUBLE_EQ(c.train().lr, 1e-5);
  EXPECT_EQ(c.train().weights, (LossWeights{1, 1, 1}));
  EXPECT_EQ(c.eval().ns, (std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 64}));
  EXPECT_EQ(c.synth().n, 500u);
  EXPECT_DOUBLE_EQ(c.synth().drift, 0.15);
}

TEST(RunConfig, UnknownKeysAndBadValuesAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("train.nope", "1"), UsageError);
  EXPECT_THROW(c.set("train.lr", "fast"), UsageError);
  EXPECT_THROW(c.set("synth.n", "-3"), UsageError);
  EXPECT_THROW(c.set("synth.growth", "maybe"), UsageError);
  EXPECT_THROW(c.set_assignment("no_equals_sign"), UsageError);
}

TEST(RunConfig, LayersApplyInOrder) {
  testutil::TempDir dir;
  testutil::write_file(dir / "run.conf", "# comment\n\ntrain.lr=0.5\ntrain.epochs=3\nseed=4\n");
  RunConfig c;
  c.load_file(dir / "run.conf");
  EXPECT_EQ(c.get("train.lr"), "0.5");
  const std::map<std::string, std::string> env{{"CYCLE_TRAIN_EPOCHS", "7"}, {"CYCLE_SEED", "9"}};
  c.apply_env([&](const char* name) -> const char* {
    const auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  EXPECT_EQ(c.get_size("train.epochs"), 7u);
  c.set_assignment("seed=11");
  EXPECT_EQ(c.get_size("seed"), 11u);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 0.5);
  EXPECT_EQ(RunConfig::env_name("train.neighbor_threshold"), "CYCLE_TRAIN_NEIGHBOR_THRESHOLD");

  testutil::write_file(dir / "bad.conf", "train.unknown=1\n");
  EXPECT_THROW(c.load_file(dir / "bad.conf"), UsageError);
}

TEST(RunConfig, HashesTrackTheRightKeys) {
  RunConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.set("train.lr", "0.1");
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.dataset_hash(), b.dataset_hash());
  b.set("synth.drift", "0.3");
  EXPECT_NE(a.dataset_hash(), b.dataset_hash());
  EXPECT_EQ(a.hash().size(), 16u);
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
}

TEST(RunConfig, TextIsSortedAndComplete) {
  const RunConfig c;
  const auto text = c.text();
  std::size_t lines = 0;
  std::string prev;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line); ++lines) {
    EXPECT_LT(prev, line);
    prev = line;
  }
  EXPECT_EQ(lines, RunConfig::keys().size());
  EXPECT_EQ(c.to_json().size(), RunConfig::keys().size());
}
