#include <gtest/gtest.h>

#include <sstream>

#include "cycle/error.hpp"
#include "cycle/trainer.hpp"
#include "test_util.hpp"

using namespace cycle;

namespace {

// 32 entities, two train mentions each: 64 mentions in the first year.
struct Setup {
  testutil::SmallWorld world;
  TrainData data;
  TrainConfig cfg;
};

Setup make_setup(std::size_t epochs = 1) {
  auto rc = testutil::small_config();
  rc.set("train.epochs", std::to_string(epochs));
  Setup s{testutil::small_world(rc), {}, rc.train()};
  const auto years = s.world.corpus.kg.years();
  s.cfg.train_year = years[0];
  s.cfg.target_year = years[1];
  s.data = testutil::small_train_data(s.world, years[0], years[1]);
  return s;
}

ad::ParameterStore objective_grads(const Setup& s, const ad::ParameterStore& params,
                                   const LossWeights& w, bool fusion = true) {
  const CycleModel model(s.cfg.model, s.data.vocab_size, s.data.features.cols());
  ad::Tape tape(&params);
  const auto in = s.data.inputs();
  const std::size_t k = 8;
  const ObjectiveBatch batch{std::span(s.data.mention_seqs).first(k), std::span(s.data.gold).first(k)};
  std::vector<NodeId> nodes(s.data.entity_seqs.size());
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  ObjectiveOptions opts{s.cfg.sampler(), s.cfg.contrastive, 0, fusion};
  const auto terms = build_objective(tape, model, s.data.entity_seqs, in, &batch, nodes, true, opts);
  EXPECT_TRUE(terms.L_e && terms.L_f && terms.L_r);
  tape.backward(weighted_objective(tape, terms, w));
  return tape.parameter_grads();
}

}  // namespace

TEST(Trainer, TextOnlyLeavesGraphParametersUntouched) {
  auto s = make_setup(2);
  s.cfg.weights = {1, 0, 0};
  const auto r = train(s.data, s.cfg);
  EXPECT_EQ(r.checkpoint.model.fusion, FusionMode::off);
  const CycleModel model(r.checkpoint.model, s.data.vocab_size, s.data.features.cols());
  const auto init = model.init_parameters(s.cfg.seed, &s.data.features);
  std::size_t graph_slots = 0;
  for (const auto& name : init.names()) {
    if (!GraphEncoder::owns(name)) continue;
    ++graph_slots;
    EXPECT_EQ(r.checkpoint.params.at(name), init.at(name)) << name;
  }
  EXPECT_GT(graph_slots, 0u);
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.loss.L_f, 0.0);
    EXPECT_EQ(e.loss.L_r, 0.0);
  }
}

TEST(Trainer, TextOnlyObjectiveGivesGraphZeroGradient) {
  // Text-only weights resolve fusion off; with fusion on the entity-linking
  // loss would reach the graph encoder through the fused entity vectors.
  const auto s = make_setup();
  const CycleModel model(s.cfg.model, s.data.vocab_size, s.data.features.cols());
  const auto params = model.init_parameters(1, &s.data.features);
  const auto g = objective_grads(s, params, {1, 0, 0}, false);
  for (const auto& name : g.names()) {
    if (!GraphEncoder::owns(name)) continue;
    for (double v : g.at(name).values()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(Trainer, SameSeedSameReports) {
  const auto s = make_setup(2);
  const auto a = train(s.data, s.cfg), b = train(s.data, s.cfg);
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_TRUE(a.checkpoint == b.checkpoint);
}

TEST(Trainer, OneEpochLowersTheObjective) {
  const auto s = make_setup(1);
  ASSERT_EQ(s.data.mention_seqs.size(), 64u);
  const CycleModel model(s.cfg.model, s.data.vocab_size, s.data.features.cols());
  const auto before = objective_report(s.data, s.cfg, model.init_parameters(s.cfg.seed, &s.data.features));
  const auto r = train(s.data, s.cfg);
  const auto after = objective_report(s.data, s.cfg, r.checkpoint.params);
  EXPECT_LT(after.L, before.L);
}

TEST(Trainer, ResumeEqualsUninterrupted) {
  auto s = make_setup(3);
  const auto whole = train(s.data, s.cfg, "h");
  auto first = s;
  first.cfg.epochs = 1;
  const auto part = train(first.data, first.cfg, "h");
  // Round-trip through bytes to cover the container too.
  std::stringstream buf;
  write_checkpoint(buf, part.checkpoint);
  const auto reloaded = read_checkpoint(buf);
  ASSERT_TRUE(reloaded == part.checkpoint);
  const auto rest = train(s.data, s.cfg, "h", &reloaded);
  EXPECT_TRUE(rest.warnings.empty());
  EXPECT_TRUE(rest.checkpoint == whole.checkpoint);
  std::vector<EpochReport> joined = part.epochs;
  joined.insert(joined.end(), rest.epochs.begin(), rest.epochs.end());
  EXPECT_EQ(joined, whole.epochs);
}

TEST(Trainer, HashMismatchOnResumeWarns) {
  const auto s = make_setup(1);
  const auto part = train(s.data, s.cfg, "one");
  auto more = s.cfg;
  more.epochs = 2;
  const auto rest = train(s.data, more, "two", &part.checkpoint);
  ASSERT_EQ(rest.warnings.size(), 1u);
  EXPECT_NE(rest.warnings[0].find("config hash"), std::string::npos);
}

TEST(Checkpoint, FileRoundTripAndVersion) {
  testutil::TempDir dir;
  const auto s = make_setup(1);
  const auto ck = train(s.data, s.cfg, "abc").checkpoint;
  save_checkpoint(dir / "c.bin", ck);
  EXPECT_TRUE(load_checkpoint(dir / "c.bin") == ck);
  auto bytes = testutil::read_file(dir / "c.bin");
  bytes[0] = static_cast<char>(kCheckpointVersion + 7);
  testutil::write_file(dir / "bad.bin", bytes);
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), DataError);
  testutil::write_file(dir / "short.bin", testutil::read_file(dir / "c.bin").substr(0, 40));
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), DataError);
}

TEST(Trainer, LossWeightsActLinearlyOnGradients) {
  const auto s = make_setup();
  const CycleModel model(s.cfg.model, s.data.vocab_size, s.data.features.cols());
  const auto params = model.init_parameters(2, &s.data.features);
  const auto ge = objective_grads(s, params, {1, 0, 0});
  const auto gf = objective_grads(s, params, {0, 1, 0});
  const auto gr = objective_grads(s, params, {0, 0, 1});
  const LossWeights w{0.3, 0.7, 1.1};
  const auto g = objective_grads(s, params, w);
  for (const auto& name : g.names()) {
    const auto& t = g.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double want = w.a * ge.at(name)[i] + w.b * gf.at(name)[i] + w.c * gr.at(name)[i];
      ASSERT_NEAR(t[i], want, 1e-9) << name << "[" << i << "]";
    }
  }
}

TEST(Trainer, StepOnlyMovesNonzeroGradientEntries) {
  auto s = make_setup(1);
  s.cfg.weights = {1, 0, 0};
  const auto r = train(s.data, s.cfg);
  const CycleModel model(r.checkpoint.model, s.data.vocab_size, s.data.features.cols());
  const auto init = model.init_parameters(s.cfg.seed, &s.data.features);
  // Mention-tower rows of tokens that never occur in a mention stay put.
  std::vector<bool> seen(s.data.vocab_size, false);
  for (const auto& seq : s.data.mention_seqs) {
    for (auto id : seq.tokens) seen[id] = true;
  }
  const auto name = BagEncoder::embedding_name(Tower::mention);
  const auto& before = init.at(name);
  const auto& after = r.checkpoint.params.at(name);
  std::size_t unseen = 0;
  for (std::size_t tok = 0; tok < s.data.vocab_size; ++tok) {
    if (seen[tok]) continue;
    ++unseen;
    for (std::size_t c = 0; c < before.cols(); ++c) EXPECT_EQ(after(tok, c), before(tok, c));
  }
  EXPECT_GT(unseen, 0u);
}

TEST(Trainer, EmptySplitIsAnError) {
  auto s = make_setup(1);
  s.data.mention_seqs.clear();
  s.data.gold.clear();
  EXPECT_THROW(train(s.data, s.cfg), DataError);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(Trainer, LogLineFields) {
  EpochReport r{3, combine(1.5, 0.5, 0.25, {1, 1, 1}), 4, 10};
  const auto j = nlohmann::json::parse(log_line(r, "ff"));
  EXPECT_EQ(j["epoch"], 3);
  EXPECT_DOUBLE_EQ(j["L"].get<double>(), 2.25);
  EXPECT_EQ(j["config_hash"], "ff");
  for (const char* k : {"L_e", "L_f", "L_r"}) EXPECT_TRUE(j.contains(k));
}
