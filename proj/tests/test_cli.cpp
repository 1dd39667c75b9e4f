#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "test_util.hpp"

namespace {

using testutil::TempDir;

int run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " " + CYCLE_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmall =
    " --set synth.n=40 --set synth.years=2 --set synth.topics=4 --set synth.edges_per_entity=2 --set synth.vocab_size=24"
    " --set synth.new_fraction=0 --set dataset.min_count=1 --set dataset.max_count=100000"
    " --set dataset.knn_k=3 --set model.dim=8 --set model.hidden=6 --set train.lr=0.01"
    " --set train.batch_size=16";

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("--definitely-not-a-flag"), 1);
  EXPECT_EQ(run("synth --out /tmp/x --bogus"), 1);
  EXPECT_EQ(run("synth --out /tmp/x --set no.such.key=1"), 1);
  EXPECT_EQ(run("grad-check", "CYCLE_TRAIN_LR=abc"), 1);
  EXPECT_EQ(run("train --help"), 0);
}

TEST(Cli, MissingDataExitsTwo) {
  TempDir dir;
  EXPECT_EQ(run("build-dataset --data " + (dir / "absent").string()), 2);
}

TEST(Cli, GradCheckExitCodes) {
  EXPECT_EQ(run("grad-check --probes 2"), 0);
  EXPECT_EQ(run("grad-check --probes 2 --tolerance 1e-300"), 3);
}

TEST(Cli, PipelineAndReportMerge) {
  TempDir dir;
  const auto data = (dir / "data").string();
  ASSERT_EQ(run("synth --seed 7 --out " + data + kSmall), 0);
  ASSERT_EQ(run("build-dataset --data " + data + kSmall), 0);
  ASSERT_EQ(run("diff --data " + data + " --from 2019 --to 2020 --out " + (dir / "p.jsonl").string() + kSmall), 0);
  ASSERT_EQ(run("train --data " + data + " --train-year 2019 --out " + (dir / "full.ck").string() + kSmall), 0);
  ASSERT_EQ(run("train --data " + data + " --train-year 2019 --set train.b=0 --set train.c=0 --out " +
                (dir / "text.ck").string() + kSmall),
            0);
  const std::string ck = " --checkpoint 2019=" + (dir / "full.ck").string() + " --baseline 2019=" +
                         (dir / "text.ck").string();
  ASSERT_EQ(run("gap-matrix --data " + data + ck + " --out " + (dir / "gm.json").string() + " --tsv " +
                (dir / "gm.tsv").string() + kSmall),
            0);
  const auto doc = nlohmann::json::parse(testutil::read_file(dir / "gm.json"));
  EXPECT_EQ(doc["per_cell"].size(), 2u);
  EXPECT_TRUE(doc.contains("config_hash"));
  EXPECT_TRUE(doc.contains("dataset_hash"));
  EXPECT_NE(testutil::read_file(dir / "gm.tsv").find("# config_hash="), std::string::npos);

  ASSERT_EQ(run("evaluate --data " + data + ck + " --test-year 2020 --out " + (dir / "ev.json").string() + kSmall), 0);
  ASSERT_EQ(run("report --input " + (dir / "gm.json").string() + " --input " + (dir / "ev.json").string() +
                " --out " + (dir / "merged.json").string()),
            0);
  const auto merged = nlohmann::json::parse(testutil::read_file(dir / "merged.json"));
  EXPECT_EQ(merged["per_gap"], doc["per_gap"]);

  auto tampered = doc;
  tampered["dataset_hash"] = "0000000000000000";
  testutil::write_file(dir / "other.json", tampered.dump());
  EXPECT_EQ(run("report --input " + (dir / "gm.json").string() + " --input " + (dir / "other.json").string()), 2);
}
