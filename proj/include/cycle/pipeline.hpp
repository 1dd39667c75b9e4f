#pragma once
// Glue between on-disk datasets and the modules: corpus loading, derived
// assets (vocabulary, feature matrix, feature graph, pools), encoded training
// and test splits, and the gap-matrix driver.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycle/dataset.hpp"
#include "cycle/eval.hpp"
#include "cycle/run_config.hpp"
#include "cycle/store.hpp"
#include "cycle/synth.hpp"
#include "cycle/text_encoder.hpp"
#include "cycle/trainer.hpp"

namespace cycle {

struct Corpus {
  TemporalKG kg;
  std::vector<MentionRecord> train;
  std::vector<MentionRecord> test;
  std::string dataset_hash;
};

// Reads entities.jsonl, mentions.train.jsonl, mentions.test.jsonl and every
// edges_<year>.tsv. The dataset hash comes from manifest.json when present,
// otherwise from the file bytes.
Corpus load_corpus(const std::filesystem::path& dir);
Corpus corpus_from_synth(SynthDataset data, std::string dataset_hash);

struct BuildOptions {
  TokenFilterConfig filter;
  FeatureGraphConfig knn;
  std::size_t negative_cap = 32;
  std::size_t max_seq_len = kMaxSequenceLength;
  std::uint64_t seed = 0;
};
BuildOptions build_options(const RunConfig& cfg);

struct Assets {
  Vocabulary vocab;
  FeatureMatrix features;
  Tensor dense_features;
  SnapshotGraph feature_graph;
  SamplePools feature_pools;
  std::vector<TokenSequence> entity_seqs;
};

// Vocabulary over entity texts and training mentions; features and the
// feature graph over descriptions.
Assets build_assets(const Corpus& corpus, const BuildOptions& opts);

// Writes vocab.txt, features.txt, feature_graph.tsv, pools/ and
// build_manifest.json under `dir`.
void save_build(const std::filesystem::path& dir, const Corpus& corpus, const Assets& assets,
                const std::string& config_hash);
// Reloads a build directory; DataError if it was built from another dataset.
Assets load_build(const std::filesystem::path& dir, const Corpus& corpus,
                  std::size_t max_seq_len);
SamplePools load_relation_pools(const std::filesystem::path& dir, int t1, int t2);
std::filesystem::path relation_pools_path(const std::filesystem::path& dir, int t1, int t2);

// train_year + 1 if present, else train_year - 1; the year itself when the
// dataset has a single snapshot.
int default_target_year(const TemporalKG& kg, int train_year);

TrainData make_train_data(const Corpus& corpus, const Assets& assets, int train_year,
                          int target_year, const SamplePools& relation_pools,
                          std::size_t max_seq_len);
TestSplit make_test_split(const Corpus& corpus, const Vocabulary& vocab, int year,
                          std::size_t max_seq_len);

// Train-year degree of each query's gold entity.
std::vector<std::size_t> gold_degrees(const TestSplit& split, const SnapshotGraph& graph);

// Evaluates every checkpoint (keyed by train year) on every test year.
GapMatrix run_gap_matrix(const std::map<int, Checkpoint>& checkpoints, const Corpus& corpus,
                         const Assets& assets, const EvalConfig& cfg,
                         std::size_t neighbor_threshold, std::size_t max_seq_len,
                         std::size_t workers = 1);

}  // namespace cycle
