#pragma once
// Joint optimisation: per-batch entity-linking steps, one contrastive step per
// epoch over a node sample, Adam, checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cycle/autodiff.hpp"
#include "cycle/contrastive.hpp"
#include "cycle/dataset.hpp"
#include "cycle/graph_encoder.hpp"
#include "cycle/model.hpp"

namespace cycle {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 1e-5;
  LossWeights weights;
  ContrastiveConfig contrastive;
  std::size_t neighbor_threshold = 8;
  std::uint64_t seed = 0;
  int train_year = 0;
  int target_year = 0;
  std::size_t node_cap = 512;  // graph nodes per epoch
  ModelConfig model;
  ad::AdamConfig adam;

  void validate() const;
  SamplerConfig sampler() const { return {neighbor_threshold, seed}; }
  bool fusion() const { return fusion_active(model.fusion, weights); }
};

// Everything the trainer consumes, already encoded.
struct TrainData {
  std::size_t vocab_size = 0;
  std::vector<TokenSequence> entity_seqs;  // one per entity
  std::vector<TokenSequence> mention_seqs;
  std::vector<NodeId> gold;
  Tensor features;              // n x m
  SnapshotGraph train_graph;    // relation graph of the training year
  SnapshotGraph target_graph;   // relation graph of the target year
  SnapshotGraph feature_graph;
  SamplePools relation_pools;   // train_year -> target_year
  SamplePools feature_pools;

  // Views with the training-year graph behind entity vectors.
  GraphInputs inputs() const;
  void validate() const;
};

struct Checkpoint {
  ModelConfig model;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;
  ad::ParameterStore params;
  ad::AdamState adam;
  std::uint64_t epochs_done = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string rng_state;  // textual mt19937_64 state of the run stream

  CycleModel make_model() const { return CycleModel(model, vocab_size, feature_dim); }
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on a wrong version byte, bad magic or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

struct EpochReport {
  std::uint64_t epoch = 0;
  LossReport loss;
  std::size_t batches = 0;
  std::size_t graph_nodes = 0;
  bool operator==(const EpochReport&) const = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochReport> epochs;
  std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const EpochReport&)>;

// Trains until cfg.epochs epochs are complete in total. With `resume` the run
// continues from its parameters, optimiser and RNG state; a differing config
// hash is reported as a warning. NaN aborts with NumericError naming the
// epoch and batch.
TrainResult train(const TrainData& data, const TrainConfig& cfg,
                  const std::string& config_hash = {}, const Checkpoint* resume = nullptr,
                  const EpochCallback& on_epoch = {});

// Deterministic objective at fixed sampling (epoch 0, mentions in file order,
// every graph node up to the cap), for before/after comparisons.
LossReport objective_report(const TrainData& data, const TrainConfig& cfg,
                            const ad::ParameterStore& params);

// {"epoch":..,"L":..,"L_e":..,"L_f":..,"L_r":..}
std::string log_line(const EpochReport& r, const std::string& config_hash = {});

}  // namespace cycle
