#pragma once
// The joint model: two text towers, the graph encoder, and the objective
// L = a L_e + b L_f + c L_r assembled on a tape.
//
// With fusion active the entity vector is the entity tower output plus the
// projected relation-graph embedding of that entity in the snapshot the
// model is applied to, so a later snapshot can update a model trained on an
// earlier one.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cycle/autodiff.hpp"
#include "cycle/contrastive.hpp"
#include "cycle/dataset.hpp"
#include "cycle/graph_encoder.hpp"
#include "cycle/text_encoder.hpp"

namespace cycle {

enum class FusionMode { automatic, on, off };

std::string to_string(FusionMode m);
FusionMode parse_fusion_mode(const std::string& s);

// automatic: on iff a graph loss has non-zero weight.
bool fusion_active(FusionMode mode, const LossWeights& weights);

struct ModelConfig {
  std::size_t dim = 64;     // text vector width, also the projection output
  std::size_t hidden = 64;  // projection hidden width
  FusionMode fusion = FusionMode::automatic;
  bool trainable_features = false;

  bool operator==(const ModelConfig&) const = default;
};

// Non-owning views of the graph-side inputs for one training or evaluation
// pass.
struct GraphInputs {
  const Tensor* features = nullptr;               // n x m
  const SnapshotGraph* fusion_graph = nullptr;    // relation graph behind entity vectors
  const SnapshotGraph* contrast_graph = nullptr;  // relation view for the contrastive terms
  const SnapshotGraph* feature_graph = nullptr;
  const SamplePools* relation_pools = nullptr;
  const SamplePools* feature_pools = nullptr;
};

class CycleModel {
 public:
  CycleModel(ModelConfig cfg, std::size_t vocab_size, std::size_t feature_dim);

  const ModelConfig& config() const { return cfg_; }
  const BagEncoder& text() const { return text_; }
  const GraphEncoder& graph() const { return graph_; }
  std::size_t vocab_size() const { return text_.vocab_size(); }
  std::size_t feature_dim() const { return graph_.feature_dim; }

  // `features` seeds the trainable node-feature slot when enabled.
  ad::ParameterStore init_parameters(std::uint64_t seed, const Tensor* features = nullptr) const;

 private:
  ModelConfig cfg_;
  BagEncoder text_;
  GraphEncoder graph_;
};

// Memoises per-node graph embeddings on one tape.
class GraphPass {
 public:
  GraphPass(ad::Tape& tape, const CycleModel& model, const GraphInputs& inputs,
            const SamplerConfig& sampler, std::uint64_t epoch);

  // Projected relation embedding on the fusion graph.
  ad::Var fused(NodeId node);
  bool fusion_isolated(NodeId node) const;
  // Projected relation embedding on the contrast graph (z^rp).
  ad::Var relation_view(NodeId node);
  // Projected feature-graph embedding (z^fp).
  ad::Var feature_view(NodeId node);

 private:
  ad::Var projected(const SnapshotGraph* graph, NodeId node, const char* what);

  ad::Tape& tape_;
  const CycleModel& model_;
  const GraphInputs& inputs_;
  SamplerConfig sampler_;
  std::uint64_t epoch_;
  ad::Var features_;
  std::map<std::pair<const SnapshotGraph*, NodeId>, ad::Var> cache_;
};

struct ObjectiveBatch {
  std::span<const TokenSequence> mentions;
  std::span<const NodeId> gold;  // gold entity per mention
};

struct ObjectiveOptions {
  SamplerConfig sampler;
  ContrastiveConfig contrastive;
  std::uint64_t epoch = 0;
  bool fusion = false;
};

struct ObjectiveTerms {
  std::optional<ad::Var> L_e;
  std::optional<ad::Var> L_f;  // absent when no node has a positive
  std::optional<ad::Var> L_r;
  std::size_t f_nodes = 0;  // nodes contributing to L_f
  std::size_t r_nodes = 0;
};

// Entity vector for `node`, plus its fused relation view when `graph` is set
// and the node has neighbours there.
ad::Var entity_vector(ad::Tape& tape, const CycleModel& model, const TokenSequence& seq,
                      NodeId node, GraphPass* graph);

// Builds whichever terms are requested: L_e when `batch` is given, L_f and L_r
// over `graph_nodes` when `graph_terms` is set.
ObjectiveTerms build_objective(ad::Tape& tape, const CycleModel& model,
                               std::span<const TokenSequence> entity_seqs,
                               const GraphInputs& inputs, const ObjectiveBatch* batch,
                               std::span<const NodeId> graph_nodes, bool graph_terms,
                               const ObjectiveOptions& opts);

// a L_e + b L_f + c L_r over the present terms.
ad::Var weighted_objective(ad::Tape& tape, const ObjectiveTerms& terms, const LossWeights& w);

// Plain evaluation of all entity vectors (rows) and of mention vectors.
Tensor entity_matrix(const CycleModel& model, const ad::ParameterStore& params,
                     std::span<const TokenSequence> entity_seqs, const GraphInputs& inputs,
                     const SamplerConfig& sampler, std::uint64_t epoch, bool fusion);
Tensor mention_matrix(const CycleModel& model, const ad::ParameterStore& params,
                      std::span<const TokenSequence> mention_seqs);

}  // namespace cycle
