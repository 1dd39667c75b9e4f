#pragma once
// Single-layer attention aggregation over a snapshot graph plus the
// projection head shared by the relation and feature views.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cycle/autodiff.hpp"
#include "cycle/store.hpp"

namespace cycle {

struct SamplerConfig {
  std::size_t threshold = 8;  // max neighbours aggregated per node per epoch
  std::uint64_t seed = 0;

  void validate() const;
};

// All neighbours when degree <= threshold, otherwise a uniform sample of
// `threshold` of them seeded by (seed, epoch, node). Sorted ascending.
std::vector<NodeId> sample_neighbors(const SnapshotGraph& graph, NodeId node,
                                     const SamplerConfig& cfg, std::uint64_t epoch);

inline constexpr double kAttentionSlope = 0.2;

struct AggregateResult {
  std::vector<double> z;
  std::vector<double> alpha;  // aligned with the neighbour list
  bool isolated = false;
};

// alpha_j = softmax_j LeakyReLU(a . [x_i || x_j]); z = ELU(sum_j alpha_j x_j).
// An empty neighbour set gives z = ELU(0) = 0 and isolated = true.
AggregateResult attend_aggregate(NodeId node, std::span<const NodeId> neighbors,
                                 const Tensor& features, std::span<const double> attention,
                                 double slope = kAttentionSlope);
ad::Var attend_aggregate(ad::Tape& tape, NodeId node, std::span<const NodeId> neighbors,
                         ad::Var features, ad::Var attention, double slope = kAttentionSlope);

// W2 ELU(W1 z + b1) + b2
std::vector<double> project(std::span<const double> z, const Tensor& w1, const Tensor& b1,
                            const Tensor& w2, const Tensor& b2);
ad::Var project(ad::Tape& tape, ad::Var z, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2);

// Parameter naming and initialisation for the graph side.
struct GraphEncoder {
  static constexpr const char* kAttention = "graph.attention";
  static constexpr const char* kW1 = "projection.w1";
  static constexpr const char* kB1 = "projection.b1";
  static constexpr const char* kW2 = "projection.w2";
  static constexpr const char* kB2 = "projection.b2";
  // Present only when node features are trainable.
  static constexpr const char* kFeatures = "graph.node_features";

  std::size_t feature_dim = 0;  // m
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 64;
  double slope = kAttentionSlope;

  void init_parameters(ad::ParameterStore& params, Rng& rng) const;
  static bool owns(const std::string& param_name);

  // z for one node given its (already sampled) neighbours.
  ad::Var embed(ad::Tape& tape, NodeId node, std::span<const NodeId> neighbors,
                ad::Var features) const;
  // Projection with the shared parameters.
  ad::Var project(ad::Tape& tape, ad::Var z) const;
};

}  // namespace cycle
