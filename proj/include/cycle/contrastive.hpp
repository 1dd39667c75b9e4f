#pragma once
// Cross-view InfoNCE losses and the weighted joint objective.

#include <optional>
#include <span>
#include <vector>

#include "cycle/autodiff.hpp"
#include "cycle/dataset.hpp"

namespace cycle {

struct ContrastiveConfig {
  double temperature = 0.5;
  std::size_t max_positives = 8;  // per node per epoch

  void validate() const;
};

struct InfoNceResult {
  double loss = 0.0;
  bool zero_norm = false;  // some similarity involved a zero vector
};

// -log( sum_{P} exp(sim/tau) / sum_{P u N} exp(sim/tau) ), cosine sim.
// Empty positive set -> nullopt (node skipped).
std::optional<InfoNceResult> info_nce(std::span<const double> anchor,
                                      std::span<const std::span<const double>> positives,
                                      std::span<const std::span<const double>> negatives,
                                      double tau);
std::optional<ad::Var> info_nce(ad::Tape& tape, ad::Var anchor, std::span<const ad::Var> positives,
                                std::span<const ad::Var> negatives, double tau);

// Anchor from the feature view, samples from the relation view, relation
// pools. `relation_side` holds one projected embedding per node (row).
std::optional<InfoNceResult> loss_f(NodeId node, std::span<const double> z_fp,
                                    const Tensor& relation_side, const SamplePools& pools,
                                    double tau);
// Mirror: anchor from the relation view, samples from the feature view.
std::optional<InfoNceResult> loss_r(NodeId node, std::span<const double> z_rp,
                                    const Tensor& feature_side, const SamplePools& pools,
                                    double tau);

struct LossWeights {
  double a = 1.0;  // entity linking
  double b = 1.0;  // feature-anchored contrastive
  double c = 1.0;  // relation-anchored contrastive

  void validate() const;
  bool graph_terms() const { return b != 0.0 || c != 0.0; }
  bool operator==(const LossWeights&) const = default;
};

struct LossReport {
  double L_e = 0.0;
  double L_f = 0.0;
  double L_r = 0.0;
  double L = 0.0;
  LossWeights weights;

  bool operator==(const LossReport&) const = default;
};

// Throws UsageError("degenerate objective") when every weight is zero.
LossReport combine(double L_e, double L_f, double L_r, const LossWeights& w);

}  // namespace cycle
