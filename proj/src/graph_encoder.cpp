#include "cycle/graph_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "cycle/error.hpp"
#include "cycle/random.hpp"

namespace cycle {

void SamplerConfig::validate() const {
  if (threshold < 1) throw UsageError("sampler threshold must be >= 1");
}

std::vector<NodeId> sample_neighbors(const SnapshotGraph& graph, NodeId node,
                                     const SamplerConfig& cfg, std::uint64_t epoch) {
  cfg.validate();
  const auto nb = graph.neighbors(node);
  std::vector<NodeId> all(nb.begin(), nb.end());
  if (all.size() <= cfg.threshold) return all;
  Rng rng(derive_seed(cfg.seed, {epoch, node}));
  return sample_without_replacement(std::move(all), cfg.threshold, rng);
}

namespace {
double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
}  // namespace

AggregateResult attend_aggregate(NodeId node, std::span<const NodeId> neighbors,
                                 const Tensor& features, std::span<const double> attention,
                                 double slope) {
  const std::size_t m = features.cols();
  if (attention.size() != 2 * m) throw UsageError("attention vector must have size 2m");
  AggregateResult out;
  out.z.assign(m, 0.0);
  if (neighbors.empty()) {
    out.isolated = true;
    return out;
  }
  const auto xi = features.row(node);
  const double self_term = dot(attention.subspan(0, m), xi);
  std::vector<double> logits;
  for (auto j : neighbors) {
    logits.push_back(leaky(self_term + dot(attention.subspan(m, m), features.row(j)), slope));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    total += l;
  }
  for (std::size_t k = 0; k < neighbors.size(); ++k) {
    const double a = logits[k] / total;
    out.alpha.push_back(a);
    const auto xj = features.row(neighbors[k]);
    for (std::size_t c = 0; c < m; ++c) out.z[c] += a * xj[c];
  }
  for (auto& v : out.z) v = elu(v);
  return out;
}

ad::Var attend_aggregate(ad::Tape& tape, NodeId node, std::span<const NodeId> neighbors,
                         ad::Var features, ad::Var attention, double slope) {
  const std::size_t m = tape.value(features).cols();
  if (tape.value(attention).size() != 2 * m) {
    throw UsageError("attention vector must have size 2m");
  }
  if (neighbors.empty()) return tape.constant(Tensor({m}));
  const auto xi = tape.row(features, node);
  std::vector<ad::Var> rows;
  std::vector<ad::Var> logits;
  for (auto j : neighbors) {
    const auto xj = tape.row(features, j);
    rows.push_back(xj);
    const ad::Var pair[2] = {xi, xj};
    logits.push_back(tape.leaky_relu(tape.dot(attention, tape.concat(pair)), slope));
  }
  const auto alpha = tape.softmax(tape.stack(logits));
  return tape.elu(tape.weighted_sum(alpha, rows));
}

std::vector<double> project(std::span<const double> z, const Tensor& w1, const Tensor& b1,
                            const Tensor& w2, const Tensor& b2) {
  if (w1.rank() != 2 || w1.cols() != z.size() || b1.size() != w1.rows() || w2.rank() != 2 ||
      w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw UsageError("project: parameter shapes do not agree with input of size " +
                     std::to_string(z.size()));
  }
  auto h = matvec(w1, z);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = elu(h[i] + b1[i]);
  auto out = matvec(w2, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b2[i];
  return out;
}

ad::Var project(ad::Tape& tape, ad::Var z, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
  const auto h = tape.elu(tape.add(tape.matvec(w1, z), b1));
  return tape.add(tape.matvec(w2, h), b2);
}

void GraphEncoder::init_parameters(ad::ParameterStore& params, Rng& rng) const {
  if (feature_dim == 0) throw UsageError("graph encoder needs a feature dimension");
  params.add(kAttention, ad::glorot_uniform({2 * feature_dim}, 2 * feature_dim, 1, rng));
  params.add(kW1, ad::glorot_uniform({hidden_dim, feature_dim}, feature_dim, hidden_dim, rng));
  params.add(kB1, Tensor({hidden_dim}));
  params.add(kW2, ad::glorot_uniform({output_dim, hidden_dim}, hidden_dim, output_dim, rng));
  params.add(kB2, Tensor({output_dim}));
}

bool GraphEncoder::owns(const std::string& name) {
  return name.starts_with("graph.") || name.starts_with("projection.");
}

ad::Var GraphEncoder::embed(ad::Tape& tape, NodeId node, std::span<const NodeId> neighbors,
                            ad::Var features) const {
  return attend_aggregate(tape, node, neighbors, features, tape.param(kAttention), slope);
}

ad::Var GraphEncoder::project(ad::Tape& tape, ad::Var z) const {
  return cycle::project(tape, z, tape.param(kW1), tape.param(kB1), tape.param(kW2),
                        tape.param(kB2));
}

}  // namespace cycle
