#include "cycle/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "cycle/error.hpp"

namespace cycle {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  if (max_positives < 1) throw UsageError("max_positives must be >= 1");
}

namespace {
double lse(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

bool zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}
}  // namespace

std::optional<InfoNceResult> info_nce(std::span<const double> anchor,
                                      std::span<const std::span<const double>> positives,
                                      std::span<const std::span<const double>> negatives,
                                      double tau) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  if (positives.empty()) return std::nullopt;
  InfoNceResult r;
  r.zero_norm = zero(anchor);
  std::vector<double> pos, all;
  for (auto p : positives) {
    r.zero_norm = r.zero_norm || zero(p);
    pos.push_back(cosine(anchor, p) / tau);
  }
  all = pos;
  for (auto q : negatives) {
    r.zero_norm = r.zero_norm || zero(q);
    all.push_back(cosine(anchor, q) / tau);
  }
  r.loss = lse(all) - lse(pos);
  // With no negatives the ratio is exactly one.
  if (negatives.empty()) r.loss = 0.0;
  return r;
}

std::optional<ad::Var> info_nce(ad::Tape& tape, ad::Var anchor, std::span<const ad::Var> positives,
                                std::span<const ad::Var> negatives, double tau) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  if (positives.empty()) return std::nullopt;
  if (negatives.empty()) return tape.scalar(0.0);
  std::vector<ad::Var> pos, all;
  for (auto p : positives) pos.push_back(tape.cosine(anchor, p));
  all = pos;
  for (auto q : negatives) all.push_back(tape.cosine(anchor, q));
  const double inv = 1.0 / tau;
  return tape.sub(tape.log_sum_exp(tape.scale(tape.stack(all), inv)),
                  tape.log_sum_exp(tape.scale(tape.stack(pos), inv)));
}

namespace {
std::optional<InfoNceResult> pooled_loss(NodeId node, std::span<const double> anchor,
                                         const Tensor& other_side, const SamplePools& pools,
                                         double tau) {
  if (node >= pools.n()) throw UsageError("node outside sample pools");
  std::vector<std::span<const double>> pos, neg;
  for (auto j : pools.positives[node]) pos.push_back(other_side.row(j));
  for (auto j : pools.negatives[node]) neg.push_back(other_side.row(j));
  return info_nce(anchor, pos, neg, tau);
}
}  // namespace

std::optional<InfoNceResult> loss_f(NodeId node, std::span<const double> z_fp,
                                    const Tensor& relation_side, const SamplePools& pools,
                                    double tau) {
  if (pools.kind != GraphKind::relation) throw UsageError("loss_f expects relation pools");
  return pooled_loss(node, z_fp, relation_side, pools, tau);
}

std::optional<InfoNceResult> loss_r(NodeId node, std::span<const double> z_rp,
                                    const Tensor& feature_side, const SamplePools& pools,
                                    double tau) {
  if (pools.kind != GraphKind::feature) throw UsageError("loss_r expects feature pools");
  return pooled_loss(node, z_rp, feature_side, pools, tau);
}

void LossWeights::validate() const {
  for (double w : {a, b, c}) {
    if (!std::isfinite(w) || w < 0.0) throw UsageError("loss weights must be finite and >= 0");
  }
  if (a == 0.0 && b == 0.0 && c == 0.0) throw UsageError("degenerate objective");
}

LossReport combine(double L_e, double L_f, double L_r, const LossWeights& w) {
  w.validate();
  LossReport r;
  r.L_e = L_e;
  r.L_f = L_f;
  r.L_r = L_r;
  r.weights = w;
  r.L = w.a * L_e + w.b * L_f + w.c * L_r;
  return r;
}

}  // namespace cycle
