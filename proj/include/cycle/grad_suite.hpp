#pragma once
// Gradient checks over every differentiable op and the assembled objective,
// each at a fixed number of random probe points.

#include <cstdint>
#include <string>
#include <vector>

#include "cycle/autodiff.hpp"

namespace cycle {

struct GradSuiteEntry {
  std::string name;
  std::size_t probes = 0;    // probes actually compared
  std::size_t excluded = 0;  // draws rejected by the kink filter
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradSuiteResult {
  std::vector<GradSuiteEntry> entries;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool pass() const;
};

struct GradSuiteOptions {
  std::size_t probes = 25;
  double tolerance = 1e-4;
  double step = ad::kFiniteDifferenceStep;
  std::uint64_t seed = 0;
  // Draw budget per entry; an entry that cannot collect `probes` accepted
  // points fails.
  std::size_t max_draws = 200;
};

// Every op on the tape plus the text scorer, the graph encoder, the
// contrastive terms and the weighted joint objective.
GradSuiteResult run_grad_suite(const GradSuiteOptions& opts = {});

// Kink distance of `fn` at a point, evaluated on a fresh tape; infinity when
// the function has no kinked activation.
double kink_distance(const ad::LossFn& fn, const ad::ParameterStore& point);

}  // namespace cycle
