#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cycle/autodiff.hpp"
#include "cycle/error.hpp"
#include "cycle/grad_suite.hpp"

using namespace cycle;
using namespace cycle::ad;

namespace {

ParameterStore random_store(std::initializer_list<std::pair<const char*, Tensor::Shape>> slots,
                            std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore p;
  for (const auto& [name, shape] : slots) {
    Tensor t(shape);
    for (auto& v : t.values()) v = uniform_real(rng, -1.0, 1.0);
    p.add(name, t);
  }
  return p;
}

GradCheckOp with_kinks(std::string name, LossFn fn) {
  GradCheckOp op{std::move(name), fn, {}};
  op.kink_distance = [fn](const ParameterStore& p) { return kink_distance(fn, p); };
  return op;
}

}  // namespace

TEST(ForwardBackward, SumOfMatvecMatchesFiniteDifferencesCellwise) {
  auto p = random_store({{"w", {3, 4}}}, 1);
  const Tensor x = Tensor::vector({0.5, -1.0, 2.0, 0.25});
  const LossFn fn = [&](Tape& t) { return t.sum(t.matvec(t.param("w"), t.constant(x))); };
  const auto fb = forward_backward(fn, p);
  const double h = kFiniteDifferenceStep;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      auto plus = p, minus = p;
      plus.at("w")(r, c) += h;
      minus.at("w")(r, c) -= h;
      const double numeric = (evaluate(fn, plus) - evaluate(fn, minus)) / (2 * h);
      EXPECT_NEAR(fb.grads.at("w")(r, c), numeric, 1e-9);
      // Outer-product structure: d/dW_rc = x_c.
      EXPECT_DOUBLE_EQ(fb.grads.at("w")(r, c), x[c]);
    }
  }
}

TEST(ForwardBackward, UnusedParameterGetsZeroAndConstantsNone) {
  auto p = random_store({{"used", {3}}, {"unused", {2}}}, 2);
  const Tensor k = Tensor::vector({1, 2, 3});
  const LossFn fn = [&](Tape& t) { return t.dot(t.param("used"), t.constant(k)); };
  const auto a = forward_backward(fn, p);
  const auto b = forward_backward(fn, p);
  for (double g : a.grads.at("unused").values()) EXPECT_EQ(g, 0.0);
  EXPECT_TRUE(a.grads == b.grads);
  EXPECT_EQ(a.loss, b.loss);

  Tape tape(&p);
  auto c = tape.constant(k);
  auto loss = tape.dot(tape.param("used"), c);
  tape.backward(loss);
  // Constants are not parameters, so they never surface in parameter grads.
  EXPECT_EQ(tape.parameter_grads().size(), 2u);
}

TEST(ForwardBackward, NonFiniteNamesTheOp) {
  ParameterStore p;
  p.add("x", Tensor::vector({1e200}));
  const LossFn fn = [](Tape& t) { return t.sum(t.mul(t.param("x"), t.param("x"))); };
  try {
    forward_backward(fn, p);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos) << e.what();
  }
}

TEST(GradCheck, QuadraticIsTight) {
  const auto p = random_store({{"x", {6}}}, 3);
  const LossFn fn = [](Tape& t) {
    auto x = t.param("x");
    return t.scale(t.dot(x, x), 0.5);
  };
  const auto r = grad_check({"quadratic", fn, {}}, p, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_error, 1e-6);
  // Closed form: grad = x.
  EXPECT_EQ(forward_backward(fn, p).grads.at("x"), p.at("x"));
}

TEST(GradCheck, LeakyReluAwayFromKink) {
  ParameterStore p;
  p.add("x", Tensor::vector({-0.7, 0.3, 1.5, -0.01}));
  const LossFn fn = [](Tape& t) { return t.sum(t.leaky_relu(t.param("x"), 0.2)); };
  const auto r = grad_check(with_kinks("leaky_relu", fn), p, 1e-4);
  EXPECT_FALSE(r.excluded);
  EXPECT_TRUE(r.pass);
  const auto g = forward_backward(fn, p).grads.at("x");
  EXPECT_EQ(g, Tensor::vector({0.2, 1.0, 1.0, 0.2}));
}

TEST(GradCheck, ProbeAtKinkIsExcluded) {
  ParameterStore p;
  p.add("x", Tensor::vector({0.0, 1.0}));
  const LossFn fn = [](Tape& t) { return t.sum(t.leaky_relu(t.param("x"), 0.2)); };
  const auto r = grad_check(with_kinks("leaky_relu", fn), p, 1e-4);
  EXPECT_TRUE(r.excluded);
  EXPECT_TRUE(r.pass);
}

TEST(GradCheck, PassFlagFollowsTolerance) {
  const auto p = random_store({{"x", {4}}}, 4);
  const LossFn fn = [](Tape& t) { return t.sum(t.tanh(t.param("x"))); };
  const auto loose = grad_check({"tanh", fn, {}}, p, 1e-4);
  EXPECT_TRUE(loose.pass);
  EXPECT_GT(loose.max_rel_error, 0.0);
  const auto strict = grad_check({"tanh", fn, {}}, p, loose.max_rel_error);
  EXPECT_FALSE(strict.pass);
}

TEST(Optimizers, SgdDefinition) {
  ParameterStore p, g;
  p.add("x", Tensor::scalar(0.0));
  g.add("x", Tensor::scalar(1.0));
  sgd_step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(p.at("x")[0], -0.1);
  auto before = p;
  sgd_step(p, g.zeros_like(), 0.1);
  EXPECT_TRUE(p == before);
}

TEST(Optimizers, AdamSkipsZeroGradientEntries) {
  auto p = random_store({{"w", {5}}}, 5);
  ParameterStore g = p.zeros_like();
  g.at("w")[2] = 0.5;
  AdamState state{0, p.zeros_like(), p.zeros_like()};
  const auto before = p;
  adam_step(p, g, 0.01, state);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i == 2) {
      EXPECT_NE(p.at("w")[i], before.at("w")[i]);
    } else {
      EXPECT_EQ(p.at("w")[i], before.at("w")[i]);
      EXPECT_EQ(state.m.at("w")[i], 0.0);
    }
  }
  // First bias-corrected step moves by lr in the gradient's sign direction.
  EXPECT_NEAR(p.at("w")[2], before.at("w")[2] - 0.01, 1e-9);
}

TEST(Optimizers, TwoStepsAreReproducible) {
  auto run = [] {
    auto p = random_store({{"w", {3, 3}}}, 6);
    AdamState s{0, p.zeros_like(), p.zeros_like()};
    const LossFn fn = [](Tape& t) {
      auto w = t.param("w");
      return t.sum(t.tanh(t.matvec(w, t.constant(Tensor::vector({1, -2, 0.5})))));
    };
    for (int i = 0; i < 2; ++i) adam_step(p, forward_backward(fn, p).grads, 0.05, s);
    return std::pair{p, s};
  };
  const auto a = run(), b = run();
  EXPECT_TRUE(a.first == b.first);
  EXPECT_TRUE(a.second == b.second);
}

TEST(Optimizers, ShapeMismatchIsAnError) {
  ParameterStore p, g;
  p.add("x", Tensor::vector({1, 2}));
  g.add("x", Tensor::vector({1, 2, 3}));
  EXPECT_THROW(sgd_step(p, g, 0.1), UsageError);
}

TEST(Container, RoundTripAndVersion) {
  auto p = random_store({{"a", {2, 3}}, {"b", {4}}}, 7);
  std::stringstream buf;
  p.write(buf);
  std::string bytes = buf.str();
  std::istringstream in(bytes);
  EXPECT_TRUE(ParameterStore::read(in) == p);
  bytes[0] = static_cast<char>(kContainerVersion + 1);
  std::istringstream bad(bytes);
  EXPECT_THROW(ParameterStore::read(bad), DataError);
  std::istringstream truncated(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(ParameterStore::read(truncated), DataError);
}

TEST(Init, GlorotBounds) {
  Rng rng(1);
  const auto t = glorot_uniform({30, 20}, 20, 30, rng);
  const double s = std::sqrt(6.0 / 50.0);
  for (double v : t.values()) EXPECT_LE(std::abs(v), s);
}

TEST(Linearity, GradientOfSumIsSumOfGradients) {
  const auto p = random_store({{"x", {4}}, {"y", {4}}}, 8);
  const LossFn f1 = [](Tape& t) { return t.log_sum_exp(t.mul(t.param("x"), t.param("y"))); };
  const LossFn f2 = [](Tape& t) { return t.cosine(t.param("x"), t.tanh(t.param("y"))); };
  const LossFn both = [&](Tape& t) { return t.add(f1(t), f2(t)); };
  const auto g1 = forward_backward(f1, p).grads, g2 = forward_backward(f2, p).grads;
  const auto g = forward_backward(both, p).grads;
  for (const auto& name : p.names()) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(g.at(name)[i], g1.at(name)[i] + g2.at(name)[i], 1e-12);
    }
  }
}

TEST(GradSuite, SmallRunPasses) {
  GradSuiteOptions opts;
  opts.probes = 3;
  opts.seed = 5;
  const auto r = run_grad_suite(opts);
  EXPECT_TRUE(r.pass());
  EXPECT_GE(r.entries.size(), 25u);
  for (const auto& e : r.entries) EXPECT_EQ(e.probes, 3u) << e.name;
}
