#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cycle/error.hpp"
#include "cycle/text_encoder.hpp"

using namespace cycle;
namespace m = cycle::markers;

namespace {

std::vector<std::string> words(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Vocabulary vocab_of(std::initializer_list<std::vector<std::string>> lists) {
  return Vocabulary::build(std::vector<std::vector<std::string>>(lists));
}

Tensor square(std::size_t n, std::vector<double> v) { return Tensor({n, n}, std::move(v)); }

}  // namespace

TEST(MentionSeq, ShortLayout) {
  MentionRecord rec{{"left"}, {"bob"}, {"right", "side"}, "Q1", MentionCategory::continual, 2019};
  const auto v = vocab_of({{"left", "bob", "right", "side"}});
  const auto s = build_mention_seq(rec, v);
  const std::vector<TokenId> want{m::kCls,      v.id("left"),  m::kMentionStart, v.id("bob"),
                                  m::kMentionEnd, v.id("right"), v.id("side"),    m::kSep};
  EXPECT_EQ(s.tokens, want);
}

TEST(MentionSeq, EmptyContexts) {
  MentionRecord rec{{}, {"bob", "smith"}, {}, "Q1", MentionCategory::continual, 2019};
  const auto v = vocab_of({{"bob", "smith"}});
  const std::vector<TokenId> want{m::kCls, m::kMentionStart, v.id("bob"), v.id("smith"),
                                  m::kMentionEnd, m::kSep};
  EXPECT_EQ(build_mention_seq(rec, v).tokens, want);
}

TEST(MentionSeq, LongContextsAreCutEvenlyFromOutside) {
  const auto left = words("l", 200), right = words("r", 200), mention = words("m", 10);
  MentionRecord rec{left, mention, right, "Q1", MentionCategory::continual, 2019};
  const auto v = vocab_of({left, right, mention});
  const auto s = build_mention_seq(rec, v);
  ASSERT_EQ(s.size(), 128u);
  const auto ms = std::find(s.tokens.begin(), s.tokens.end(), m::kMentionStart) - s.tokens.begin();
  const auto me = std::find(s.tokens.begin(), s.tokens.end(), m::kMentionEnd) - s.tokens.begin();
  const std::size_t kept_left = ms - 1, kept_right = s.size() - 2 - me;
  EXPECT_EQ(me - ms - 1, 10);
  EXPECT_LE(std::max(kept_left, kept_right) - std::min(kept_left, kept_right), 1u);
  // The tokens nearest the mention survive.
  EXPECT_EQ(s.tokens[ms - 1], v.id("l199"));
  EXPECT_EQ(s.tokens[me + 1], v.id("r0"));
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(s.tokens[ms + 1 + k], v.id("m" + std::to_string(k)));
}

TEST(MentionSeq, OversizedMentionIsAnError) {
  MentionRecord rec{{}, words("m", 125), {}, "Q1", MentionCategory::continual, 2019};
  EXPECT_THROW(build_mention_seq(rec, Vocabulary()), DataError);
}

TEST(EntitySeq, LayoutAndTruncation) {
  const auto v = vocab_of({{"acme", "corp"}});
  EntityRecord e{"Q1", "Acme corp", "", 0};
  const std::vector<TokenId> want{m::kCls, v.id("acme"), v.id("corp"), m::kEnt, m::kSep};
  EXPECT_EQ(build_entity_seq(e, v).tokens, want);

  std::string desc;
  for (int i = 0; i < 300; ++i) desc += "w" + std::to_string(i) + " ";
  EntityRecord big{"Q2", "Acme", desc, 1};
  const auto s = build_entity_seq(big, v);
  EXPECT_EQ(s.size(), 128u);
  EXPECT_EQ(s.tokens.back(), m::kSep);
  EXPECT_EQ(s, build_entity_seq(big, v));

  std::string title;
  for (int i = 0; i < 126; ++i) title += "t ";
  EXPECT_THROW(build_entity_seq({"Q3", title, "", 2}, v), DataError);
}

TEST(Encoder, ZeroParametersGiveZeroVector) {
  BagEncoder enc(20, 5);
  Rng rng(1);
  ad::ParameterStore p;
  enc.init_parameters(p, rng);
  p = p.zeros_like();
  const auto y = encode(enc, {{m::kCls, 7, 8, m::kSep}}, Tower::mention, p);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, BagInvarianceAndDeterminism) {
  BagEncoder enc(20, 5);
  Rng rng(2);
  ad::ParameterStore p;
  enc.init_parameters(p, rng);
  const TokenSequence a{{m::kCls, 7, 8, 9, m::kSep}}, b{{m::kCls, 9, 8, 7, m::kSep}};
  const auto ya = encode(enc, a, Tower::entity, p);
  EXPECT_EQ(ya, encode(enc, b, Tower::entity, p));
  EXPECT_EQ(ya, encode(enc, a, Tower::entity, p));
  // Separate towers.
  EXPECT_NE(ya, encode(enc, a, Tower::mention, p));
}

TEST(Encoder, OutOfRangeIdsCountAsUnknown) {
  BagEncoder enc(10, 3);
  Rng rng(3);
  ad::ParameterStore p;
  enc.init_parameters(p, rng);
  EncodeStats stats;
  const auto y = encode(enc, {{m::kCls, 42, m::kSep}}, Tower::mention, p, &stats);
  EXPECT_EQ(stats.unknown_tokens.load(), 1u);
  EXPECT_EQ(y, encode(enc, {{m::kCls, m::kUnk, m::kSep}}, Tower::mention, p));
}

TEST(Encoder, DotScoreGradientChecks) {
  BagEncoder enc(12, 4);
  Rng rng(4);
  ad::ParameterStore p;
  enc.init_parameters(p, rng);
  const TokenSequence ms{{m::kCls, 6, 7, m::kSep}}, es{{m::kCls, 8, m::kEnt, 9, 10, m::kSep}};
  const ad::LossFn fn = [&](ad::Tape& t) {
    return t.dot(enc.encode(t, ms, Tower::mention), enc.encode(t, es, Tower::entity));
  };
  for (int probe = 0; probe < 5; ++probe) {
    for (const auto& name : p.names()) {
      for (auto& v : p.at(name).values()) v = uniform_real(rng, -1, 1);
    }
    EXPECT_TRUE(ad::grad_check({"text_score", fn, {}}, p, 1e-4).pass);
  }
}

TEST(Score, Examples) {
  EXPECT_EQ(score(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_EQ(score(std::vector<double>{1, 1}, std::vector<double>{1, 1}), 2.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> a(9), b(9);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  double want = 0;
  for (std::size_t i = 0; i < 9; ++i) want += a[i] * b[i];
  EXPECT_NEAR(score(a, b), want, 1e-14);
  EXPECT_THROW(score(std::vector<double>{1}, std::vector<double>{1, 2}), UsageError);
}

TEST(LossEl, HandValue) {
  const double want = -2.0 + std::log(std::exp(2.0) + 1.0);
  EXPECT_NEAR(loss_el(square(2, {2, 0, 0, 2})), want, 1e-15);
  EXPECT_NEAR(loss_el(square(2, {2, 0, 0, 2})), 0.126928, 1e-6);
}

TEST(LossEl, UniformRowsGiveLogN) {
  EXPECT_DOUBLE_EQ(loss_el(square(4, std::vector<double>(16, 0.7))), std::log(4.0));
  EXPECT_EQ(loss_el(square(1, {3.5})), 0.0);
}

TEST(LossEl, RowShiftInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  Tensor s({5, 5});
  for (auto& v : s.values()) v = u(rng);
  Tensor shifted = s;
  for (std::size_t r = 0; r < 5; ++r) {
    const double k = u(rng) * 10;
    for (std::size_t c = 0; c < 5; ++c) shifted(r, c) += k;
  }
  EXPECT_NEAR(loss_el(s), loss_el(shifted), 1e-12);
  EXPECT_GT(loss_el(s), 0.0);
}

TEST(LossEl, Errors) {
  EXPECT_THROW(loss_el(Tensor({2, 3})), UsageError);
  EXPECT_THROW(loss_el(square(2, {1, NAN, 0, 1})), NumericError);
}

TEST(LossEl, TapeMatchesPlain) {
  ad::ParameterStore p;
  p.add("m0", Tensor::vector({0.3, -0.2}));
  p.add("m1", Tensor::vector({-0.5, 0.9}));
  p.add("e0", Tensor::vector({1.1, 0.4}));
  p.add("e1", Tensor::vector({0.2, -0.7}));
  const ad::LossFn fn = [](ad::Tape& t) {
    const std::vector<ad::Var> ms{t.param("m0"), t.param("m1")}, es{t.param("e0"), t.param("e1")};
    return loss_el(t, ms, es);
  };
  Tensor s({2, 2});
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      s(i, j) = score(p.at("m" + std::to_string(i)).values(), p.at("e" + std::to_string(j)).values());
    }
  }
  EXPECT_NEAR(ad::evaluate(fn, p), loss_el(s), 1e-15);
  EXPECT_TRUE(ad::grad_check({"loss_el", fn, {}}, p, 1e-4).pass);
}
