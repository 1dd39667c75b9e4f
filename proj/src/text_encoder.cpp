#include "cycle/text_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "cycle/error.hpp"

namespace cycle {

TokenSequence build_mention_seq(const MentionRecord& rec, const Vocabulary& vocab,
                                std::size_t budget) {
  if (rec.mention.empty()) throw DataError("mention is empty");
  if (rec.mention.size() + 4 > budget) {
    throw DataError("mention of " + std::to_string(rec.mention.size()) +
                    " tokens does not fit a budget of " + std::to_string(budget));
  }
  const std::size_t room = budget - 4 - rec.mention.size();
  const std::size_t nl = rec.context_left.size();
  const std::size_t nr = rec.context_right.size();
  const std::size_t right_first = std::min(nr, room / 2);
  const std::size_t keep_left = std::min(nl, room - right_first);
  const std::size_t keep_right = std::min(nr, room - keep_left);

  TokenSequence seq;
  auto& t = seq.tokens;
  t.reserve(keep_left + keep_right + rec.mention.size() + 4);
  t.push_back(markers::kCls);
  for (std::size_t i = nl - keep_left; i < nl; ++i) t.push_back(vocab.id(rec.context_left[i]));
  t.push_back(markers::kMentionStart);
  for (const auto& tok : rec.mention) t.push_back(vocab.id(tok));
  t.push_back(markers::kMentionEnd);
  for (std::size_t i = 0; i < keep_right; ++i) t.push_back(vocab.id(rec.context_right[i]));
  t.push_back(markers::kSep);
  return seq;
}

TokenSequence build_entity_seq(const EntityRecord& rec, const Vocabulary& vocab,
                               std::size_t budget) {
  const auto title = tokenize(rec.title);
  if (title.size() + 3 > budget) {
    throw DataError("title of " + rec.qid + " does not fit a budget of " +
                    std::to_string(budget));
  }
  const auto desc = tokenize(rec.description);
  const std::size_t keep = std::min(desc.size(), budget - 3 - title.size());
  TokenSequence seq;
  auto& t = seq.tokens;
  t.push_back(markers::kCls);
  for (const auto& tok : title) t.push_back(vocab.id(tok));
  t.push_back(markers::kEnt);
  for (std::size_t i = 0; i < keep; ++i) t.push_back(vocab.id(desc[i]));
  t.push_back(markers::kSep);
  return seq;
}

std::string tower_prefix(Tower which) {
  return which == Tower::mention ? "mention_tower." : "entity_tower.";
}

std::string BagEncoder::embedding_name(Tower which) { return tower_prefix(which) + "embedding"; }
std::string BagEncoder::weight_name(Tower which) { return tower_prefix(which) + "dense.weight"; }
std::string BagEncoder::bias_name(Tower which) { return tower_prefix(which) + "dense.bias"; }

void BagEncoder::init_parameters(ad::ParameterStore& params, Rng& rng) const {
  for (Tower w : {Tower::mention, Tower::entity}) {
    params.add(embedding_name(w), ad::glorot_uniform({vocab_size_, dim_}, vocab_size_, dim_, rng));
    params.add(weight_name(w), ad::glorot_uniform({dim_, dim_}, dim_, dim_, rng));
    params.add(bias_name(w), Tensor({dim_}));
  }
}

ad::Var BagEncoder::encode(ad::Tape& tape, const TokenSequence& seq, Tower which,
                           EncodeStats* stats) const {
  std::vector<TokenId> ids = seq.tokens;
  for (auto& id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
      id = markers::kUnk;
      if (stats) ++stats->unknown_tokens;
    }
  }
  const auto pooled = tape.embed_mean(tape.param(embedding_name(which)), ids);
  const auto hidden = tape.add(tape.matvec(tape.param(weight_name(which)), pooled),
                               tape.param(bias_name(which)));
  return tape.tanh(hidden);
}

std::vector<double> encode(const TextEncoder& encoder, const TokenSequence& seq, Tower which,
                           const ad::ParameterStore& params, EncodeStats* stats) {
  ad::Tape tape(&params);
  const auto& v = tape.value(encoder.encode(tape, seq, which, stats));
  return {v.values().begin(), v.values().end()};
}

double score(std::span<const double> y_m, std::span<const double> y_e) {
  if (y_m.size() != y_e.size()) {
    throw UsageError("score: dimension " + std::to_string(y_m.size()) + " vs " +
                     std::to_string(y_e.size()));
  }
  return dot(y_m, y_e);
}

double loss_el(const Tensor& scores) {
  if (scores.rank() != 2 || scores.rows() != scores.cols()) {
    throw UsageError("loss_el needs a square score matrix");
  }
  if (!scores.all_finite()) throw NumericError("loss_el: non-finite score");
  const std::size_t n = scores.rows();
  if (n == 0) throw UsageError("loss_el of empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = scores.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    total += -row[i] + m + std::log(s);
  }
  return total / static_cast<double>(n);
}

ad::Var loss_el(ad::Tape& tape, std::span<const ad::Var> mention_vecs,
                std::span<const ad::Var> entity_vecs) {
  if (mention_vecs.size() != entity_vecs.size() || mention_vecs.empty()) {
    throw UsageError("loss_el needs equally many mentions and entities");
  }
  const std::size_t n = mention_vecs.size();
  std::vector<ad::Var> per_row;
  std::vector<ad::Var> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) row.push_back(tape.dot(mention_vecs[i], entity_vecs[j]));
    const auto lse = tape.log_sum_exp(tape.stack(row));
    per_row.push_back(tape.sub(lse, row[i]));
  }
  return tape.mean(tape.stack(per_row));
}

}  // namespace cycle
