#pragma once
// Bi-encoder text side: token sequence layout, the two towers, dot-product
// scoring and the in-batch entity-linking loss.

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cycle/autodiff.hpp"
#include "cycle/store.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

inline constexpr std::size_t kMaxSequenceLength = 128;

struct TokenSequence {
  std::vector<TokenId> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const TokenSequence&) const = default;
};

// [CLS] ctxt_l [M_s] mention [M_e] ctxt_r [SEP]. Over budget, both contexts
// are cut from the outside in, evenly; the mention is never cut.
TokenSequence build_mention_seq(const MentionRecord& rec, const Vocabulary& vocab,
                                std::size_t budget = kMaxSequenceLength);

// [CLS] title [ENT] description [SEP], description cut from the right.
TokenSequence build_entity_seq(const EntityRecord& rec, const Vocabulary& vocab,
                               std::size_t budget = kMaxSequenceLength);

enum class Tower { mention, entity };

std::string tower_prefix(Tower which);

struct EncodeStats {
  std::atomic<std::size_t> unknown_tokens{0};
};

// Interface for a sequence-to-vector tower pair. Parameters live in a shared
// ParameterStore under tower_prefix(which).
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual void init_parameters(ad::ParameterStore& params, Rng& rng) const = 0;
  virtual ad::Var encode(ad::Tape& tape, const TokenSequence& seq, Tower which,
                         EncodeStats* stats = nullptr) const = 0;
};

// Embedding table, mean pooling over every position, one dense tanh layer.
class BagEncoder final : public TextEncoder {
 public:
  BagEncoder(std::size_t vocab_size, std::size_t dim) : vocab_size_(vocab_size), dim_(dim) {}

  std::size_t dim() const override { return dim_; }
  std::size_t vocab_size() const { return vocab_size_; }
  void init_parameters(ad::ParameterStore& params, Rng& rng) const override;
  ad::Var encode(ad::Tape& tape, const TokenSequence& seq, Tower which,
                 EncodeStats* stats = nullptr) const override;

  static std::string embedding_name(Tower which);
  static std::string weight_name(Tower which);
  static std::string bias_name(Tower which);

 private:
  std::size_t vocab_size_;
  std::size_t dim_;
};

// Plain evaluation of a tower.
std::vector<double> encode(const TextEncoder& encoder, const TokenSequence& seq, Tower which,
                           const ad::ParameterStore& params, EncodeStats* stats = nullptr);

// y_m . y_e
double score(std::span<const double> y_m, std::span<const double> y_e);

// Mean over rows i of -s(i,i) + logsumexp_j s(i,j); gold for row i is column
// i. Max-shifted.
double loss_el(const Tensor& scores);
ad::Var loss_el(ad::Tape& tape, std::span<const ad::Var> mention_vecs,
                std::span<const ad::Var> entity_vecs);

}  // namespace cycle
