#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cycle {

using TokenId = std::int32_t;

// Lowercases, splits on whitespace and emits each ASCII punctuation
// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

// Re-tokenizes a list of already split pieces with the same rules.
std::vector<std::string> tokenize_all(std::span<const std::string> pieces);

// Token ids 0..5 are reserved for the marker symbols.
namespace markers {
inline constexpr TokenId kUnk = 0;
inline constexpr TokenId kCls = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kMentionStart = 3;
inline constexpr TokenId kMentionEnd = 4;
inline constexpr TokenId kEnt = 5;
inline constexpr TokenId kCount = 6;

inline bool is_marker(TokenId id) { return id >= 0 && id < kCount; }
}  // namespace markers

class Vocabulary {
 public:
  // Marker symbols only.
  Vocabulary();

  // Markers followed by every distinct token of the corpus in byte order, so
  // the result does not depend on the order texts are supplied in.
  static Vocabulary build(std::span<const std::vector<std::string>> token_lists);

  std::size_t size() const { return tokens_.size(); }
  // Unknown tokens map to markers::kUnk.
  TokenId id(const std::string& token) const;
  std::optional<TokenId> find(const std::string& token) const;
  const std::string& token(TokenId id) const;

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<TokenId> encode_text(std::string_view text) const;

  // One token per line, id = zero-based line number.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace cycle
