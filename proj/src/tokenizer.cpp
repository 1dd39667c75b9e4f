#include "cycle/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "cycle/error.hpp"

namespace cycle {

namespace {
const char* const kMarkerText[markers::kCount] = {"[UNK]", "[CLS]", "[SEP]",
                                                  "[M_s]", "[M_e]", "[ENT]"};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<std::string> tokenize_all(std::span<const std::string> pieces) {
  std::vector<std::string> out;
  for (const auto& p : pieces) {
    auto toks = tokenize(p);
    out.insert(out.end(), std::make_move_iterator(toks.begin()),
               std::make_move_iterator(toks.end()));
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* m : kMarkerText) push(m);
}

void Vocabulary::push(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (!ids_.emplace(token, id).second) {
    throw DataError("duplicate vocabulary token '" + token + "'");
  }
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_lists) {
  std::set<std::string> distinct;
  for (const auto& list : token_lists) distinct.insert(list.begin(), list.end());
  Vocabulary vocab;
  for (const auto& t : distinct) {
    if (!vocab.ids_.contains(t)) vocab.push(t);
  }
  return vocab;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? markers::kUnk : it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UsageError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<TokenId> Vocabulary::encode_text(std::string_view text) const {
  const auto toks = tokenize(text);
  return encode(toks);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < static_cast<std::size_t>(markers::kCount)) {
    throw DataError("vocabulary " + path.string() + " is missing marker tokens");
  }
  for (TokenId i = 0; i < markers::kCount; ++i) {
    if (lines[static_cast<std::size_t>(i)] != kMarkerText[i]) {
      throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " +
                      kMarkerText[i]);
    }
  }
  Vocabulary vocab;
  for (std::size_t i = markers::kCount; i < lines.size(); ++i) vocab.push(lines[i]);
  return vocab;
}

}  // namespace cycle
