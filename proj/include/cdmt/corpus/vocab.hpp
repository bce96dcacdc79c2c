#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cdmt {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kSepId = 2;  // <S>, sentence separator
inline constexpr int kEosId = 3;  // <E>, end of sequence
inline constexpr int kNumReserved = 4;

inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kUnkToken = "<UNK>";
inline constexpr std::string_view kSepToken = "<S>";
inline constexpr std::string_view kEosToken = "<E>";

inline bool is_reserved_token(std::string_view t) {
  return t == kPadToken || t == kUnkToken || t == kSepToken || t == kEosToken;
}

/// Split on ASCII whitespace. Text that is already segmented (e.g. by an
/// external subword tool) passes through unchanged.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(std::span<const std::string> toks, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += sep;
    out += toks[i];
  }
  return out;
}

/// Token <-> id bijection. Ids 0..3 are always <PAD>, <UNK>, <S>, <E>.
class Vocab {
 public:
  Vocab() {
    for (auto t : {kPadToken, kUnkToken, kSepToken, kEosToken}) push(std::string(t));
  }

  /// Reserved tokens followed by the distinct non-reserved input tokens in
  /// lexicographic order.
  template <typename Range>
  static Vocab build(const Range& tokens) {
    std::vector<std::string> sorted;
    for (const auto& t : tokens)
      if (!is_reserved_token(t)) sorted.emplace_back(t);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Vocab v;
    for (auto& t : sorted) v.push(std::move(t));
    return v;
  }

  /// Restore from a full token list (as written by tokens()).
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < kNumReserved || tokens[kPadId] != kPadToken || tokens[kUnkId] != kUnkToken ||
        tokens[kSepId] != kSepToken || tokens[kEosId] != kEosToken)
      throw std::invalid_argument("vocab: reserved tokens must occupy ids 0..3 as <PAD>, <UNK>, <S>, <E>");
    Vocab v;
    for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
      if (is_reserved_token(tokens[i]) || v.index_.count(tokens[i]))
        throw std::invalid_argument("vocab: duplicate token '" + tokens[i] + "'");
      v.push(tokens[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(std::string_view t) const { return index_.find(std::string(t)) != index_.end(); }

  int id(std::string_view t) const {
    auto it = index_.find(std::string(t));
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(std::span<const std::string> toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  /// FNV-1a over the ordered token list.
  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(std::string t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace cdmt
