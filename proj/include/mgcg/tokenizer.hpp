#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgcg {

using Tokens = std::vector<std::string>;

/// Splits text into tokens: every CJK codepoint is its own token, runs of
/// letters/digits/underscore form one token (with '.', '-', '\'' kept when
/// they join two word characters, so "8.1" and "don't" stay whole), and any
/// other non-space character is a single-character token.
Tokens tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string join_tokens(const Tokens& tokens);

/// True if `needle` occurs as a contiguous token subsequence of `haystack`.
bool contains_subsequence(const Tokens& haystack, const Tokens& needle);

bool is_cjk_codepoint(std::uint32_t cp);

using TokenId = std::int32_t;

/// Token vocabulary with reserved ids for the special symbols.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kCls = 4;
  static constexpr TokenId kSep = 5;

  Vocab();

  /// Builds a vocabulary from token streams, keeping tokens with count >=
  /// min_freq. Ids are assigned by descending frequency, then lexicographic.
  static Vocab build(const std::vector<Tokens>& streams, std::size_t min_freq = 1);

  static Vocab from_tokens(const std::vector<std::string>& id_to_token);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::vector<TokenId> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<TokenId>& ids, bool strip_special = true) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  bool is_special(TokenId id) const { return id >= 0 && id <= kSep; }

 private:
  void add(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

}  // namespace mgcg
