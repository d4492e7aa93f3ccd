#include "mgcg/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "mgcg/errors.hpp"

namespace mgcg {

namespace {

struct Codepoint {
  std::uint32_t value;
  std::size_t offset;
  std::size_t length;
};

std::vector<Codepoint> decode_utf8(std::string_view text) {
  std::vector<Codepoint> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    std::uint32_t cp = c;
    if (c >= 0xF0 && c < 0xF8) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
    }
    out.push_back({cp, i, len});
    i += len;
  }
  return out;
}

bool is_space(std::uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v' || cp == 0x00A0 || cp == 0x3000;
}

bool is_word(std::uint32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           (cp >= '0' && cp <= '9') || cp == '_';
  }
  // Non-ASCII letters outside the CJK blocks (accented Latin, Cyrillic, ...)
  // behave like Latin letters; CJK is handled separately.
  return !is_cjk_codepoint(cp);
}

bool is_joiner(std::uint32_t cp) { return cp == '.' || cp == '-' || cp == '\''; }

}  // namespace

bool is_cjk_codepoint(std::uint32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFFEF) ||
         (cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0x2E80 && cp <= 0x2FDF) ||
         (cp >= 0x31C0 && cp <= 0x31EF) || (cp >= 0xAC00 && cp <= 0xD7AF);
}

Tokens tokenize(std::string_view text) {
  const auto cps = decode_utf8(text);
  Tokens tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    const auto cp = cps[i].value;
    if (is_space(cp)) {
      ++i;
      continue;
    }
    if (is_word(cp)) {
      std::size_t j = i + 1;
      while (j < cps.size()) {
        if (is_word(cps[j].value)) {
          ++j;
        } else if (is_joiner(cps[j].value) && j + 1 < cps.size() &&
                   is_word(cps[j + 1].value)) {
          j += 2;
        } else {
          break;
        }
      }
      const std::size_t begin = cps[i].offset;
      const std::size_t end = cps[j - 1].offset + cps[j - 1].length;
      tokens.emplace_back(text.substr(begin, end - begin));
      i = j;
      continue;
    }
    tokens.emplace_back(text.substr(cps[i].offset, cps[i].length));
    ++i;
  }
  return tokens;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool contains_subsequence(const Tokens& haystack, const Tokens& needle) {
  if (needle.empty()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

Vocab::Vocab() {
  for (const char* special : {"[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"}) {
    add(special);
  }
}

void Vocab::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<Tokens>& streams, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& stream : streams) {
    for (const auto& t : stream) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (const auto& [token, count] : sorted) {
    if (count >= min_freq) vocab.add(token);
  }
  return vocab;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& id_to_token) {
  Vocab vocab;
  if (id_to_token.size() < vocab.size()) throw SchemaError("vocabulary missing reserved tokens");
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (id_to_token[i] != vocab.id_to_token_[i]) {
      throw SchemaError("vocabulary reserved token mismatch at id " + std::to_string(i));
    }
  }
  for (std::size_t i = vocab.size(); i < id_to_token.size(); ++i) vocab.add(id_to_token[i]);
  if (vocab.size() != id_to_token.size()) throw SchemaError("duplicate vocabulary entries");
  return vocab;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    return id_to_token_[kUnk];
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(const Tokens& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocab::decode(const std::vector<TokenId>& ids, bool strip_special) const {
  Tokens out;
  for (auto id : ids) {
    if (strip_special && is_special(id) && id != kUnk) continue;
    out.push_back(token(id));
  }
  return out;
}

}  // namespace mgcg
