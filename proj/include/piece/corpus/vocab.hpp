#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "piece/corpus/types.hpp"

namespace piece::corpus {

// Lowercases ASCII, splits on whitespace and emits every ASCII punctuation
// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

using TokenId = std::int64_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kMask = 4;
  static constexpr std::size_t kReserved = 5;

  Vocabulary();  // reserved tokens only
  explicit Vocabulary(std::vector<std::string> regular_tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::string_view text) const;
  // Space-joined tokens, skipping reserved ids other than UNK.
  std::string decode(const std::vector<TokenId>& ids) const;

  // FNV-1a over the newline-joined token list.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Token ids of every utterance of a dialogue; throws DataError on an utterance
// without tokens.
using EncodedDialogue = std::vector<std::vector<std::size_t>>;
EncodedDialogue encode_dialogue(const Dialogue& dialogue, const Vocabulary& vocab);

// Tokens of all utterances and gold summaries with frequency >= min_count, in
// descending frequency order, ties broken lexicographically.
Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count);

}  // namespace piece::corpus
