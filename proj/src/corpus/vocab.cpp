#include "piece/corpus/vocab.hpp"

#include <algorithm>
#include <map>

#include "piece/error.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::corpus {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r{"<pad>", "<unk>", "<bos>", "<eos>", "<mask>"};
  return r;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> regular_tokens) {
  tokens_ = reserved_tokens();
  tokens_.insert(tokens_.end(), regular_tokens.begin(), regular_tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("vocabulary: duplicate token \"" + tokens_[i] + "\"");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw ShapeError("vocabulary id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const std::string& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId i : ids) {
    if (i != kUnk && i < static_cast<TokenId>(kReserved)) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(i);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::string joined;
  for (const std::string& t : tokens_) {
    joined += t;
    joined.push_back('\n');
  }
  return num::fnv1a64(joined);
}

EncodedDialogue encode_dialogue(const Dialogue& dialogue, const Vocabulary& vocab) {
  EncodedDialogue out;
  out.reserve(dialogue.size());
  for (const Utterance& u : dialogue.utterances) {
    std::vector<std::size_t> ids;
    for (TokenId id : vocab.encode(u.text)) ids.push_back(static_cast<std::size_t>(id));
    if (ids.empty()) throw DataError("dialogue " + dialogue.id + ": utterance without tokens");
    out.push_back(std::move(ids));
  }
  return out;
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const Dialogue& d : corpus.dialogues) {
    for (const Utterance& u : d.utterances)
      for (std::string& t : tokenize(u.text)) ++counts[std::move(t)];
    if (d.gold_summary)
      for (std::string& t : tokenize(*d.gold_summary)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [tok, n] : counts)
    if (n >= min_count) entries.emplace_back(tok, n);
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(entries.size());
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return Vocabulary(std::move(tokens));
}

}  // namespace piece::corpus
