#include "piece/corpus/types.hpp"

#include <algorithm>
#include <set>

#include "piece/error.hpp"

namespace piece::corpus {

std::string_view component_name(Component c) {
  switch (c) {
    case Component::SH: return "SH";
    case Component::PD: return "PD";
    case Component::RT: return "RT";
    case Component::DF: return "DF";
  }
  return "?";
}

std::optional<Component> parse_component(std::string_view name) {
  for (Component c : kComponents)
    if (component_name(c) == name) return c;
  return std::nullopt;
}

std::string_view speaker_code(Speaker s) { return s == Speaker::Therapist ? "T" : "C"; }

std::optional<Speaker> parse_speaker(std::string_view code) {
  if (code == "T") return Speaker::Therapist;
  if (code == "C") return Speaker::Client;
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

bool Dialogue::fully_labeled() const {
  return std::all_of(utterances.begin(), utterances.end(), [](const Utterance& u) { return u.component.has_value(); });
}

const Dialogue* Corpus::find(std::string_view id) const {
  for (const Dialogue& d : dialogues)
    if (d.id == id) return &d;
  return nullptr;
}

std::vector<const Dialogue*> Corpus::in_split(Split s) const {
  std::vector<const Dialogue*> out;
  for (const Dialogue& d : dialogues) {
    auto it = split.find(d.id);
    if (it != split.end() && it->second == s) out.push_back(&d);
  }
  return out;
}

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

}  // namespace

void validate_dialogue(const Dialogue& d) {
  if (d.id.empty()) throw DataError("dialogue id is empty");
  if (d.utterances.empty()) throw DataError("dialogue " + d.id + " has no utterances");
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const Utterance& u = d.utterances[i];
    if (u.index != i) throw DataError("dialogue " + d.id + ": utterance indices are not contiguous");
    if (blank(u.text)) throw DataError("dialogue " + d.id + ": utterance " + std::to_string(i) + " is blank");
  }
}

void validate_corpus(const Corpus& c) {
  std::set<std::string> ids;
  for (const Dialogue& d : c.dialogues) {
    validate_dialogue(d);
    if (!ids.insert(d.id).second) throw DataError("duplicate dialogue id " + d.id);
  }
  for (const auto& [id, s] : c.split) {
    if (!ids.count(id)) throw DataError("split references unknown dialogue " + id);
  }
}

}  // namespace piece::corpus
