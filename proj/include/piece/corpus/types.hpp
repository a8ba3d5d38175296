#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace piece::corpus {

enum class Speaker { Therapist, Client };

// Counseling components in their fixed order: symptom & history, patient
// discovery, reflecting, discussion filler.
enum class Component { SH = 0, PD = 1, RT = 2, DF = 3 };

inline constexpr std::size_t kComponentCount = 4;
inline constexpr std::array<Component, kComponentCount> kComponents{Component::SH, Component::PD, Component::RT,
                                                                    Component::DF};

std::string_view component_name(Component c);
std::optional<Component> parse_component(std::string_view name);
std::string_view speaker_code(Speaker s);  // "T" / "C"
std::optional<Speaker> parse_speaker(std::string_view code);

// SH, PD and RT carry summary content; DF does not.
inline bool is_relevant(Component c) { return c != Component::DF; }

struct Utterance {
  std::size_t index = 0;
  Speaker speaker = Speaker::Therapist;
  std::string text;
  std::optional<Component> component;

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  std::optional<std::string> gold_summary;

  std::size_t size() const { return utterances.size(); }
  bool fully_labeled() const;
  bool operator==(const Dialogue&) const = default;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::map<std::string, Split> split;

  const Dialogue* find(std::string_view id) const;
  std::vector<const Dialogue*> in_split(Split s) const;
  bool operator==(const Corpus&) const = default;
};

// Throws DataError when indices are not 0..n-1, the list is empty or a text is blank.
void validate_dialogue(const Dialogue& d);
// Dialogue checks plus unique ids and split entries that name existing dialogues.
void validate_corpus(const Corpus& c);

}  // namespace piece::corpus
