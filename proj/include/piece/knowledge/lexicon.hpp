#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace piece::knowledge {

struct LexiconEntry {
  int item = 1;                                   // questionnaire item, 1..9
  std::vector<std::vector<std::string>> phrases;  // tokenized, each non-empty
};

struct Lexicon {
  std::vector<LexiconEntry> entries;
};

// Throws DataError unless every item is in 1..9 and has at least one non-empty phrase.
void validate_lexicon(const Lexicon& lexicon);

// One JSON record per line: {"item": 1..9, "phrases": [str, ...]}.
Lexicon read_lexicon(std::istream& is);
Lexicon load_lexicon(const std::filesystem::path& path);

// Built-in copy of assets/phq9_lexicon.jsonl.
Lexicon default_lexicon();
// Phrase strings of the default lexicon, in file order.
std::vector<std::string> default_lexicon_phrases();

}  // namespace piece::knowledge
