#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "piece/corpus/types.hpp"

namespace piece::corpus {

// JSON Lines, one dialogue per line:
//   {"id": str, "summary": str|null,
//    "utterances": [{"speaker": "T"|"C", "text": str, "component": "SH"|"PD"|"RT"|"DF"|null}, ...]}
// Unknown fields are ignored on read. Errors name the offending line.
Corpus read_corpus(std::istream& is);
Corpus load_corpus(const std::filesystem::path& path);

// Canonical form: keys in schema order, LF line endings, no trailing spaces.
void write_corpus(std::ostream& os, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

std::string dialogue_to_line(const Dialogue& d);

}  // namespace piece::corpus
