#include "piece/knowledge/lexicon.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "piece/corpus/vocab.hpp"
#include "piece/error.hpp"

namespace piece::knowledge {

namespace {

constexpr const char* kDefaultLexicon = R"({"item":1,"phrases":["little interest in things","no pleasure in anything"]}
{"item":2,"phrases":["feeling down and depressed","feeling hopeless about everything"]}
{"item":3,"phrases":["trouble falling asleep","sleeping far too much"]}
{"item":4,"phrases":["feeling tired all the time","having little energy"]}
{"item":5,"phrases":["eating much less than usual","overeating at night"]}
{"item":6,"phrases":["feeling like a failure","feeling bad about myself"]}
{"item":7,"phrases":["trouble concentrating on work","cannot focus on reading"]}
{"item":8,"phrases":["moving slowly all day","too restless to sit still"]}
{"item":9,"phrases":["thoughts of hurting myself","better off dead"]}
)";

}  // namespace

void validate_lexicon(const Lexicon& lexicon) {
  if (lexicon.entries.empty()) throw DataError("lexicon has no entries");
  for (const LexiconEntry& e : lexicon.entries) {
    if (e.item < 1 || e.item > 9) throw DataError("lexicon item " + std::to_string(e.item) + " outside 1..9");
    if (e.phrases.empty()) throw DataError("lexicon item " + std::to_string(e.item) + " has no phrases");
    for (const auto& p : e.phrases)
      if (p.empty()) throw DataError("lexicon item " + std::to_string(e.item) + " has an empty phrase");
  }
}

Lexicon read_lexicon(std::istream& is) {
  using nlohmann::json;
  Lexicon lex;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "lexicon line " + std::to_string(line) + ": ";
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(where + "malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("item") || !rec["item"].is_number_integer() || !rec.contains("phrases") ||
        !rec["phrases"].is_array()) {
      throw DataError(where + "expected {\"item\": int, \"phrases\": [str, ...]}");
    }
    LexiconEntry e;
    e.item = rec["item"].get<int>();
    for (const json& p : rec["phrases"]) {
      if (!p.is_string()) throw DataError(where + "phrases must be strings");
      e.phrases.push_back(corpus::tokenize(p.get<std::string>()));
    }
    lex.entries.push_back(std::move(e));
  }
  try {
    validate_lexicon(lex);
  } catch (const DataError& e) {
    throw DataError(std::string("invalid lexicon: ") + e.what());
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read lexicon file " + path.string());
  return read_lexicon(is);
}

Lexicon default_lexicon() {
  std::istringstream is(kDefaultLexicon);
  return read_lexicon(is);
}

std::vector<std::string> default_lexicon_phrases() {
  std::vector<std::string> out;
  for (const LexiconEntry& e : default_lexicon().entries)
    for (const auto& p : e.phrases) {
      std::string s;
      for (const auto& t : p) s += (s.empty() ? "" : " ") + t;
      out.push_back(std::move(s));
    }
  return out;
}

}  // namespace piece::knowledge
