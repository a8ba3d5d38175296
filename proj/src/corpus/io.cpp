#include "piece/corpus/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"
#include "piece/error.hpp"

namespace piece::corpus {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw DataError("corpus line " + std::to_string(line) + ": " + what);
}

Dialogue parse_record(const json& rec, std::size_t line) {
  if (!rec.is_object()) fail(line, "record is not an object");
  Dialogue d;
  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) fail(line, "missing string field \"id\"");
  d.id = id->get<std::string>();

  if (auto s = rec.find("summary"); s != rec.end() && !s->is_null()) {
    if (!s->is_string()) fail(line, "\"summary\" must be a string or null");
    d.gold_summary = s->get<std::string>();
  }

  auto utts = rec.find("utterances");
  if (utts == rec.end() || !utts->is_array()) fail(line, "missing array field \"utterances\"");
  if (utts->empty()) fail(line, "dialogue " + d.id + " has an empty utterance list");
  for (const json& u : *utts) {
    if (!u.is_object()) fail(line, "utterance is not an object");
    Utterance out;
    out.index = d.utterances.size();
    auto sp = u.find("speaker");
    if (sp == u.end() || !sp->is_string()) fail(line, "utterance missing \"speaker\"");
    auto speaker = parse_speaker(sp->get<std::string>());
    if (!speaker) fail(line, "speaker must be \"T\" or \"C\"");
    out.speaker = *speaker;
    auto tx = u.find("text");
    if (tx == u.end() || !tx->is_string()) fail(line, "utterance missing \"text\"");
    out.text = tx->get<std::string>();
    if (auto c = u.find("component"); c != u.end() && !c->is_null()) {
      if (!c->is_string()) fail(line, "\"component\" must be a string or null");
      auto comp = parse_component(c->get<std::string>());
      if (!comp) fail(line, "unknown component \"" + c->get<std::string>() + "\"");
      out.component = *comp;
    }
    d.utterances.push_back(std::move(out));
  }
  try {
    validate_dialogue(d);
  } catch (const DataError& e) {
    fail(line, e.what());
  }
  return d;
}

}  // namespace

Corpus read_corpus(std::istream& is) {
  Corpus c;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(line, std::string("malformed record: ") + e.what());
    }
    Dialogue d = parse_record(rec, line);
    if (!ids.insert(d.id).second) fail(line, "duplicate dialogue id " + d.id);
    c.dialogues.push_back(std::move(d));
  }
  return c;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read corpus file " + path.string());
  return read_corpus(is);
}

std::string dialogue_to_line(const Dialogue& d) {
  ordered_json rec;
  rec["id"] = d.id;
  rec["summary"] = d.gold_summary ? ordered_json(*d.gold_summary) : ordered_json(nullptr);
  ordered_json utts = ordered_json::array();
  for (const Utterance& u : d.utterances) {
    ordered_json o;
    o["speaker"] = std::string(speaker_code(u.speaker));
    o["text"] = u.text;
    o["component"] = u.component ? ordered_json(std::string(component_name(*u.component))) : ordered_json(nullptr);
    utts.push_back(std::move(o));
  }
  rec["utterances"] = std::move(utts);
  return rec.dump();
}

void write_corpus(std::ostream& os, const Corpus& corpus) {
  for (const Dialogue& d : corpus.dialogues) os << dialogue_to_line(d) << '\n';
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write corpus file " + path.string());
  write_corpus(os, corpus);
  if (!os) throw std::runtime_error("failed writing corpus file " + path.string());
}

}  // namespace piece::corpus
