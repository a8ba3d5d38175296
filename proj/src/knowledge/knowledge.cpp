#include "piece/knowledge/knowledge.hpp"

#include <algorithm>
#include <cmath>

#include "piece/error.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::knowledge {

using corpus::Vocabulary;
using num::Tape;
using num::Tensor;
using num::Var;

StaticTable::StaticTable(Tensor table) : table_(std::move(table)) {
  if (table_.rank() != 2 || table_.rows() < Vocabulary::kReserved) throw ShapeError("static table must be vocab x dim");
}

StaticTable StaticTable::random(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  std::vector<double> data(vocab.size() * dim, 0.0);
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    if (static_cast<corpus::TokenId>(r) == Vocabulary::kPad) continue;
    num::Rng rng(num::Rng::derive(seed, "static:" + vocab.token(static_cast<corpus::TokenId>(r))));
    for (std::size_t c = 0; c < dim; ++c) data[r * dim + c] = rng.uniform(-1.0, 1.0);
  }
  return StaticTable(Tensor({vocab.size(), dim}, std::move(data)));
}

std::vector<double> StaticTable::mean(const std::vector<std::size_t>& ids) const {
  const std::size_t d = dim();
  std::vector<double> out(d, 0.0);
  if (ids.empty()) return out;
  for (std::size_t id : ids) {
    if (id >= rows()) throw ShapeError("static table: id out of range");
    for (std::size_t c = 0; c < d; ++c) out[c] += table_[id * d + c];
  }
  for (double& v : out) v /= static_cast<double>(ids.size());
  return out;
}

namespace {

std::vector<std::size_t> known_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  for (const std::string& t : tokens) {
    const corpus::TokenId id = vocab.id(t);
    if (id != Vocabulary::kUnk) ids.push_back(static_cast<std::size_t>(id));
  }
  return ids;
}

double clamped_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

}  // namespace

double score_utterance(const corpus::Utterance& utterance, const Lexicon& lexicon, const StaticTable& table,
                       const Vocabulary& vocab) {
  const auto ids = known_ids(corpus::tokenize(utterance.text), vocab);
  if (ids.empty()) return 0.0;
  const std::vector<double> u = table.mean(ids);
  double best = 0.0;
  for (const LexiconEntry& e : lexicon.entries)
    for (const auto& phrase : e.phrases) {
      const auto pids = known_ids(phrase, vocab);
      if (pids.empty()) continue;
      best = std::max(best, clamped_cosine(u, table.mean(pids)));
    }
  return best;
}

std::vector<bool> apply_threshold(const std::vector<double>& scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
  std::vector<bool> mask(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) mask[i] = scores[i] >= threshold;
  return mask;
}

FilteredDialogue filter_dialogue(const corpus::Dialogue& dialogue, const std::vector<bool>& component_mask,
                                 const Lexicon& lexicon, const StaticTable& table, const Vocabulary& vocab,
                                 double threshold) {
  if (component_mask.size() != dialogue.size()) throw ShapeError("filter_dialogue: mask length differs from n");
  FilteredDialogue out{dialogue, {}, {}};
  for (const corpus::Utterance& u : dialogue.utterances) out.scores.push_back(score_utterance(u, lexicon, table, vocab));
  const std::vector<bool> phq = apply_threshold(out.scores, threshold);
  out.keep.resize(dialogue.size());
  for (std::size_t i = 0; i < dialogue.size(); ++i) out.keep[i] = component_mask[i] && phq[i];
  return out;
}

ContextEncoder ContextEncoder::init(const num::Initializer& init, const std::string& name, std::size_t vocab,
                                    std::size_t width) {
  return ContextEncoder{init.uniform(name + ".embedding", {vocab, width}, 1),
                        init.uniform(name + ".query", {width, width}, width),
                        init.uniform(name + ".key", {width, width}, width),
                        init.uniform(name + ".value", {width, width}, width)};
}

void ContextEncoder::collect(const std::string& prefix, num::NamedParams& out) {
  out.emplace_back(prefix + "embedding", &embedding);
  out.emplace_back(prefix + "query", &query);
  out.emplace_back(prefix + "key", &key);
  out.emplace_back(prefix + "value", &value);
}

Var ContextEncoder::encode(Tape& tape, const std::vector<std::size_t>& ids) const {
  Var x = num::gather_rows(tape.param(embedding), ids);
  num::AttentionResult a = num::scaled_dot_attention(num::matmul(x, tape.param(query)),
                                                     num::matmul(x, tape.param(key)),
                                                     num::matmul(x, tape.param(value)));
  return num::mean_rows(num::add(x, a.output));
}

Var ContextEncoder::encode_all(Tape& tape, const EncodedDialogue& dialogue) const {
  std::vector<Var> rows;
  rows.reserve(dialogue.size());
  for (const auto& ids : dialogue) rows.push_back(encode(tape, ids));
  return num::concat_rows(rows);
}

Var embed_contextual(Tape& tape, const ContextEncoder& encoder, const EncodedDialogue& dialogue, std::size_t i) {
  if (i >= dialogue.size()) throw ShapeError("embed_contextual: index out of range");
  return encoder.encode(tape, dialogue[i]);
}

Tensor embed_static(const StaticTable& table, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw ShapeError("embed_static: no tokens");
  return Tensor({1, table.dim()}, table.mean(ids));
}

Tensor embed_static_all(const StaticTable& table, const EncodedDialogue& dialogue) {
  std::vector<double> data;
  data.reserve(dialogue.size() * table.dim());
  for (const auto& ids : dialogue) {
    if (ids.empty()) throw ShapeError("embed_static: no tokens");
    const std::vector<double> row = table.mean(ids);
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({dialogue.size(), table.dim()}, std::move(data));
}

ScaffoldParams ScaffoldParams::init(const num::Initializer& init, const std::string& name, std::size_t input,
                                    std::size_t hidden) {
  return ScaffoldParams{init.uniform(name + ".mask_row", {1, input}, 1),
                        num::BiLstmParams::init(init, name + ".lstm", input, hidden)};
}

void ScaffoldParams::collect(const std::string& prefix, num::NamedParams& out) {
  out.emplace_back(prefix + "mask_row", &mask_row);
  lstm.collect(prefix + "lstm.", out);
}

Var scaffold(const ScaffoldParams& params, Var contextual, Var static_rows, const std::vector<bool>& keep) {
  const std::size_t n = contextual.rows();
  if (static_rows.rows() != n || keep.size() != n) throw ShapeError("scaffold: row counts differ");
  if (contextual.cols() + static_rows.cols() != params.mask_row.cols()) {
    throw ShapeError("scaffold: input width " + std::to_string(contextual.cols() + static_rows.cols()) +
                     " does not match mask row width " + std::to_string(params.mask_row.cols()));
  }
  Tape& tape = contextual.tape();
  Var mixed = num::concat_cols({contextual, static_rows});
  Var mask = tape.param(params.mask_row);
  std::vector<Var> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rows.push_back(keep[i] ? num::slice_rows(mixed, i, 1) : mask);
  Var h = num::bilstm(num::concat_rows(rows), params.lstm);
  return num::scaled_dot_attention(h, h, h).output;
}

}  // namespace piece::knowledge
