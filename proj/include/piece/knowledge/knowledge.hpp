#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piece/corpus/types.hpp"
#include "piece/corpus/vocab.hpp"
#include "piece/knowledge/lexicon.hpp"
#include "piece/numerics/layers.hpp"

namespace piece::knowledge {

using corpus::EncodedDialogue;
using corpus::encode_dialogue;

// Non-contextual per-token vectors (vocab x dim). Frozen: never trained.
class StaticTable {
 public:
  explicit StaticTable(num::Tensor table);
  // Row of token t drawn from a stream keyed by (seed, t), so a token keeps its
  // vector across vocabularies. The PAD row is zero.
  static StaticTable random(const corpus::Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return table_.cols(); }
  std::size_t rows() const { return table_.rows(); }
  const num::Tensor& table() const { return table_; }
  num::Tensor& table() { return table_; }
  // Mean of the rows of `ids`; zeros for an empty list.
  std::vector<double> mean(const std::vector<std::size_t>& ids) const;

 private:
  num::Tensor table_;
};

// Max over phrases of cosine(mean utterance vector, mean phrase vector) clamped to
// [0, 1]. Tokens mapping to UNK are left out on both sides; an utterance or phrase
// without in-vocabulary tokens contributes score 0.
double score_utterance(const corpus::Utterance& utterance, const Lexicon& lexicon, const StaticTable& table,
                       const corpus::Vocabulary& vocab);

std::vector<bool> apply_threshold(const std::vector<double>& scores, double threshold);

struct FilteredDialogue {
  corpus::Dialogue dialogue;
  std::vector<bool> keep;       // component mask AND threshold mask
  std::vector<double> scores;   // all utterances
};

FilteredDialogue filter_dialogue(const corpus::Dialogue& dialogue, const std::vector<bool>& component_mask,
                                 const Lexicon& lexicon, const StaticTable& table, const corpus::Vocabulary& vocab,
                                 double threshold);

// Token embedding, one residual self-attention layer over the utterance's
// tokens, then mean pooling. Shared with the structural graph features.
struct ContextEncoder {
  num::Tensor embedding;  // vocab x e
  num::Tensor query;      // e x e
  num::Tensor key;        // e x e
  num::Tensor value;      // e x e

  static ContextEncoder init(const num::Initializer& init, const std::string& name, std::size_t vocab,
                             std::size_t width);
  std::size_t width() const { return embedding.cols(); }
  void collect(const std::string& prefix, num::NamedParams& out);

  num::Var encode(num::Tape& tape, const std::vector<std::size_t>& ids) const;  // 1 x e
  num::Var encode_all(num::Tape& tape, const EncodedDialogue& dialogue) const;  // n x e
};

num::Var embed_contextual(num::Tape& tape, const ContextEncoder& encoder, const EncodedDialogue& dialogue,
                          std::size_t i);
// Mean of static rows; OOV tokens already map to UNK, which has its own row.
num::Tensor embed_static(const StaticTable& table, const std::vector<std::size_t>& ids);
num::Tensor embed_static_all(const StaticTable& table, const EncodedDialogue& dialogue);  // n x s

struct ScaffoldParams {
  num::Tensor mask_row;  // 1 x (e + s), stands in for filtered-out utterances
  num::BiLstmParams lstm;

  static ScaffoldParams init(const num::Initializer& init, const std::string& name, std::size_t input,
                             std::size_t hidden);
  std::size_t output_width() const { return 2 * lstm.forward.hidden(); }
  void collect(const std::string& prefix, num::NamedParams& out);
};

// Rows x_i = contextual_i (+) static_i where keep[i], else the MASK row; then a
// BiLSTM and parameter-free self-attention softmax(H H^T / sqrt(d)) H -> n x d.
num::Var scaffold(const ScaffoldParams& params, num::Var contextual, num::Var static_rows,
                  const std::vector<bool>& keep);

}  // namespace piece::knowledge
