#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "piece/classifier/classifier.hpp"
#include "piece/corpus/types.hpp"
#include "piece/corpus/vocab.hpp"
#include "piece/knowledge/knowledge.hpp"
#include "piece/knowledge/lexicon.hpp"
#include "piece/planner/config.hpp"
#include "piece/planner/decoder.hpp"
#include "piece/sheaf/sheaf.hpp"

namespace piece::planner {

// The whole summarizer. Parameter prefixes: "clf." classifier, "scaf." encoder,
// static table and scaffold, "sheaf." structure, "plan." engines, "dec." decoder.
struct PieceModel {
  PieceConfig config;
  corpus::Vocabulary vocab;
  knowledge::Lexicon lexicon;
  classifier::ComponentClassifier classifier;
  knowledge::StaticTable static_table{num::Tensor::zeros({corpus::Vocabulary::kReserved, 1})};
  knowledge::ContextEncoder encoder;
  knowledge::ScaffoldParams scaffold;
  sheaf::SheafParams sheaf;
  DecoderLM decoder;

  // Throws UsageError on an invalid config.
  static PieceModel init(const PieceConfig& config, corpus::Vocabulary vocab, knowledge::Lexicon lexicon);

  // Parameters updated by summarizer training (classifier and static table excluded).
  void collect_trainable(num::NamedParams& out);
  // Every checkpointed tensor.
  void collect_all(num::NamedParams& out);
};

// Per-dialogue inputs that do not depend on trainable parameters.
struct PreparedDialogue {
  std::string id;
  corpus::EncodedDialogue tokens;
  std::vector<corpus::Component> labels;  // predicted, or gold where present in gold mode
  knowledge::FilteredDialogue filtered;
  sheaf::DialogueGraph graph;
  num::Tensor static_rows;               // n x static_dim
  bool has_summary = false;
  std::vector<corpus::TokenId> summary;  // gold summary tokens
};

PreparedDialogue prepare_dialogue(const PieceModel& model, const corpus::Dialogue& dialogue);

struct PlanForward {
  PlanContext context;
  num::Var laplacian;  // normalized sheaf Laplacian
};

// Encoder -> scaffold (R_k) and sheaf network (R_s) on `tape`.
PlanForward encode_plan(num::Tape& tape, const PieceModel& model, const PreparedDialogue& prepared,
                        Ablation ablation = Ablation::None);
PlanMemory compute_memory(const PieceModel& model, const PreparedDialogue& prepared,
                          Ablation ablation = Ablation::None);

// Teacher-forced cross-entropy of the gold summary. Throws DataError without one.
num::Var summary_loss(num::Tape& tape, const PieceModel& model, const PreparedDialogue& prepared,
                      Ablation ablation = Ablation::None);
double summary_loss_value(const PieceModel& model, const PreparedDialogue& prepared,
                          Ablation ablation = Ablation::None);

std::vector<corpus::TokenId> generate_tokens(const PieceModel& model, const PreparedDialogue& prepared,
                                             const GenerationConfig& generation, Ablation ablation = Ablation::None);
std::string generate_summary(const PieceModel& model, const corpus::Dialogue& dialogue,
                             const GenerationConfig& generation, Ablation ablation = Ablation::None);

// Vocabulary from the corpus, classifier trained unless gold components are
// used, then a freshly initialized summarizer.
PieceModel build_model(const corpus::Corpus& corpus, const PieceConfig& config, knowledge::Lexicon lexicon,
                       classifier::ClassificationReport* report = nullptr);

// Mean batch loss per epoch. Trains on the Train split (all dialogues without a
// split), skipping dialogues without a gold summary; throws DataError when none
// has one. The classifier is frozen.
std::vector<double> train_end_to_end(PieceModel& model, const corpus::Corpus& corpus);

// Tensors via the numerics archive at `path`; config, vocabulary and lexicon in
// the JSON manifest at manifest_path(path).
std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);
void save_model(const std::filesystem::path& path, PieceModel& model);
PieceModel load_model(const std::filesystem::path& path);

struct BlockAttention {
  double knowledge_entropy = 0.0;  // mean over query rows, nats; 0 when nothing is kept
  double structure_entropy = 0.0;
};

struct PlanInspection {
  PreparedDialogue prepared;
  sheaf::SpectralRange spectrum;
  std::vector<double> knowledge_norms;  // R_k rows
  std::vector<double> structure_norms;  // R_s rows
  std::vector<BlockAttention> attention;
  std::string summary;
};

// Runs the generated summary back through the decoder to read each block's
// rotating-attention weights.
PlanInspection inspect_plan(const PieceModel& model, const corpus::Dialogue& dialogue,
                            const GenerationConfig& generation);

}  // namespace piece::planner
