#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "piece/classifier/classifier.hpp"
#include "piece/corpus/split.hpp"
#include "piece/sheaf/sheaf.hpp"

namespace piece::planner {

struct TrainingConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double decay = 0.1;  // per-epoch multiplier
};

// Everything that shapes a trained model. The classifier is seeded from `seed`;
// classifier.seed is not read.
struct PieceConfig {
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  std::size_t embed_dim = 32;        // contextual encoder, also the graph node features
  std::size_t static_dim = 64;
  std::size_t scaffold_hidden = 32;  // per direction; R_k has twice this many columns
  sheaf::SheafConfig sheaf;
  bool same_speaker_edges = false;
  std::size_t width = 128;
  std::size_t blocks = 2;
  std::size_t ff_width = 256;
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
  std::size_t max_len = 128;
  bool tied_head = false;
  double phq_threshold = 0.5;
  bool use_gold_components = false;
  classifier::ClassifierConfig classifier;
  TrainingConfig training;
  corpus::SplitRatios split;
};

// Throws UsageError on non-positive dims, a threshold outside [0, 1], a bad
// schedule or ratios that do not sum to 1.
void validate_config(const PieceConfig& config);

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Canonical key/value listing in a fixed key order; values round-trip exactly.
ConfigEntries config_entries(const PieceConfig& config);
// Throws UsageError on an unknown key or unparsable value.
void set_config_entry(PieceConfig& config, std::string_view key, std::string_view value);
PieceConfig config_from_entries(const ConfigEntries& entries);

// FNV-1a over the canonical "key=value\n" listing, as 16 hex digits.
std::string config_hash(const PieceConfig& config);

}  // namespace piece::planner
