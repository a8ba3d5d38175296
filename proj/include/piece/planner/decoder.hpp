#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "piece/corpus/vocab.hpp"
#include "piece/planner/engine.hpp"

namespace piece::planner {

struct DecoderConfig {
  std::size_t vocab = 0;
  std::size_t width = 128;
  std::size_t blocks = 2;
  std::size_t ff_width = 256;
  std::size_t max_len = 128;  // summary tokens; positions hold BOS plus max_len tokens
  bool tied_head = false;
  bool planner = true;        // false drops the cross-attention sublayers
};

// Pre-norm block: causal self-attention, planner cross-attention, feed-forward,
// each added to the residual stream.
struct DecoderBlock {
  num::LayerNormParams norm_self;
  num::Tensor self_query, self_key, self_value, self_out;  // width x width
  num::LayerNormParams norm_plan;
  PlanningEngine engine;
  num::LayerNormParams norm_ff;
  num::Dense ff_in;   // width -> ff
  num::Dense ff_out;  // ff -> width

  void collect(const std::string& prefix, num::NamedParams& out, bool planner);
};

// What the cross-attention sublayers read: aligned R_k / R_s rows and the keep mask.
struct PlanContext {
  num::Var r_k;
  num::Var r_s;
  std::vector<bool> keep;
  Ablation ablation = Ablation::None;
};

// Tape-independent copy of a PlanContext, for inference.
struct PlanMemory {
  num::Tensor r_k;
  num::Tensor r_s;
  std::vector<bool> keep;
  Ablation ablation = Ablation::None;

  PlanContext bind(num::Tape& tape) const;
};

struct DecoderLM {
  DecoderConfig config;
  num::Tensor token_embedding;     // vocab x width
  num::Tensor position_embedding;  // (max_len + 1) x width
  std::vector<DecoderBlock> blocks;
  num::LayerNormParams norm_final;
  num::Tensor head_weight;  // width x vocab, unused when tied
  num::Tensor head_bias;    // 1 x vocab

  static DecoderLM init(const num::Initializer& init, const DecoderConfig& config, const EngineDims& engine_dims);
  // Decoder parameters under "dec." and block engines under "plan.blockK.".
  void collect(num::NamedParams& out);

  std::size_t capacity() const { return position_embedding.rows(); }
  // Logits for every prefix position (len x vocab). Context is ignored when the
  // planner is disabled. `plan_queries` receives each block's planner query states.
  num::Var logits(num::Tape& tape, const std::vector<corpus::TokenId>& tokens, const PlanContext* context,
                  std::vector<num::Var>* plan_queries = nullptr) const;
};

// Next-token distribution after the last prefix token. Throws ShapeError when the
// prefix is empty or longer than the positional capacity.
std::vector<double> decode_step(const DecoderLM& lm, const std::vector<corpus::TokenId>& prefix,
                                const PlanMemory* memory);

// Teacher forcing: inputs BOS y_1..y_T, targets y_1..y_T EOS. Summaries longer
// than max_len are cut to max_len tokens.
num::Var teacher_forced_loss(num::Tape& tape, const DecoderLM& lm, const std::vector<corpus::TokenId>& summary,
                             const PlanContext* context);

struct GenerationConfig {
  enum class Mode { Greedy, Beam } mode = Mode::Greedy;
  std::size_t beam_width = 1;
  std::size_t max_length = 128;
  double length_penalty = 0.0;  // beam score = log p / length^penalty
};
void validate_generation(const GenerationConfig& config, const DecoderLM& lm);

// Source of next-token distributions for a prefix (BOS first).
using StepFn = std::function<std::vector<double>(const std::vector<corpus::TokenId>&)>;

// Argmax each step (lowest id on ties) until EOS or max_length tokens; BOS and EOS
// are not part of the result.
std::vector<corpus::TokenId> greedy_decode(const StepFn& step, std::size_t max_length);
// Beam search by accumulated log-probability; candidates ordered by score, then
// beam rank, then token id, so width 1 reproduces greedy_decode.
std::vector<corpus::TokenId> beam_decode(const StepFn& step, std::size_t width, std::size_t max_length,
                                         double length_penalty);

}  // namespace piece::planner
