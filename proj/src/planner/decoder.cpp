#include "piece/planner/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "piece/error.hpp"

namespace piece::planner {

using corpus::TokenId;
using corpus::Vocabulary;
using num::Tape;
using num::Tensor;
using num::Var;

void DecoderBlock::collect(const std::string& prefix, num::NamedParams& out, bool planner) {
  norm_self.collect(prefix + "norm_self.", out);
  out.emplace_back(prefix + "self_query", &self_query);
  out.emplace_back(prefix + "self_key", &self_key);
  out.emplace_back(prefix + "self_value", &self_value);
  out.emplace_back(prefix + "self_out", &self_out);
  if (planner) norm_plan.collect(prefix + "norm_plan.", out);
  norm_ff.collect(prefix + "norm_ff.", out);
  ff_in.collect(prefix + "ff_in.", out);
  ff_out.collect(prefix + "ff_out.", out);
}

PlanContext PlanMemory::bind(Tape& tape) const {
  return PlanContext{tape.constant(r_k), tape.constant(r_s), keep, ablation};
}

DecoderLM DecoderLM::init(const num::Initializer& init, const DecoderConfig& c, const EngineDims& engine_dims) {
  if (c.vocab <= Vocabulary::kReserved || c.width == 0 || c.blocks == 0 || c.ff_width == 0 || c.max_len == 0) {
    throw UsageError("decoder: dimensions must be positive and the vocabulary non-trivial");
  }
  EngineDims dims = engine_dims;
  dims.width = c.width;
  DecoderLM lm;
  lm.config = c;
  const std::size_t w = c.width;
  lm.token_embedding = init.uniform("dec.token_embedding", {c.vocab, w}, 1);
  lm.position_embedding = init.uniform("dec.position_embedding", {c.max_len + 1, w}, 1);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string name = "dec.block" + std::to_string(b);
    lm.blocks.push_back(DecoderBlock{num::LayerNormParams::init(w),
                                     init.uniform(name + ".self_query", {w, w}, w),
                                     init.uniform(name + ".self_key", {w, w}, w),
                                     init.uniform(name + ".self_value", {w, w}, w),
                                     init.uniform(name + ".self_out", {w, w}, w),
                                     num::LayerNormParams::init(w),
                                     PlanningEngine::init(init, "plan.block" + std::to_string(b), dims),
                                     num::LayerNormParams::init(w),
                                     num::Dense::init(init, name + ".ff_in", w, c.ff_width),
                                     num::Dense::init(init, name + ".ff_out", c.ff_width, w)});
  }
  lm.norm_final = num::LayerNormParams::init(w);
  lm.head_weight = init.uniform("dec.head_weight", {w, c.vocab}, w);
  lm.head_bias = Tensor::zeros({1, c.vocab});
  return lm;
}

void DecoderLM::collect(num::NamedParams& out) {
  out.emplace_back("dec.token_embedding", &token_embedding);
  out.emplace_back("dec.position_embedding", &position_embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].collect("dec.block" + std::to_string(b) + ".", out, config.planner);
    if (config.planner) blocks[b].engine.collect("plan.block" + std::to_string(b) + ".", out);
  }
  norm_final.collect("dec.norm_final.", out);
  if (!config.tied_head) out.emplace_back("dec.head_weight", &head_weight);
  out.emplace_back("dec.head_bias", &head_bias);
}

Var DecoderLM::logits(Tape& tape, const std::vector<TokenId>& tokens, const PlanContext* context,
                      std::vector<Var>* plan_queries) const {
  if (tokens.empty()) throw ShapeError("decoder: empty prefix");
  if (tokens.size() > capacity()) {
    throw ShapeError("decoder: prefix of " + std::to_string(tokens.size()) + " exceeds positional capacity " +
                     std::to_string(capacity()));
  }
  std::vector<std::size_t> ids, positions;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config.vocab) throw ShapeError("decoder: token id");
    ids.push_back(static_cast<std::size_t>(tokens[i]));
    positions.push_back(i);
  }
  Var embed = tape.param(token_embedding);
  Var h = num::add(num::gather_rows(embed, ids), num::gather_rows(tape.param(position_embedding), positions));
  for (const DecoderBlock& b : blocks) {
    Var x = b.norm_self.forward(h);
    num::AttentionResult self = num::causal_attention(
        num::matmul(x, tape.param(b.self_query)), num::matmul(x, tape.param(b.self_key)),
        num::matmul(x, tape.param(b.self_value)));
    h = num::add(h, num::matmul(self.output, tape.param(b.self_out)));
    if (config.planner && context) {
      Var p = b.norm_plan.forward(h);
      if (plan_queries) plan_queries->push_back(p);
      h = num::add(h, plan_memory(b.engine, p, context->r_k, context->r_s, context->keep, context->ablation));
    }
    Var f = b.norm_ff.forward(h);
    h = num::add(h, b.ff_out.forward(num::relu(b.ff_in.forward(f))));
  }
  Var out = norm_final.forward(h);
  Var weights = config.tied_head ? num::transpose(embed) : tape.param(head_weight);
  return num::add_row(num::matmul(out, weights), tape.param(head_bias));
}

std::vector<double> decode_step(const DecoderLM& lm, const std::vector<TokenId>& prefix, const PlanMemory* memory) {
  Tape tape;
  PlanContext bound;
  if (memory) bound = memory->bind(tape);
  Var logits = lm.logits(tape, prefix, memory ? &bound : nullptr);
  const std::size_t v = logits.cols(), last = logits.rows() - 1;
  return num::softmax(logits.value().data().subspan(last * v, v));
}

Var teacher_forced_loss(Tape& tape, const DecoderLM& lm, const std::vector<TokenId>& summary,
                        const PlanContext* context) {
  const std::size_t len = std::min(summary.size(), lm.config.max_len);
  std::vector<TokenId> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), summary.begin(), summary.begin() + static_cast<std::ptrdiff_t>(len));
  std::vector<TokenId> targets(inputs.begin() + 1, inputs.end());
  targets.push_back(Vocabulary::kEos);
  return num::cross_entropy_logits(lm.logits(tape, inputs, context), targets, Vocabulary::kPad);
}

void validate_generation(const GenerationConfig& c, const DecoderLM& lm) {
  if (c.beam_width == 0) throw UsageError("beam width must be at least 1");
  if (c.max_length == 0) throw UsageError("max length must be at least 1");
  if (c.max_length > lm.config.max_len) {
    throw UsageError("max length " + std::to_string(c.max_length) + " exceeds the model's " +
                     std::to_string(lm.config.max_len));
  }
  if (!(c.length_penalty >= 0.0)) throw UsageError("length penalty must be non-negative");
}

namespace {

TokenId argmax_lowest(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return static_cast<TokenId>(best);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

struct Hypothesis {
  std::vector<TokenId> tokens;  // excludes BOS; includes EOS while being scored
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / length^penalty over the scored tokens
};

double length_normalized(double log_prob, std::size_t length, double penalty) {
  if (penalty == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(std::max<std::size_t>(1, length)), penalty);
}

}  // namespace

std::vector<TokenId> greedy_decode(const StepFn& step, std::size_t max_length) {
  std::vector<TokenId> prefix{Vocabulary::kBos};
  while (prefix.size() - 1 < max_length) {
    const TokenId next = argmax_lowest(step(prefix));
    if (next == Vocabulary::kEos) break;
    prefix.push_back(next);
  }
  return {prefix.begin() + 1, prefix.end()};
}

std::vector<TokenId> beam_decode(const StepFn& step, std::size_t width, std::size_t max_length, double penalty) {
  if (width == 0) throw UsageError("beam width must be at least 1");
  struct Candidate {
    Hypothesis hyp;
    double step_prob;
  };
  std::vector<Hypothesis> alive{Hypothesis{}}, finished;
  for (std::size_t t = 0; t < max_length && !alive.empty() && finished.size() < width; ++t) {
    std::vector<Candidate> cands;
    for (const Hypothesis& parent : alive) {
      std::vector<TokenId> prefix{Vocabulary::kBos};
      prefix.insert(prefix.end(), parent.tokens.begin(), parent.tokens.end());
      const std::vector<double> p = step(prefix);
      for (std::size_t v = 0; v < p.size(); ++v) {
        Hypothesis h = parent;
        h.tokens.push_back(static_cast<TokenId>(v));
        h.log_prob += safe_log(p[v]);
        h.score = length_normalized(h.log_prob, h.tokens.size(), penalty);
        cands.push_back({std::move(h), p[v]});
      }
    }
    // Equal scores keep beam-major, token-ascending order; the step probability
    // breaks ties that log() merged, so width 1 follows the exact argmax.
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.hyp.score != b.hyp.score) return a.hyp.score > b.hyp.score;
      return a.step_prob > b.step_prob;
    });
    alive.clear();
    for (std::size_t k = 0; k < cands.size() && k < width; ++k) {
      Hypothesis& h = cands[k].hyp;
      if (h.tokens.back() == Vocabulary::kEos) {
        h.tokens.pop_back();
        finished.push_back(std::move(h));
      } else {
        alive.push_back(std::move(h));
      }
    }
  }
  // Unfinished hypotheses compete only once they reached the length limit.
  std::vector<Hypothesis> pool = finished;
  for (const Hypothesis& h : alive)
    if (finished.empty() || h.tokens.size() == max_length) pool.push_back(h);
  if (pool.empty()) return {};
  const Hypothesis* best = &pool.front();
  for (const Hypothesis& h : pool)
    if (h.score > best->score) best = &h;
  return best->tokens;
}

}  // namespace piece::planner
