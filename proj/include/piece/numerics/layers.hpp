#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "piece/numerics/ops.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::num {

// Parameter tensors of a model, in a fixed enumeration order.
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Deterministic initialization: each parameter draws from its own stream
// derived from (seed, name), uniform in +-1/sqrt(fan_in).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}
  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in) const;
  Tensor constant(Shape shape, double value) const { return Tensor::filled(std::move(shape), value); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static Dense init(const Initializer& init, const std::string& name, std::size_t in, std::size_t out);
  Var forward(Var x) const;
  void collect(const std::string& prefix, NamedParams& out);
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

struct LayerNormParams {
  Tensor gain;  // 1 x d
  Tensor bias;  // 1 x d

  static LayerNormParams init(std::size_t width);
  Var forward(Var x) const;
  void collect(const std::string& prefix, NamedParams& out);
};

// Gate blocks are laid out [reset | update | candidate] along the columns.
struct GruParams {
  Tensor w_input;   // d_in x 3h
  Tensor w_hidden;  // h x 3h
  Tensor b_input;   // 1 x 3h
  Tensor b_hidden;  // 1 x 3h

  static GruParams init(const Initializer& init, const std::string& name, std::size_t input, std::size_t hidden);
  std::size_t input() const { return w_input.rows(); }
  std::size_t hidden() const { return w_hidden.rows(); }
  void collect(const std::string& prefix, NamedParams& out);
};

// h' = (1 - z) * n + z * h with r, z = sigmoid(...), n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
Var gru_cell(Var x, Var h, const GruParams& params);

// Gate blocks are laid out [input | forget | cell | output].
struct LstmParams {
  Tensor w_input;   // d_in x 4h
  Tensor w_hidden;  // h x 4h
  Tensor bias;      // 1 x 4h

  static LstmParams init(const Initializer& init, const std::string& name, std::size_t input, std::size_t hidden);
  std::size_t input() const { return w_input.rows(); }
  std::size_t hidden() const { return w_hidden.rows(); }
  void collect(const std::string& prefix, NamedParams& out);
};

// Hidden states of a unidirectional LSTM over the rows of xs (n x d_in) -> n x h.
Var lstm(Var xs, const LstmParams& params);

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  static BiLstmParams init(const Initializer& init, const std::string& name, std::size_t input, std::size_t hidden);
  void collect(const std::string& prefix, NamedParams& out);
};

// n x 2h: forward state at i concatenated with the backward state at i.
Var bilstm(Var xs, const BiLstmParams& params);

struct AttentionResult {
  Var output;   // t x d_v
  Var weights;  // t x m
};

// softmax(q k^T / sqrt(d_k)) v. Keys with mask[j] == false get -inf logits.
AttentionResult scaled_dot_attention(Var q, Var k, Var v, const std::vector<bool>* mask = nullptr);
// Same with query i restricted to keys 0..i.
AttentionResult causal_attention(Var q, Var k, Var v);

}  // namespace piece::num
