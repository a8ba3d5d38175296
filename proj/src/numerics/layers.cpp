#include "piece/numerics/layers.hpp"

#include <cmath>

#include "piece/error.hpp"

namespace piece::num {

Tensor Initializer::uniform(const std::string& name, Shape shape, std::size_t fan_in) const {
  Rng rng(Rng::derive(seed_, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(data));
}

Dense Dense::init(const Initializer& init, const std::string& name, std::size_t in, std::size_t out) {
  return Dense{init.uniform(name + ".weight", {in, out}, in), init.uniform(name + ".bias", {1, out}, in)};
}

Var Dense::forward(Var x) const {
  Tape& t = x.tape();
  return linear(x, t.param(weight), t.param(bias));
}

void Dense::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + "weight", &weight);
  out.emplace_back(prefix + "bias", &bias);
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return LayerNormParams{Tensor::filled({1, width}, 1.0), Tensor::zeros({1, width})};
}

Var LayerNormParams::forward(Var x) const {
  Tape& t = x.tape();
  return layer_norm(x, t.param(gain), t.param(bias));
}

void LayerNormParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + "gain", &gain);
  out.emplace_back(prefix + "bias", &bias);
}

GruParams GruParams::init(const Initializer& init, const std::string& name, std::size_t input, std::size_t hidden) {
  return GruParams{init.uniform(name + ".w_input", {input, 3 * hidden}, hidden),
                   init.uniform(name + ".w_hidden", {hidden, 3 * hidden}, hidden),
                   init.uniform(name + ".b_input", {1, 3 * hidden}, hidden),
                   init.uniform(name + ".b_hidden", {1, 3 * hidden}, hidden)};
}

void GruParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + "w_input", &w_input);
  out.emplace_back(prefix + "w_hidden", &w_hidden);
  out.emplace_back(prefix + "b_input", &b_input);
  out.emplace_back(prefix + "b_hidden", &b_hidden);
}

Var gru_cell(Var x, Var h, const GruParams& params) {
  const std::size_t hd = params.hidden();
  if (x.cols() != params.input() || x.rows() != h.rows() || h.cols() != hd) {
    throw ShapeError("gru_cell: input " + shape_string(x.value().shape()) + ", state " +
                     shape_string(h.value().shape()) + " do not match parameters");
  }
  Tape& t = x.tape();
  Var gi = linear(x, t.param(params.w_input), t.param(params.b_input));
  Var gh = linear(h, t.param(params.w_hidden), t.param(params.b_hidden));
  Var r = sigmoid(add(slice_cols(gi, 0, hd), slice_cols(gh, 0, hd)));
  Var z = sigmoid(add(slice_cols(gi, hd, hd), slice_cols(gh, hd, hd)));
  Var n = tanh(add(slice_cols(gi, 2 * hd, hd), mul(r, slice_cols(gh, 2 * hd, hd))));
  return add(mul(one_minus(z), n), mul(z, h));
}

LstmParams LstmParams::init(const Initializer& init, const std::string& name, std::size_t input, std::size_t hidden) {
  return LstmParams{init.uniform(name + ".w_input", {input, 4 * hidden}, hidden),
                    init.uniform(name + ".w_hidden", {hidden, 4 * hidden}, hidden),
                    init.uniform(name + ".bias", {1, 4 * hidden}, hidden)};
}

void LstmParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + "w_input", &w_input);
  out.emplace_back(prefix + "w_hidden", &w_hidden);
  out.emplace_back(prefix + "bias", &bias);
}

Var lstm(Var xs, const LstmParams& params) {
  const std::size_t hd = params.hidden();
  if (xs.cols() != params.input()) {
    throw ShapeError("lstm: input width " + std::to_string(xs.cols()) + " != " + std::to_string(params.input()));
  }
  Tape& t = xs.tape();
  // Input projections for all positions at once.
  Var gx = linear(xs, t.param(params.w_input), t.param(params.bias));
  Var wh = t.param(params.w_hidden);
  Var h = t.constant(Tensor::zeros({1, hd}));
  Var c = t.constant(Tensor::zeros({1, hd}));
  std::vector<Var> states;
  states.reserve(xs.rows());
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    Var g = add(slice_rows(gx, i, 1), matmul(h, wh));
    Var ig = sigmoid(slice_cols(g, 0, hd));
    Var fg = sigmoid(slice_cols(g, hd, hd));
    Var cg = tanh(slice_cols(g, 2 * hd, hd));
    Var og = sigmoid(slice_cols(g, 3 * hd, hd));
    c = add(mul(fg, c), mul(ig, cg));
    h = mul(og, tanh(c));
    states.push_back(h);
  }
  return concat_rows(states);
}

BiLstmParams BiLstmParams::init(const Initializer& init, const std::string& name, std::size_t input,
                                std::size_t hidden) {
  return BiLstmParams{LstmParams::init(init, name + ".fwd", input, hidden),
                      LstmParams::init(init, name + ".bwd", input, hidden)};
}

void BiLstmParams::collect(const std::string& prefix, NamedParams& out) {
  forward.collect(prefix + "fwd.", out);
  backward.collect(prefix + "bwd.", out);
}

Var bilstm(Var xs, const BiLstmParams& params) {
  if (xs.rows() == 0) throw ShapeError("bilstm: empty sequence");
  Var fwd = lstm(xs, params.forward);
  Var bwd = reverse_rows(lstm(reverse_rows(xs), params.backward));
  return concat_cols({fwd, bwd});
}

namespace {

void check_attention_shapes(Var q, Var k, Var v) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query and key widths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value row counts differ");
}

}  // namespace

AttentionResult scaled_dot_attention(Var q, Var k, Var v, const std::vector<bool>* mask) {
  check_attention_shapes(q, k, v);
  Var logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  Var weights;
  if (mask) {
    if (mask->size() != k.rows()) throw ShapeError("attention: mask length does not match keys");
    weights = masked_softmax_rows(logits, *mask);
  } else {
    weights = softmax_rows(logits);
  }
  return AttentionResult{matmul(weights, v), weights};
}

AttentionResult causal_attention(Var q, Var k, Var v) {
  check_attention_shapes(q, k, v);
  Var logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  Var weights = causal_softmax_rows(logits);
  return AttentionResult{matmul(weights, v), weights};
}

}  // namespace piece::num
