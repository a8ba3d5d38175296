#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "piece/numerics/tape.hpp"
#include "piece/numerics/tensor.hpp"

// Differentiable operations over matrices recorded on a Tape. All values are
// treated as rows x cols; vectors are 1 x d rows.
namespace piece::num {

enum class Activation { relu, sigmoid, tanh };

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double factor);
Var add_row(Var x, Var row);  // broadcast a 1 x c row over every row of x
Var linear(Var x, Var weight, Var bias);

Var activation(Var x, Activation kind);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
// 1 - x, elementwise.
Var one_minus(Var x);

// Row-wise softmax with max subtraction.
Var softmax_rows(Var x);
// Row-wise softmax restricted to columns where allowed[c] is true. Excluded
// columns behave as -inf logits and get exactly zero probability.
Var masked_softmax_rows(Var x, const std::vector<bool>& allowed);
// Row i sees columns 0..i + offset (offset = cols - rows for a query suffix).
Var causal_softmax_rows(Var x);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var gather_rows(Var table, const std::vector<std::size_t>& ids);
Var reverse_rows(Var x);
// Each row repeated `times` times consecutively: (r x c) -> (r*times x c).
Var repeat_rows(Var x, std::size_t times);
Var broadcast_rows(Var row, std::size_t n);
Var reshape(Var x, std::size_t rows, std::size_t cols);

Var sum(Var x);
Var mean_rows(Var x);  // (r x c) -> (1 x c)
// sum(x .* w) for a fixed weight tensor of the same size.
Var weighted_sum(Var x, const Tensor& weights);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Block-diagonal I_blocks (x) w.
Var kron_identity(Var w, std::size_t blocks);
// Square diagonal matrix from a 1 x d row.
Var diag_from_row(Var v);

struct Block {
  std::size_t row = 0;
  std::size_t col = 0;
  Var value;
  double sign = 1.0;
};
// Grid of rows x cols blocks, all shaped like blocks[0]. Listed blocks are
// added (times sign) into place; the rest is zero. At least one block.
Var assemble_blocks(std::size_t rows, std::size_t cols, const std::vector<Block>& blocks);

// Pseudo-inverse square root of a symmetric PSD matrix. Eigenvalues at or below
// tol * max(1, lambda_max) map to 0.
Var psd_inverse_sqrt(Var m, double tol = 1e-12);

// Mean of -log probs[t, targets[t]] over positions whose target is not pad_id.
Var cross_entropy(Var probs, const std::vector<std::int64_t>& targets, std::int64_t pad_id);
// Same loss computed from unnormalized logits through a log-softmax.
Var cross_entropy_logits(Var logits, const std::vector<std::int64_t>& targets, std::int64_t pad_id);

// Non-recorded softmax of a single row, used by decoding.
std::vector<double> softmax(std::span<const double> logits);
// Row-wise softmax on a plain tensor along axis 1 (rows) or axis 0 (columns).
Tensor softmax(const Tensor& x, int axis);

}  // namespace piece::num
