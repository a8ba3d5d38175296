#include "piece/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "piece/error.hpp"
#include "piece/numerics/eigen.hpp"

namespace piece::num {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

Tensor mat(std::size_t r, std::size_t c, std::vector<double> data) { return Tensor({r, c}, std::move(data)); }

Tensor as_matrix(const Tensor& t) { return t.rank() == 2 ? t : t.reshaped({t.rows(), t.cols()}); }

template <class F>
Var unary(Var x, F&& f, Tape::BackwardFn bw) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(mat(xv.rows(), xv.cols(), std::move(out)), {x}, std::move(bw));
}

// Shared softmax kernel: allowed(r, c) decides which logits participate.
template <class Allowed>
Tensor softmax_kernel(const Tensor& x, Allowed&& allowed) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (allowed(i, j)) mx = std::max(mx, x.at(i, j));
    if (!std::isfinite(mx)) throw std::domain_error("softmax: row has no admissible entries");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!allowed(i, j)) continue;
      const double e = std::exp(x.at(i, j) - mx);
      out[i * c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return mat(r, c, std::move(out));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tensor out = matmul_nn(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, const Tensor& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, matmul_nt(g, t.value(bi)));
    if (t.requires_grad(bi)) t.accumulate(bi, matmul_tn(t.value(ai), g));
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  Tensor out = matmul_nt(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, const Tensor& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, matmul_nn(g, t.value(bi)));
    if (t.requires_grad(bi)) t.accumulate(bi, matmul_tn(g, t.value(ai)));
  });
}

Var transpose(Var a) {
  return a.tape().record(transpose(a.value()), {a}, [ai = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ai, transpose(g));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record(mat(av.rows(), av.cols(), std::move(out)), {a, b},
                         [ai = a.id(), bi = b.id()](Tape& t, const Tensor& g) {
                           t.accumulate(ai, g);
                           t.accumulate(bi, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record(mat(av.rows(), av.cols(), std::move(out)), {a, b},
                         [ai = a.id(), bi = b.id()](Tape& t, const Tensor& g) {
                           t.accumulate(ai, g);
                           if (t.requires_grad(bi)) {
                             Tensor& buf = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) buf[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record(mat(av.rows(), av.cols(), std::move(out)), {a, b},
                         [ai = a.id(), bi = b.id()](Tape& t, const Tensor& g) {
                           const Tensor& av = t.value(ai);
                           const Tensor& bv = t.value(bi);
                           if (t.requires_grad(ai)) {
                             Tensor& buf = t.grad_buffer(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * bv[i];
                           }
                           if (t.requires_grad(bi)) {
                             Tensor& buf = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * av[i];
                           }
                         });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.tape().record(mat(av.rows(), av.cols(), std::move(out)), {a},
                         [ai = a.id(), factor](Tape& t, const Tensor& g) {
                           Tensor& buf = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * factor;
                         });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row, "add_row");
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_row: " + shape_string(xv.shape()) + " + " + shape_string(rv.shape()));
  }
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + rv[j];
  return x.tape().record(mat(r, c, std::move(out)), {x, row},
                         [xi = x.id(), ri = row.id(), r, c](Tape& t, const Tensor& g) {
                           t.accumulate(xi, g);
                           if (t.requires_grad(ri)) {
                             Tensor& buf = t.grad_buffer(ri);
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j];
                           }
                         });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [xi = x.id()](Tape& t, const Tensor& g) {
                 const Tensor& xv = t.value(xi);
                 Tensor& buf = t.grad_buffer(xi);
                 for (std::size_t i = 0; i < g.size(); ++i)
                   if (xv[i] > 0.0) buf[i] += g[i];
               });
}

Var sigmoid(Var x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  Tensor y = mat(xv.rows(), xv.cols(), std::move(out));
  Tensor ycopy = y;
  return x.tape().record(std::move(y), {x}, [xi = x.id(), y = std::move(ycopy)](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  Tensor y = mat(xv.rows(), xv.cols(), std::move(out));
  Tensor ycopy = y;
  return x.tape().record(std::move(y), {x}, [xi = x.id(), y = std::move(ycopy)](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var activation(Var x, Activation kind) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  throw std::logic_error("unknown activation");
}

Var one_minus(Var x) {
  return unary(x, [](double v) { return 1.0 - v; },
               [xi = x.id()](Tape& t, const Tensor& g) {
                 Tensor& buf = t.grad_buffer(xi);
                 for (std::size_t i = 0; i < g.size(); ++i) buf[i] -= g[i];
               });
}

namespace {

Var softmax_node(Var x, Tensor y) {
  Tensor ycopy = y;
  return x.tape().record(std::move(y), {x}, [xi = x.id(), y = std::move(ycopy)](Tape& t, const Tensor& g) {
    const std::size_t r = y.rows(), c = y.cols();
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

}  // namespace

Var softmax_rows(Var x) {
  return softmax_node(x, softmax_kernel(x.value(), [](std::size_t, std::size_t) { return true; }));
}

Var masked_softmax_rows(Var x, const std::vector<bool>& allowed) {
  if (allowed.size() != x.cols()) throw ShapeError("masked_softmax_rows: mask length does not match columns");
  if (std::none_of(allowed.begin(), allowed.end(), [](bool b) { return b; })) {
    throw std::domain_error("masked softmax: empty attention support");
  }
  return softmax_node(x, softmax_kernel(x.value(), [&](std::size_t, std::size_t j) { return allowed[j]; }));
}

Var causal_softmax_rows(Var x) {
  const std::size_t r = x.rows(), c = x.cols();
  if (c < r) throw ShapeError("causal_softmax_rows: fewer keys than queries");
  const std::size_t offset = c - r;
  return softmax_node(x, softmax_kernel(x.value(), [offset](std::size_t i, std::size_t j) { return j <= i + offset; }));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    c += p.cols();
  }
  std::vector<double> out(r * c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t pc = v.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * c + off + j] = v[i * pc + j];
    offsets.push_back(off);
    off += pc;
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(mat(r, c, std::move(out)), parts,
                                [ids, offsets, r, c](Tape& t, const Tensor& g) {
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (!t.requires_grad(ids[k])) continue;
                                    Tensor& buf = t.grad_buffer(ids[k]);
                                    const std::size_t pc = buf.cols();
                                    for (std::size_t i = 0; i < r; ++i)
                                      for (std::size_t j = 0; j < pc; ++j) buf[i * pc + j] += g[i * c + offsets[k] + j];
                                  }
                                });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(r * c);
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    const auto d = p.value().data();
    out.insert(out.end(), d.begin(), d.end());
    ids.push_back(p.id());
  }
  return parts[0].tape().record(mat(r, c, std::move(out)), parts, [ids](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& buf = t.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) buf[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || begin + count > xv.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = xv.cols();
  std::vector<double> out(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          xv.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return x.tape().record(mat(count, c, std::move(out)), {x}, [xi = x.id(), begin, c](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) buf[begin * c + i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || begin + count > xv.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * c + begin + j];
  return x.tape().record(mat(r, count, std::move(out)), {x},
                         [xi = x.id(), begin, count, r, c](Tape& t, const Tensor& g) {
                           Tensor& buf = t.grad_buffer(xi);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < count; ++j) buf[i * c + begin + j] += g[i * count + j];
                         });
}

Var gather_rows(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& tv = table.value();
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  const std::size_t c = tv.cols();
  std::vector<double> out(ids.size() * c);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= tv.rows()) throw ShapeError("gather_rows: id out of range");
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(ids[k] * c), c, out.begin() + static_cast<std::ptrdiff_t>(k * c));
  }
  return table.tape().record(mat(ids.size(), c, std::move(out)), {table}, [ti = table.id(), ids, c](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(ti);
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) buf[ids[k] * c + j] += g[k * c + j];
  });
}

Var reverse_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[(r - 1 - i) * c + j] = xv[i * c + j];
  return x.tape().record(mat(r, c, std::move(out)), {x}, [xi = x.id(), r, c](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += g[(r - 1 - i) * c + j];
  });
}

Var repeat_rows(Var x, std::size_t times) {
  if (times == 0) throw ShapeError("repeat_rows: zero repetitions");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(r * times * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t j = 0; j < c; ++j) out[(i * times + k) * c + j] = xv[i * c + j];
  return x.tape().record(mat(r * times, c, std::move(out)), {x}, [xi = x.id(), r, c, times](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += g[(i * times + k) * c + j];
  });
}

Var broadcast_rows(Var row, std::size_t n) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
  return repeat_rows(row, n);
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tensor y = as_matrix(x.value()).reshaped({rows, cols});
  return x.tape().record(std::move(y), {x}, [xi = x.id()](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [xi = x.id()](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    const double gv = g[0];
    for (double& v : buf.data()) v += gv;
  });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
  for (double& v : out) v /= static_cast<double>(r);
  return x.tape().record(mat(1, c, std::move(out)), {x}, [xi = x.id(), r, c](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += g[j] * inv;
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  const Tensor& xv = x.value();
  if (weights.size() != xv.size()) throw ShapeError("weighted_sum: weight size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  return x.tape().record(Tensor::scalar(s), {x}, [xi = x.id(), w = weights](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(xi);
    for (std::size_t i = 0; i < w.size(); ++i) buf[i] += g[0] * w[i];
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gamma.cols() != c || beta.cols() != c || gamma.rows() != 1 || beta.rows() != 1) {
    throw ShapeError("layer_norm: gain/bias width mismatch");
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  std::vector<double> xhat(r * c), inv_std(r), out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xv[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return x.tape().record(
      mat(r, c, std::move(out)), {x, gamma, beta},
      [xi = x.id(), gi = gamma.id(), bi = beta.id(), xhat = std::move(xhat), inv_std = std::move(inv_std), r,
       c](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(gi);
        if (t.requires_grad(gi)) {
          Tensor& buf = t.grad_buffer(gi);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j] * xhat[i * c + j];
        }
        if (t.requires_grad(bi)) {
          Tensor& buf = t.grad_buffer(bi);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j];
        }
        if (t.requires_grad(xi)) {
          Tensor& buf = t.grad_buffer(xi);
          const double n = static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = g[i * c + j] * gv[j];
              s1 += dh;
              s2 += dh * xhat[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = g[i * c + j] * gv[j];
              buf[i * c + j] += inv_std[i] * (dh - s1 / n - xhat[i * c + j] * s2 / n);
            }
          }
        }
      });
}

Var kron_identity(Var w, std::size_t blocks) {
  if (blocks == 0) throw ShapeError("kron_identity: zero blocks");
  const Tensor& wv = w.value();
  const std::size_t br = wv.rows(), bc = wv.cols();
  const std::size_t r = br * blocks, c = bc * blocks;
  std::vector<double> out(r * c, 0.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < br; ++i)
      for (std::size_t j = 0; j < bc; ++j) out[(b * br + i) * c + b * bc + j] = wv[i * bc + j];
  return w.tape().record(mat(r, c, std::move(out)), {w}, [wi = w.id(), blocks, br, bc, c](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(wi);
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t i = 0; i < br; ++i)
        for (std::size_t j = 0; j < bc; ++j) buf[i * bc + j] += g[(b * br + i) * c + b * bc + j];
  });
}

Var diag_from_row(Var v) {
  const Tensor& vv = v.value();
  if (vv.rows() != 1) throw ShapeError("diag_from_row: expected a single row");
  const std::size_t d = vv.cols();
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) out[i * d + i] = vv[i];
  return v.tape().record(mat(d, d, std::move(out)), {v}, [vi = v.id(), d](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(vi);
    for (std::size_t i = 0; i < d; ++i) buf[i] += g[i * d + i];
  });
}

Var assemble_blocks(std::size_t rows, std::size_t cols, const std::vector<Block>& blocks) {
  if (blocks.empty() || rows == 0 || cols == 0) throw ShapeError("assemble_blocks: empty grid");
  const std::size_t br = blocks[0].value.rows(), bc = blocks[0].value.cols();
  const std::size_t width = cols * bc;
  std::vector<double> out(rows * br * width, 0.0);
  std::vector<Var> parents;
  parents.reserve(blocks.size());
  for (const Block& b : blocks) {
    if (b.value.rows() != br || b.value.cols() != bc) throw ShapeError("assemble_blocks: block shapes differ");
    if (b.row >= rows || b.col >= cols) throw ShapeError("assemble_blocks: block outside grid");
    const Tensor& v = b.value.value();
    for (std::size_t i = 0; i < br; ++i)
      for (std::size_t j = 0; j < bc; ++j) out[(b.row * br + i) * width + b.col * bc + j] += b.sign * v[i * bc + j];
    parents.push_back(b.value);
  }
  struct Placement {
    std::size_t id, row, col;
    double sign;
  };
  std::vector<Placement> placed;
  for (const Block& b : blocks) placed.push_back({b.value.id(), b.row, b.col, b.sign});
  return blocks[0].value.tape().record(
      mat(rows * br, width, std::move(out)), parents, [placed, br, bc, width](Tape& t, const Tensor& g) {
        for (const Placement& p : placed) {
          if (!t.requires_grad(p.id)) continue;
          Tensor& buf = t.grad_buffer(p.id);
          for (std::size_t i = 0; i < br; ++i)
            for (std::size_t j = 0; j < bc; ++j) buf[i * bc + j] += p.sign * g[(p.row * br + i) * width + p.col * bc + j];
        }
      });
}

Var psd_inverse_sqrt(Var m, double tol) {
  const Tensor& mv = m.value();
  if (mv.rows() != mv.cols()) throw ShapeError("psd_inverse_sqrt: matrix is not square");
  const std::size_t d = mv.rows();
  const SymmetricEigen eig = symmetric_eigen(mv);
  const double cutoff = tol * std::max(1.0, eig.values.back());
  std::vector<double> f(d), df(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double lam = eig.values[k];
    f[k] = lam > cutoff ? 1.0 / std::sqrt(lam) : 0.0;
    df[k] = lam > cutoff ? -0.5 / (lam * std::sqrt(lam)) : 0.0;
  }
  const Tensor& q = eig.vectors;
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += q[i * d + k] * f[k] * q[j * d + k];
      out[i * d + j] = acc;
    }
  // Divided differences of f over the spectrum.
  std::vector<double> gamma(d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const double gap = eig.values[a] - eig.values[b];
      const double scale = std::max({1.0, std::abs(eig.values[a]), std::abs(eig.values[b])});
      gamma[a * d + b] = std::abs(gap) > 1e-10 * scale ? (f[a] - f[b]) / gap : 0.5 * (df[a] + df[b]);
    }
  return m.tape().record(mat(d, d, std::move(out)), {m}, [mi = m.id(), q, gamma, d](Tape& t, const Tensor& g) {
    // dM = Q (Gamma .* (Q^T G Q)) Q^T
    const Tensor inner = matmul_tn(q, matmul_nn(g, q));
    Tensor scaled = inner;
    for (std::size_t i = 0; i < d * d; ++i) scaled[i] *= gamma[i];
    const Tensor back = matmul_nt(matmul_nn(q, scaled), q);
    Tensor& buf = t.grad_buffer(mi);
    for (std::size_t i = 0; i < d * d; ++i) buf[i] += back[i];
  });
}

namespace {

std::size_t count_targets(const std::vector<std::int64_t>& targets, std::int64_t pad_id, std::size_t rows,
                          std::size_t vocab) {
  if (targets.size() != rows) throw ShapeError("cross_entropy: target count does not match rows");
  std::size_t n = 0;
  for (auto tgt : targets) {
    if (tgt == pad_id) continue;
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= vocab) throw ShapeError("cross_entropy: target id out of range");
    ++n;
  }
  if (n == 0) throw std::domain_error("cross_entropy: no non-pad targets");
  return n;
}

}  // namespace

Var cross_entropy(Var probs, const std::vector<std::int64_t>& targets, std::int64_t pad_id) {
  const Tensor& pv = probs.value();
  const std::size_t r = pv.rows(), c = pv.cols();
  const std::size_t n = count_targets(targets, pad_id, r, c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] == pad_id) continue;
    const double p = pv[i * c + static_cast<std::size_t>(targets[i])];
    if (!(p > 0.0)) throw std::domain_error("cross_entropy: zero probability on target");
    loss -= std::log(p);
  }
  loss /= static_cast<double>(n);
  return probs.tape().record(Tensor::scalar(loss), {probs},
                             [pi = probs.id(), targets, pad_id, n, c](Tape& t, const Tensor& g) {
                               const Tensor& pv = t.value(pi);
                               Tensor& buf = t.grad_buffer(pi);
                               for (std::size_t i = 0; i < targets.size(); ++i) {
                                 if (targets[i] == pad_id) continue;
                                 const std::size_t k = i * c + static_cast<std::size_t>(targets[i]);
                                 buf[k] -= g[0] / (static_cast<double>(n) * pv[k]);
                               }
                             });
}

Var cross_entropy_logits(Var logits, const std::vector<std::int64_t>& targets, std::int64_t pad_id) {
  const Tensor& lv = logits.value();
  const std::size_t r = lv.rows(), c = lv.cols();
  const std::size_t n = count_targets(targets, pad_id, r, c);
  Tensor probs = softmax_kernel(lv, [](std::size_t, std::size_t) { return true; });
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] == pad_id) continue;
    double mx = lv[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv[i * c + j] - mx);
    loss -= lv[i * c + static_cast<std::size_t>(targets[i])] - mx - std::log(z);
  }
  loss /= static_cast<double>(n);
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [li = logits.id(), probs = std::move(probs), targets, pad_id, n, c](Tape& t,
                                                                                                  const Tensor& g) {
                                Tensor& buf = t.grad_buffer(li);
                                const double s = g[0] / static_cast<double>(n);
                                for (std::size_t i = 0; i < targets.size(); ++i) {
                                  if (targets[i] == pad_id) continue;
                                  for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += s * probs[i * c + j];
                                  buf[i * c + static_cast<std::size_t>(targets[i])] -= s;
                                }
                              });
}

std::vector<double> softmax(std::span<const double> logits) {
  Tensor row = Tensor::row(logits);
  Tensor y = softmax_kernel(row, [](std::size_t, std::size_t) { return true; });
  return y.values();
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis == 1) return softmax_kernel(as_matrix(x), [](std::size_t, std::size_t) { return true; });
  if (axis == 0) return transpose(softmax_kernel(transpose(x), [](std::size_t, std::size_t) { return true; }));
  throw ShapeError("softmax: axis must be 0 or 1");
}

}  // namespace piece::num
