#include "piece/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

#include "piece/error.hpp"

namespace piece::num {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1, 1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
  check_finite("Tensor");
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  validate_shape(shape);
  std::vector<double> data(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("matrix literal needs at least one row");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), c}, std::move(data));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  validate_shape(shape);
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::row_copy(std::size_t r) const {
  const std::size_t c = cols();
  return Tensor({1, c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                            data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

void Tensor::check_finite(const char* context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(context) + ": non-finite tensor value");
  }
}

Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * p;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = A[i * k + t];
      if (av == 0.0) continue;
      const double* brow = B + t * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += av * brow[j];
    }
  }
  return Tensor({m, p}, std::move(out));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), p = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * p, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += A[i * k + t] * B[j * k + t];
      out[i * p + j] = s;
    }
  }
  return Tensor({m, p}, std::move(out));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), p = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul_tn: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t t = 0; t < k; ++t) {
    const double* brow = B + t * p;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = A[t * m + i];
      if (av == 0.0) continue;
      double* o = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += av * brow[j];
    }
  }
  return Tensor({m, p}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
  return Tensor({c, r}, std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace piece::num
