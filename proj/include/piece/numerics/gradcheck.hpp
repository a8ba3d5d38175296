#pragma once

#include <functional>

#include "piece/numerics/layers.hpp"
#include "piece/numerics/tensor.hpp"

namespace piece::num {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
double relative_error(const Tensor& a, const Tensor& b);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
};

// Compares reverse-mode gradients of `loss` (which records a fresh tape per
// call) with central differences over every coordinate of every parameter.
GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss, const NamedParams& params, double h = 1e-5);

}  // namespace piece::num
