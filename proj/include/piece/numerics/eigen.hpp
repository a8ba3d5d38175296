#pragma once

#include <vector>

#include "piece/numerics/tensor.hpp"

namespace piece::num {

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Tensor vectors;              // column k is the eigenvector of values[k]
};

// Cyclic Jacobi rotations on a symmetric matrix. Exact (no rotations) on
// diagonal input.
SymmetricEigen symmetric_eigen(const Tensor& a, double tol = 1e-15, int max_sweeps = 100);

}  // namespace piece::num
