#pragma once

#include <cstddef>

#include "piece/numerics/layers.hpp"
#include "piece/numerics/tape.hpp"

namespace piece::num {

// Step-decay schedule: lr = initial * decay^epoch, held fixed within an epoch.
class OptimizerState {
 public:
  explicit OptimizerState(double initial_lr = 1e-3, double decay = 0.1);

  double learning_rate() const { return learning_rate_; }
  double initial_learning_rate() const { return initial_; }
  double decay_factor() const { return decay_; }
  std::size_t epoch() const { return epoch_; }
  void advance_epoch();

 private:
  double initial_;
  double decay_;
  std::size_t epoch_ = 0;
  double learning_rate_;
};

// Plain SGD: p <- p - lr * g for every parameter in `params`.
void sgd_step(const NamedParams& params, const Gradients& grads, const OptimizerState& state);

}  // namespace piece::num
