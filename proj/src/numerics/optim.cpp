#include "piece/numerics/optim.hpp"

#include <cmath>

#include "piece/error.hpp"

namespace piece::num {

OptimizerState::OptimizerState(double initial_lr, double decay)
    : initial_(initial_lr), decay_(decay), learning_rate_(initial_lr) {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw UsageError("learning rate must be positive");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw UsageError("decay factor must be positive");
}

void OptimizerState::advance_epoch() {
  ++epoch_;
  // Recomputed from the closed form so the schedule never drifts.
  learning_rate_ = initial_ * std::pow(decay_, static_cast<double>(epoch_));
}

void sgd_step(const NamedParams& params, const Gradients& grads, const OptimizerState& state) {
  const double lr = state.learning_rate();
  for (const auto& [name, p] : params) {
    const Tensor* g = grads.find(*p);
    if (!g) continue;
    if (g->size() != p->size()) throw ShapeError("sgd_step: gradient shape mismatch for " + name);
    auto pv = p->data();
    auto gv = g->data();
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= lr * gv[i];
    p->check_finite(name.c_str());
  }
}

}  // namespace piece::num
