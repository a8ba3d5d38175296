#include "piece/numerics/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace piece::num {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Tensor probe = x;
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw std::domain_error("finite_diff_grad: non-finite evaluation");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max(l2_norm(a), l2_norm(b));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss, const NamedParams& params, double h) {
  Gradients analytic;
  {
    Tape tape;
    // Bind every parameter so untouched ones report zero gradients.
    for (const auto& [name, p] : params) tape.param(*p);
    Var l = loss(tape);
    analytic = tape.backward(l);
  }
  GradCheckResult result;
  for (const auto& [name, p] : params) {
    Tensor* target = p;
    const Tensor saved = *target;
    auto f = [&](const Tensor& value) {
      *target = value;
      Tape tape;
      return loss(tape).value().item();
    };
    Tensor numeric = finite_diff_grad(f, saved, h);
    *target = saved;
    const double err = relative_error(analytic.of(*p), numeric);
    if (result.worst_param.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_param = name;
    }
  }
  return result;
}

}  // namespace piece::num
