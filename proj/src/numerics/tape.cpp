#include "piece/numerics/tape.hpp"

#include "piece/error.hpp"

namespace piece::num {

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Gradients::of(const Tensor& param) const {
  if (const Tensor* g = find(param)) return *g;
  return Tensor::zeros(param.shape());
}

const Tensor* Gradients::find(const Tensor& param) const {
  auto it = grads_.find(&param);
  return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::set(const Tensor& param, Tensor grad) {
  if (grad.size() != param.size()) throw ShapeError("gradient size does not match parameter");
  grads_.insert_or_assign(&param, std::move(grad));
}

void Gradients::add(const Gradients& other) {
  for (const auto& [key, g] : other.grads_) {
    auto it = grads_.find(key);
    if (it == grads_.end()) {
      grads_.emplace(key, g);
      continue;
    }
    auto dst = it->second.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Gradients::scale(double factor) {
  for (auto& [key, g] : grads_)
    for (double& v : g.data()) v *= factor;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const Tensor& parameter) {
  if (auto it = param_nodes_.find(&parameter); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = parameter;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&parameter, v.id());
  param_order_.emplace_back(&parameter, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw std::logic_error("Tape::record: parent recorded on another tape");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad = Tensor::zeros(n.value.shape());
  return *n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& buf = grad_buffer(id);
  if (buf.size() != g.size()) throw ShapeError("gradient accumulation shape mismatch");
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::logic_error("Tape::backward: loss recorded on another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(loss.value().shape()));
  }
  if (backward_done_) throw std::logic_error("Tape::backward may run only once");
  backward_done_ = true;

  if (nodes_[loss.id()].requires_grad) {
    grad_buffer(loss.id()) = Tensor::filled(loss.value().shape(), 1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.grad || !n.backward) continue;
      n.backward(*this, *n.grad);
    }
  }

  Gradients out;
  for (const auto& [param, id] : param_order_) {
    const Node& n = nodes_[id];
    out.set(*param, n.grad ? *n.grad : Tensor::zeros(param->shape()));
  }
  return out;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad ? &*n.grad : nullptr;
}

}  // namespace piece::num
