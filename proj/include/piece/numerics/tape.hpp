#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <unordered_map>
#include <vector>

#include "piece/numerics/tensor.hpp"

namespace piece::num {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients keyed by the address of the parameter tensor they belong to.
class Gradients {
 public:
  // Gradient for `param`, or zeros of the same shape when it never reached the loss.
  Tensor of(const Tensor& param) const;
  const Tensor* find(const Tensor& param) const;
  bool contains(const Tensor& param) const { return find(param) != nullptr; }
  std::size_t size() const { return grads_.size(); }

  void set(const Tensor& param, Tensor grad);
  // this += other, parameter by parameter.
  void add(const Gradients& other);
  void scale(double factor);

 private:
  std::unordered_map<const Tensor*, Tensor> grads_;
};

// Reverse-mode recording of a computation. Nodes are appended in evaluation
// order, which is a topological order; backward walks it in reverse once.
class Tape {
 public:
  // Called with the gradient flowing into the node; pushes contributions to parents.
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter tensor. Binding the same tensor twice returns the same leaf.
  Var param(const Tensor& parameter);
  // New node whose gradient is pushed to `parents` by `backward`. The closure is
  // dropped when no parent requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  // Gradient accumulator for node `id`, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);

  // Runs reverse accumulation from a 1x1 loss and returns parameter gradients.
  Gradients backward(Var loss);

  const Tensor* grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_nodes_;
  std::vector<std::pair<const Tensor*, std::size_t>> param_order_;
  bool backward_done_ = false;
};

}  // namespace piece::num
