#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>

#include "occlinker/common.hpp"

namespace occlinker {

class Tensor;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // sized lazily during a backward pass
  bool requires_grad = false;
  std::string op;  // producing op, "" for leaves
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this->grad and accumulates into parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), Real(0));
  }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

// Disables graph construction in scope (frozen/base inference, finite
// differences). Values are still computed.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_mode_enabled() { return detail::grad_enabled; }

// Dense row-major tensor of Real values; a cheap handle onto a graph node.
// Values are immutable once produced by an op; only leaves may be mutated
// (parameter updates, finite-difference probes).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<Real> data, const std::string& ctx = "from_data") {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(data);
    t.check_finite(ctx);
    return t;
  }

  static Tensor full(Shape shape, Real v) {
    const size_t n = static_cast<size_t>(shape_numel(shape));
    return from_data(std::move(shape), std::vector<Real>(n, v), "full");
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), Real(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), Real(1)); }
  static Tensor scalar(Real v) { return from_data({1}, {v}, "scalar"); }

  static Tensor rand_uniform(Shape shape, Rng& rng, Real lo, Real hi) {
    std::vector<Real> d(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : d) x = static_cast<Real>(rng.uniform(lo, hi));
    return from_data(std::move(shape), std::move(d), "rand_uniform");
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t dim(int64_t i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }

  const std::vector<Real>& data() const { return node_->values; }

  // Leaf-only mutation (optimizer steps, grad_check probes).
  std::vector<Real>& mutable_data() {
    if (!node_->parents.empty())
      throw TensorError("mutable_data: tensor produced by op '" + node_->op + "' is immutable");
    return node_->values;
  }

  Real item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->values[0];
  }

  Real at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int64_t>(idx.size()) != rank())
      throw ShapeError("at: index rank mismatch");
    int64_t off = 0;
    int64_t i = 0;
    for (int64_t v : idx) {
      off = off * node_->shape[static_cast<size_t>(i)] + v;
      ++i;
    }
    return node_->values[static_cast<size_t>(off)];
  }

  Tensor& set_requires_grad(bool rg) {
    if (rg && !node_->parents.empty())
      throw TensorError("set_requires_grad: only leaves may be marked as inputs");
    node_->requires_grad = rg;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return node_ && node_->grad.size() == node_->values.size(); }
  const std::vector<Real>& grad() const {
    if (!has_grad()) throw TensorError("grad: no gradient present");
    return node_->grad;
  }
  void clear_grad() { node_->grad.clear(); }

  // Detached view onto the same value buffer (no parents, no grad).
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    return t;
  }

  // Reverse-mode pass from a scalar. Gradients of all reachable
  // grad-requiring nodes are reset, then accumulated in one
  // deterministic single-writer sweep.
  void backward() const {
    if (numel() != 1) throw ShapeError("backward: root must be scalar");
    std::vector<detail::TensorNode*> topo;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        detail::TensorNode* p = n->parents[i++].get();
        if ((p->requires_grad || !p->parents.empty()) && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(n);
        stack.pop_back();
      }
    }
    for (auto* n : topo) n->grad.assign(n->values.size(), Real(0));
    node_->grad[0] = Real(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      detail::TensorNode* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

  // Used by ops to build result nodes.
  static Tensor make_result(const std::string& op, Shape shape, std::vector<Real> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backward_fn) {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->op = op;
    bool need = false;
    if (detail::grad_enabled) {
      for (const auto& p : parents)
        if (p.node_->requires_grad || !p.node_->parents.empty()) need = true;
    }
    if (need) {
      t.node_->requires_grad = true;
      for (const auto& p : parents) t.node_->parents.push_back(p.node_);
      t.node_->backward_fn = std::move(backward_fn);
    }
    t.check_finite(op);
    return t;
  }

  void check_finite(const std::string& ctx) const {
    for (Real v : node_->values)
      if (!std::isfinite(v))
        throw ValueError("non-finite value produced by '" + ctx + "' on shape " + shape_str(node_->shape));
  }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {
// Accumulate into a parent's grad buffer only if it participates in the pass.
inline bool wants_grad(const std::shared_ptr<TensorNode>& p) {
  return p->requires_grad || !p->parents.empty();
}
}  // namespace detail

}  // namespace occlinker
