#pragma once

// Reverse-mode gradient tape. Nodes are appended in evaluation order, which is
// already a topological order, so backward is a single reverse sweep.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "teu/nn/tensor.hpp"

namespace teu::nn {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
  bool requires_grad() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Var leaf(Tensor value, bool requires_grad = false) {
    nodes_.push_back({std::move(value), {}, {}, requires_grad, -1});
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Leaf bound to store entry `index`. Reusing a parameter returns the same
  /// node, so gradients from every use accumulate in one place.
  Var parameter(const ParameterStore& store, std::size_t index) {
    if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return {this, it->second};
    Var v = leaf(store.value(index), true);
    nodes_.back().param_index = static_cast<std::ptrdiff_t>(index);
    param_nodes_.emplace(index, v.id);
    return v;
  }

  /// Appends an op result. The backward rule is kept only if some parent
  /// needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    for (const Var& p : parents) {
      if (p.tape != this) throw std::logic_error("Tape: mixing variables from different tapes");
      needs = needs || nodes_[p.id].requires_grad;
    }
    nodes_.push_back({std::move(value), {}, needs ? std::move(fn) : Backward{}, needs, -1});
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of node `id`, zero-filled on first use.
  Tensor& grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  }

  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  void backward(Var loss) {
    if (loss.tape != this) throw std::logic_error("Tape::backward: loss belongs to another tape");
    if (nodes_[loss.id].value.size() != 1) throw std::invalid_argument("Tape::backward: loss must be a scalar");
    if (!nodes_[loss.id].requires_grad)
      throw std::logic_error("Tape::backward: loss does not depend on any trainable tensor");
    grad(loss.id).data[0] += 1.0;
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

  /// Adds parameter-leaf gradients into `grads` (indexed like the store).
  void accumulate_parameter_grads(std::vector<Tensor>& grads) const {
    for (const auto& [index, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      auto& g = grads.at(index);
      for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += n.grad.data[k];
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    std::ptrdiff_t param_index = -1;
  };
  std::deque<Node> nodes_;
  std::unordered_map<std::size_t, std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline double Var::item() const { return value().data.at(0); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

}  // namespace teu::nn
