#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bssgan/tensor.hpp"

namespace bssgan {

using NodeId = int;

/// Reverse-mode autodiff tape. Operations append nodes in topological order
/// during the forward pass; backward() replays them once in reverse,
/// accumulating gradients additively at fan-out points.
template <class T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated by backward()
    bool requires_grad = false;
    std::string name;  // non-empty for named variables (parameters)
    std::function<void(Tape&)> pull;  // pushes this node's grad to its inputs
  };

  NodeId variable(Tensor<T> v, std::string name = {}, bool requires_grad = true) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId constant(Tensor<T> v) { return variable(std::move(v), {}, false); }

  /// Records an op node. `pull` receives the tape and must add the op's
  /// vector-Jacobian product into grad(input) for every differentiable input.
  NodeId emit(Tensor<T> value, const std::vector<NodeId>& inputs,
              std::function<void(Tape&)> pull) {
    bool needs = false;
    for (NodeId i : inputs) needs = needs || node(i).requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  const Tensor<T>& value(NodeId id) const { return node(id).value; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }

  /// Gradient buffer of a node; valid during/after backward().
  Tensor<T>& grad(NodeId id) {
    Node& n = node(id);
    if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  /// Runs the reverse sweep from a scalar loss. Returns gradients of all
  /// named variables; unreachable ones come back as zeros.
  std::map<std::string, Tensor<T>> backward(NodeId loss) {
    if (consumed_) throw std::logic_error("backward() called twice on the same tape");
    consumed_ = true;
    if (node(loss).value.numel() != 1)
      throw std::invalid_argument("backward() requires a scalar loss");
    grad(loss).data[0] = T(1);
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = node(id);
      if (n.requires_grad && n.pull && n.grad.numel() != 0) n.pull(*this);
    }
    std::map<std::string, Tensor<T>> out;
    for (Node& n : nodes_) {
      if (n.name.empty() || !n.requires_grad) continue;
      if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape);
      out[n.name] = n.grad;
    }
    return out;
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  Node& node(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace bssgan
