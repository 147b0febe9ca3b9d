#ifndef FAWN_GRAPH_HPP
#define FAWN_GRAPH_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/tensor.hpp"

namespace fawn {

enum class OpKind {
  Leaf,
  Add,
  Mul,
  Scale,
  Sum,
  Reshape,
  Select,
  StackRows,
  Relu,
  Conv2d,
  MaxPool2d,
  Linear,
  MatMul,
  MatMulNT,
  Softmax,
  CrossEntropy,
  BceLogits,
};

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

/// Append-only tape of computation records for reverse-mode differentiation.
///
/// Every node stores its output value; gradients are materialized (zeroed)
/// when backward() runs. Inputs of a node always have smaller ids than the
/// node itself, so walking ids in descending order is a valid reverse
/// topological order.
class Graph {
 public:
  /// Propagates the node's output gradient into the gradients of its inputs.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = true;
  };

  /// Differentiable input (a parameter, or any tensor under test).
  Var leaf(Tensor value) { return push(OpKind::Leaf, {}, std::move(value), nullptr); }

  /// Input whose gradient is never needed; ops may skip propagating into it.
  Var constant(Tensor value) {
    const Var v = leaf(std::move(value));
    nodes_[v.id].requires_grad = false;
    return v;
  }

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
    const std::size_t id = nodes_.size();
    for (std::size_t in : inputs) {
      if (in >= id) throw ContractError("graph input id " + std::to_string(in) + " is not an earlier node");
    }
    bool needs = inputs.empty();
    for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Tensor(), std::move(backward), needs});
    return Var{id};
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Mutable gradient slot, used by backward functions to accumulate.
  Tensor& grad_slot(std::size_t id) { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }

  void backward(Var loss) {
    if (loss.id >= nodes_.size()) throw ContractError("backward: unknown loss node");
    if (nodes_[loss.id].value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(nodes_[loss.id].value.shape()));
    }
    std::vector<char> reached(loss.id + 1, 0);
    for (std::size_t i = 0; i <= loss.id; ++i) nodes_[i].grad = Tensor(nodes_[i].value.shape(), 0.0);
    nodes_[loss.id].grad[0] = 1.0;
    reached[loss.id] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!reached[i] || !nodes_[i].requires_grad) continue;
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
      for (std::size_t in : n.inputs) reached[in] = 1;
    }
  }

 private:
  std::vector<Node> nodes_;
};

}  // namespace fawn

#endif  // FAWN_GRAPH_HPP
