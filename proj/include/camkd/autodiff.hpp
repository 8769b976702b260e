#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "camkd/tensor.hpp"

namespace camkd {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  std::size_t index() const { return index_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  Shape shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t index) : graph_(graph), index_(index) {}

  Graph* graph_ = nullptr;
  std::size_t index_ = 0;
};

/// Tape for reverse-mode differentiation. Nodes are appended in evaluation order,
/// so a node's parents always precede it and backward is a single reverse sweep.
/// A graph is built per batch and discarded afterwards.
class Graph {
 public:
  struct Node;
  /// Receives the node's output gradient and one slot per parent; the slot is null
  /// when that parent does not require a gradient.
  using BackwardFn =
      std::function<void(const Graph&, const Node&, std::span<Tensor* const> parent_grads)>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an op result. It requires a gradient iff any parent does; the backward
  /// function is dropped otherwise.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Populates gradients of every node up to `loss`. Throws UsageError unless
  /// `loss` is a 1x1 node of this graph. Gradients from a previous call are reset.
  void backward(Var loss);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const Node& node_at(std::size_t index) const { return nodes_[index]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  const Node& node(Var v) const;
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
};

/// Differentiable ops. Each mirrors the value kernel of the same name in tensor.hpp.
namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var add_row_broadcast(Var x, Var bias);
Var relu(Var x);
Var softmax_t(Var z, double tau);
/// log(max(p, kLogFloor)); gradient is zero where the clamp is active.
Var log(Var p);
Var cross_entropy(Var p, std::span<const int> labels);
Var l2_sq(Var a, Var b);
Var row_sum(Var x);
Var mean(Var x);
Var avg_pool(Var features, std::size_t spatial = 1);
/// Horizontal concatenation of equally tall inputs.
Var concat_cols(std::span<const Var> parts);
/// Column `index` as a rows x 1 node.
Var column(Var x, std::size_t index);

}  // namespace ad

}  // namespace camkd
