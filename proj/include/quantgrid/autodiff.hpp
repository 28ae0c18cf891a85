#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Graph is a tape: every operation appends a node holding its forward value
// and a closure that pushes the node's gradient to its inputs. Nodes are
// appended in evaluation order, so reverse tape order is a valid topological
// order for backward(). Persistent trainable values live in Parameter objects;
// backward() adds into Parameter::grad and never clears it.

#include "quantgrid/tensor.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace quantgrid {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { grad.array().setZero(); }
};

enum class OpKind {
  Constant,
  Parameter,
  MatMul,
  ContractPerNode,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Sigmoid,
  Tanh,
  Abs,
  MaxScalar,
  Concat,
  Slice,
  Sum,
  Mean,
  Reshape,
  Permute,
  GatherRows,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient of the last backward() root; zeros when none reached this node.
  Tensor grad() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a persistent parameter. Repeated calls return the same node.
  Var parameter(Parameter& p);

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node and
  /// parameter. Throws ShapeError when root holds more than one value.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Used by operation implementations.
  Var push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Products.
Var matmul(Var a, Var b);
/// v: [B, N, D], w: [N, D, H] -> [B, N, H] with out[b, n] = v[b, n] * w[n].
Var contract_per_node(Var v, Var w);

// Broadcasting elementwise arithmetic (trailing-axis alignment).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var sigmoid(Var a);
Var tanh(Var a);
Var abs(Var a);
/// Elementwise max(a, s); the gradient passes only where a > s.
Var max_scalar(Var a, double s);

Var concat_last(std::span<const Var> parts);
Var concat_last(std::initializer_list<Var> parts);
Var slice(Var a, Index axis, Index begin, Index end);
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<Index> perm);
/// Rows of a rank-2 table selected by index.
Var gather_rows(Var table, std::span<const Index> rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(double s, Var a) { return add_scalar(scale(a, -1.0), s); }

/// Output shape of broadcasting a against b; throws ShapeError naming both.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace quantgrid
