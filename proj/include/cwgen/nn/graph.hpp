#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cwgen/nn/params.hpp"
#include "cwgen/nn/tensor.hpp"

namespace cwgen::nn {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
};

/// Single-use reverse-mode tape. Nodes are appended in evaluation order, which
/// is a topological order, so backward() walks the node list in reverse and
/// visits every node once.
class Graph {
 public:
  /// Called during backward with the graph and the index of the node whose
  /// gradient is complete. Implementations add into parent gradients.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into param.grad.
  Var parameter(Parameter& param);
  /// Read-only parameter use (inference): recorded as a constant.
  Var parameter(const Parameter& param) { return constant(param.value); }

  /// Adds an op node. Values are checked for finiteness; a NaN or infinity
  /// raises NumericError naming `op`.
  Var record(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss node.
  void backward(Var loss);

  const Tensor& value(std::size_t i) const { return nodes_[i].value; }
  const Tensor& value(Var v) const { return nodes_[v.index].value; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  /// Gradient buffer for node i, allocated on first use.
  Tensor& grad(std::size_t i);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Forward operations. All inputs must come from the same graph; shape
// mismatches throw ContractViolation.

Var matmul(Var a, Var b);
/// Elementwise sum; b may also be a 1 x cols row broadcast over the rows of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var softplus(Var a);
Var relu(Var a);
/// Column-wise concatenation of tensors with equal row counts.
Var concat(const std::vector<Var>& parts);
/// Columns [begin, end).
Var slice(Var a, std::size_t begin, std::size_t end);
/// Row r of the input becomes rows r*k .. r*k+k-1 of the output.
Var repeat_rows(Var a, std::size_t k);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var sum(Var a);
Var mean(Var a);
/// Sum of squares.
Var sqnorm(Var a);

}  // namespace cwgen::nn
