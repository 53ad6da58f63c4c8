#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoattend/simplex.hpp"
#include "protoattend/tensor.hpp"

namespace protoattend {

// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.size(), 0.0) {}

  void zero_grad() { grad.assign(value.size(), 0.0); }
};

// Handle to a node of a Graph.
struct Var {
  std::uint32_t id = 0;
};

class Graph;
using BackwardFn = std::function<void(Graph&, Var self)>;

/// Tape of operations recorded in execution order, so every node's inputs
/// precede it. backward() walks the tape once in reverse.
///
/// Nodes that do not depend on a gradient-requiring leaf store no backward
/// closure, so inference through a Graph costs only the forward values.
class Graph {
 public:
  Var constant(Tensor value);
  // Leaf that accumulates its gradient into `param.grad` during backward().
  Var parameter(Parameter& param);
  // Free leaf requiring a gradient; read it back with grad().
  Var variable(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::string_view op(Var v) const { return nodes_[v.id].op; }
  // Empty until backward() has reached the node.
  std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d loss / d loss = 1 and propagates in reverse tape order. The
  /// loss must hold exactly one value. Parameter leaves receive their
  /// gradient by accumulation.
  void backward(Var loss);

  // Op-author interface.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  bool any_requires_grad(std::initializer_list<Var> inputs) const;
  // Gradient slot of an input, allocated (zeroed) on first use. Returns an
  // empty span when the input does not require a gradient.
  std::span<double> grad_slot(Var v);

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Buffer grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

// x[B x n] * W[n x m] + b[m]
Var linear(Graph& g, Var x, Var weight, Var bias);
// a[m x k] * b[k x n]
Var matmul(Graph& g, Var a, Var b);
// a[m x k] * b[n x k]^T
Var matmul_nt(Graph& g, Var a, Var b);
Var relu(Graph& g, Var x);

inline constexpr double kLayerNormEpsilon = 1e-5;
// Per-row (x - mean) / sqrt(var + eps) * gain + bias, population variance.
Var layer_norm(Graph& g, Var x, Var gain, Var bias);

Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
Var mul(Graph& g, Var a, Var b);
Var sum(Graph& g, Var x);
// (1 - t) * a + t * b
Var lerp(Graph& g, Var a, Var b, double t);
Var slice_rows(Graph& g, Var x, std::size_t begin, std::size_t end);

Var normalize_rows(Graph& g, Var scores, Normalization normalization);
Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels);
Var entropy_sparsity(Graph& g, Var weights, double eps = kEntropyEpsilon);
// -(1/B) sum_ij p_ij * [candidate_labels_j == labels_i]
Var label_agreement_loss(Graph& g, Var weights, std::span<const int> candidate_labels, std::span<const int> labels);

}  // namespace ops
}  // namespace protoattend
