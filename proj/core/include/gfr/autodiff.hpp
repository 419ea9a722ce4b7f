// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over a small set of dense ops.
//
// A Graph records every op applied to its Vars in creation order, which is
// also a topological order, so backward() is a single reverse sweep. Leaves
// are either parameters (gradient is accumulated) or constants (never
// differentiated). Every op checks that its result is finite and throws
// NumericError otherwise.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gfr/tensor.hpp"

namespace gfr {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid as long as the graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool needs_grad() const;
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor& upstream)>;

  /// With tracing off no backward closures are stored: values only.
  explicit Graph(bool tracing = true) : tracing_(tracing) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Tensor value);
  Var constant(Tensor value);

  /// Populates gradients of every node reachable from a scalar root.
  void backward(Var root);

  bool tracing() const noexcept { return tracing_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Op plumbing. `make_backward` is only invoked when some input needs a
  // gradient, so ops can skip building closures for constant subgraphs.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             const std::function<BackwardFn(Var self)>& make_backward);
  void accumulate(Var target, const Tensor& delta);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  bool tracing_;
  std::deque<Node> nodes_;  // deque: references stay valid while growing
};

// ---- forward ops ----------------------------------------------------------
//
// Elementwise binary ops require equal shapes, except that a rank-0 operand
// is broadcast against the other. Matrix ops require rank-2 operands.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var neg(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var transpose(Var a);

/// B x n -> B x 1.
Var row_sum(Var a);
/// Row-wise softmax of a / T (rank 1 is treated as a single row).
Var softmax_with_temperature(Var a, double temperature);
Var log_softmax_with_temperature(Var a, double temperature);
/// out_i = log sum_j w_ij exp(a_ij) with constant non-negative weights; every
/// row needs at least one positive weight. B x n -> B x 1.
Var log_weighted_sum_exp(Var a, const Tensor& weights);
/// Rows of a K x D table, one per index. Gradient scatters back.
Var gather_rows(Var table, std::span<const std::size_t> indices);
Var select_cols(Var a, std::span<const std::size_t> cols);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Constant copy of a's value: no gradient flows through.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Plain-tensor helpers shared by ops and callers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace gfr
