// SPDX-License-Identifier: Apache-2.0
#include "gfr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gfr/error.hpp"

namespace gfr {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw ContractError("operands belong to different graphs");
  return graph_of(a);
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void require_matrix(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
  }
}

// Result shape of an elementwise binary op, scalar-against-tensor broadcast only.
Shape broadcast_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(a)) return b.shape();
  if (is_scalar(b)) return a.shape();
  throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor zip(const Shape& shape, const Tensor& a, const Tensor& b, F f) {
  Tensor out(shape);
  auto dst = out.data();
  const bool sa = is_scalar(a) && !is_scalar(b);
  const bool sb = is_scalar(b) && !is_scalar(a);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = f(sa ? a[0] : a[i], sb ? b[0] : b[i]);
  }
  return out;
}

// Gradient contribution for an operand that may have been broadcast.
Tensor reduce_to(const Tensor& operand, Tensor grad) {
  if (operand.shape() == grad.shape()) return grad;
  double total = 0.0;
  for (double g : grad.data()) total += g;
  return Tensor::scalar(total);
}

// Row views of rank-1 (single row) or rank-2 tensors.
std::size_t row_count(const Tensor& t) { return t.rank() == 1 ? 1 : t.rows(); }
std::size_t row_width(const Tensor& t) { return t.rank() == 1 ? t.size() : t.cols(); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Var / Graph -----------------------------------------------------------

const Tensor& Var::value() const { return graph_of(*this).value(id_); }
const Tensor& Var::grad() const { return graph_of(*this).grad(id_); }
bool Var::needs_grad() const { return graph_of(*this).needs_grad(id_); }

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, tracing_, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) const {
  Node& node = const_cast<Node&>(nodes_[id]);
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                  const std::function<BackwardFn(Var self)>& make_backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite result");
  }
  bool needs = false;
  if (tracing_) {
    for (Var in : inputs) needs = needs || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false, {}});
  Var self(this, nodes_.size() - 1);
  if (needs) nodes_.back().backward = make_backward(self);
  return self;
}

void Graph::accumulate(Var target, const Tensor& delta) {
  Node& node = nodes_[target.id()];
  if (!node.needs_grad) return;
  if (delta.shape() != node.value.shape()) {
    throw DimensionError("gradient shape " + to_string(delta.shape()) +
                         " does not match value shape " + to_string(node.value.shape()));
  }
  if (!node.has_grad) {
    node.grad = delta;
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw ContractError("backward root belongs to another graph");
  const Tensor& rv = nodes_[root.id()].value;
  if (rv.size() != 1) {
    throw ContractError("backward root must be scalar, got shape " + to_string(rv.shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  accumulate(root, Tensor(rv.shape(), 1.0));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || !node.has_grad || !node.backward) continue;
    node.backward(node.grad);
  }
}

// ---- plain tensor helpers --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.record("matmul", matmul(a.value(), b.value()), {a, b}, [&g, a, b](Var) {
    return [&g, a, b](const Tensor& up) {
      if (a.needs_grad()) g.accumulate(a, matmul(up, transpose(b.value())));
      if (b.needs_grad()) g.accumulate(b, matmul(transpose(a.value()), up));
    };
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Shape shape = broadcast_shape("add", a.value(), b.value());
  return g.record("add", zip(shape, a.value(), b.value(), std::plus<>()), {a, b},
                  [&g, a, b](Var) {
                    return [&g, a, b](const Tensor& up) {
                      if (a.needs_grad()) g.accumulate(a, reduce_to(a.value(), up));
                      if (b.needs_grad()) g.accumulate(b, reduce_to(b.value(), up));
                    };
                  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Shape shape = broadcast_shape("sub", a.value(), b.value());
  return g.record("sub", zip(shape, a.value(), b.value(), std::minus<>()), {a, b},
                  [&g, a, b](Var) {
                    return [&g, a, b](const Tensor& up) {
                      if (a.needs_grad()) g.accumulate(a, reduce_to(a.value(), up));
                      if (b.needs_grad()) {
                        g.accumulate(b, reduce_to(b.value(), map(up, std::negate<>())));
                      }
                    };
                  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Shape shape = broadcast_shape("mul", a.value(), b.value());
  return g.record(
      "mul", zip(shape, a.value(), b.value(), std::multiplies<>()), {a, b}, [&g, a, b](Var) {
        return [&g, a, b](const Tensor& up) {
          if (a.needs_grad()) {
            g.accumulate(a, reduce_to(a.value(), zip(up.shape(), up, b.value(),
                                                     std::multiplies<>())));
          }
          if (b.needs_grad()) {
            g.accumulate(b, reduce_to(b.value(), zip(up.shape(), up, a.value(),
                                                     std::multiplies<>())));
          }
        };
      });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  return g.record("scale", map(a.value(), [factor](double v) { return v * factor; }), {a},
                  [&g, a, factor](Var) {
                    return [&g, a, factor](const Tensor& up) {
                      g.accumulate(a, map(up, [factor](double v) { return v * factor; }));
                    };
                  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  Graph& g = graph_of(a);
  return g.record("relu", map(a.value(), [](double v) { return v > 0 ? v : 0.0; }), {a},
                  [&g, a](Var) {
                    return [&g, a](const Tensor& up) {
                      g.accumulate(a, zip(up.shape(), up, a.value(), [](double u, double x) {
                                     return x > 0 ? u : 0.0;
                                   }));
                    };
                  });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  return g.record("sigmoid", map(a.value(), stable_sigmoid), {a}, [&g, a](Var self) {
    return [&g, a, self](const Tensor& up) {
      g.accumulate(a, zip(up.shape(), up, self.value(),
                          [](double u, double s) { return u * s * (1.0 - s); }));
    };
  });
}

Var softplus(Var a) {
  Graph& g = graph_of(a);
  auto f = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  return g.record("softplus", map(a.value(), f), {a}, [&g, a](Var) {
    return [&g, a](const Tensor& up) {
      g.accumulate(a, zip(up.shape(), up, a.value(),
                          [](double u, double x) { return u * stable_sigmoid(x); }));
    };
  });
}

Var exp(Var a) {
  Graph& g = graph_of(a);
  return g.record("exp", map(a.value(), [](double v) { return std::exp(v); }), {a},
                  [&g, a](Var self) {
                    return [&g, a, self](const Tensor& up) {
                      g.accumulate(a, zip(up.shape(), up, self.value(), std::multiplies<>()));
                    };
                  });
}

Var log(Var a) {
  Graph& g = graph_of(a);
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log: argument " + std::to_string(v) + " is not > 0");
  }
  return g.record("log", map(a.value(), [](double v) { return std::log(v); }), {a},
                  [&g, a](Var) {
                    return [&g, a](const Tensor& up) {
                      g.accumulate(a, zip(up.shape(), up, a.value(), std::divides<>()));
                    };
                  });
}

Var square(Var a) {
  Graph& g = graph_of(a);
  return g.record("square", map(a.value(), [](double v) { return v * v; }), {a},
                  [&g, a](Var) {
                    return [&g, a](const Tensor& up) {
                      g.accumulate(a, zip(up.shape(), up, a.value(),
                                          [](double u, double x) { return 2.0 * u * x; }));
                    };
                  });
}

Var clamp(Var a, double lo, double hi) {
  Graph& g = graph_of(a);
  return g.record("clamp", map(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); }),
                  {a}, [&g, a, lo, hi](Var) {
                    return [&g, a, lo, hi](const Tensor& up) {
                      g.accumulate(a, zip(up.shape(), up, a.value(), [lo, hi](double u, double x) {
                                     return (x >= lo && x <= hi) ? u : 0.0;
                                   }));
                    };
                  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.record("sum", Tensor::scalar(total), {a}, [&g, a](Var) {
    return [&g, a](const Tensor& up) { g.accumulate(a, Tensor(a.value().shape(), up.item())); };
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  return g.record("transpose", transpose(a.value()), {a}, [&g, a](Var) {
    return [&g, a](const Tensor& up) { g.accumulate(a, transpose(up)); };
  });
}

Var row_sum(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("row_sum", x);
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row_span(i)) s += v;
    out(i, 0) = s;
  }
  return g.record("row_sum", std::move(out), {a}, [&g, a](Var) {
    return [&g, a](const Tensor& up) {
      const Tensor& x = a.value();
      Tensor d(x.shape());
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (double& v : d.row_span(i)) v = up(i, 0);
      }
      g.accumulate(a, d);
    };
  });
}

namespace {

// Row-wise softmax of x / T into `out`, which must have x's shape.
void softmax_rows(const Tensor& x, double temperature, Tensor& out) {
  const std::size_t rows = row_count(x), width = row_width(x);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * width;
    double* o = out.data().data() + r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, in[j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] / temperature - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= z;
  }
}

void require_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ContractError("temperature must be positive and finite, got " +
                        std::to_string(temperature));
  }
}

}  // namespace

Var softmax_with_temperature(Var a, double temperature) {
  require_temperature(temperature);
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError("softmax: expected rank 1 or 2, got " + to_string(x.shape()));
  }
  Tensor out(x.shape());
  softmax_rows(x, temperature, out);
  return g.record("softmax", std::move(out), {a}, [&g, a, temperature](Var self) {
    return [&g, a, self, temperature](const Tensor& up) {
      const Tensor& s = self.value();
      const std::size_t rows = row_count(s), width = row_width(s);
      Tensor d(s.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * width;
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += up[off + j] * s[off + j];
        for (std::size_t j = 0; j < width; ++j) {
          d[off + j] = s[off + j] * (up[off + j] - dot) / temperature;
        }
      }
      g.accumulate(a, d);
    };
  });
}

Var log_softmax_with_temperature(Var a, double temperature) {
  require_temperature(temperature);
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError("log_softmax: expected rank 1 or 2, got " + to_string(x.shape()));
  }
  const std::size_t rows = row_count(x), width = row_width(x);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t off = r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, x[off + j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(x[off + j] / temperature - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < width; ++j) out[off + j] = x[off + j] / temperature - lse;
  }
  return g.record("log_softmax", std::move(out), {a}, [&g, a, temperature](Var self) {
    return [&g, a, self, temperature](const Tensor& up) {
      const Tensor& l = self.value();
      const std::size_t rows = row_count(l), width = row_width(l);
      Tensor d(l.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * width;
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) total += up[off + j];
        for (std::size_t j = 0; j < width; ++j) {
          d[off + j] = (up[off + j] - std::exp(l[off + j]) * total) / temperature;
        }
      }
      g.accumulate(a, d);
    };
  });
}

Var log_weighted_sum_exp(Var a, const Tensor& weights) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("log_weighted_sum_exp", x);
  if (weights.shape() != x.shape()) {
    throw DimensionError("log_weighted_sum_exp: weights " + to_string(weights.shape()) +
                         " vs values " + to_string(x.shape()));
  }
  const std::size_t rows = x.rows(), width = x.cols();
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) {
      const double w = weights(r, j);
      if (w < 0.0) throw DomainError("log_weighted_sum_exp: negative weight");
      if (w > 0.0) mx = std::max(mx, x(r, j));
    }
    if (!std::isfinite(mx)) {
      throw DomainError("log_weighted_sum_exp: row " + std::to_string(r) + " has no positive weight");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      if (weights(r, j) > 0.0) z += weights(r, j) * std::exp(x(r, j) - mx);
    }
    out(r, 0) = mx + std::log(z);
  }
  return g.record("log_weighted_sum_exp", std::move(out), {a}, [&g, a, weights](Var self) {
    return [&g, a, self, weights](const Tensor& up) {
      const Tensor& x = a.value();
      const Tensor& y = self.value();
      Tensor d(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
          const double w = weights(r, j);
          if (w > 0.0) d(r, j) = up(r, 0) * w * std::exp(x(r, j) - y(r, 0));
        }
      }
      g.accumulate(a, d);
    };
  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  Graph& g = graph_of(table);
  const Tensor& t = table.value();
  require_matrix("gather_rows", t);
  for (std::size_t i : indices) {
    if (i >= t.rows()) throw DimensionError("gather_rows: index out of range");
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return g.record("gather_rows", take_rows(t, idx), {table}, [&g, table, idx](Var) {
    return [&g, table, idx](const Tensor& up) {
      Tensor d(table.value().shape());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = up.row_span(i);
        auto dst = d.row_span(idx[i]);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      }
      g.accumulate(table, d);
    };
  });
}

Var select_cols(Var a, std::span<const std::size_t> cols) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("select_cols", x);
  for (std::size_t c : cols) {
    if (c >= x.cols()) throw DimensionError("select_cols: column index out of range");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  Tensor out({x.rows(), idx.size()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = x(r, idx[j]);
  }
  return g.record("select_cols", std::move(out), {a}, [&g, a, idx](Var) {
    return [&g, a, idx](const Tensor& up) {
      Tensor d(a.value().shape());
      for (std::size_t r = 0; r < up.rows(); ++r) {
        for (std::size_t j = 0; j < idx.size(); ++j) d(r, idx[j]) += up(r, j);
      }
      g.accumulate(a, d);
    };
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix("slice_cols", x);
  if (begin > end || end > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  std::vector<std::size_t> cols(end - begin);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = begin + j;
  return select_cols(a, cols);
}

Var stop_gradient(Var a) { return graph_of(a).constant(a.value()); }

}  // namespace gfr
