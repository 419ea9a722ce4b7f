// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "gfr/autodiff.hpp"
#include "gfr/error.hpp"
#include "gfr/rng.hpp"
#include "oracles.hpp"

namespace gfr {
namespace {

using Builder = std::function<Var(Graph&, std::vector<Var>&)>;

// Compares backward() against central differences for every input element.
void expect_gradients_match(const Builder& build, const std::vector<Tensor>& inputs,
                            double tol = 1e-6) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.parameter(t));
  Var out = build(g, vars);
  g.backward(out);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto f = [&](const std::vector<double>& flat) {
        std::vector<Tensor> moved = inputs;
        moved[k] = Tensor(inputs[k].shape(), flat);
        Graph h(false);
        std::vector<Var> hv;
        for (const Tensor& t : moved) hv.push_back(h.constant(t));
        return build(h, hv).value().item();
      };
      const double numeric = oracle::central_difference(f, inputs[k].values(), i, 1e-6);
      const double analytic = vars[k].grad()[i];
      EXPECT_LT(oracle::relative_error(analytic, numeric), tol)
          << "input " << k << " element " << i << ": analytic " << analytic << " numeric "
          << numeric;
    }
  }
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = rng.normal_matrix(r, c);
  for (double& v : t.data()) v *= scale;
  return t;
}

TEST(Autodiff, ElementwiseOps) {
  Rng rng(1);
  const Tensor a = random_matrix(rng, 3, 4);
  const Tensor b = random_matrix(rng, 3, 4);
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(v[0] * v[1] - v[0] + v[1]); },
                         {a, b});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(sigmoid(v[0])); }, {a});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(softplus(v[0])); }, {a});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return mean(exp(scale(v[0], 0.5))); },
                         {a});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(square(neg(v[0]))); }, {a});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(log(exp(v[0]) + exp(v[1]))); },
                         {a, b});
}

TEST(Autodiff, MatrixOps) {
  Rng rng(2);
  const Tensor a = random_matrix(rng, 3, 4);
  const Tensor b = random_matrix(rng, 4, 2);
  expect_gradients_match(
      [](Graph&, std::vector<Var>& v) { return sum(square(matmul(v[0], v[1]))); }, {a, b});
  expect_gradients_match(
      [](Graph&, std::vector<Var>& v) { return sum(square(row_sum(transpose(v[0])))); }, {a});
}

TEST(Autodiff, SoftmaxFamily) {
  Rng rng(3);
  const Tensor a = random_matrix(rng, 3, 5, 2.0);
  const Tensor w = random_matrix(rng, 3, 5);
  for (double temperature : {0.5, 1.0, 3.0}) {
    expect_gradients_match(
        [&](Graph& g, std::vector<Var>& v) {
          return sum(log_softmax_with_temperature(v[0], temperature) * g.constant(w));
        },
        {a});
    expect_gradients_match(
        [&](Graph& g, std::vector<Var>& v) {
          return sum(softmax_with_temperature(v[0], temperature) * g.constant(w));
        },
        {a});
  }
  Tensor weights = Tensor::matrix({{0.2, 0.0, 0.3, 0.5, 0.0}, {1, 0, 0, 0, 0}, {0.1, 0.1, 0.1, 0.1, 0.6}});
  expect_gradients_match(
      [&](Graph&, std::vector<Var>& v) { return sum(log_weighted_sum_exp(v[0], weights)); }, {a});
}

TEST(Autodiff, IndexingOps) {
  Rng rng(4);
  const Tensor table = random_matrix(rng, 4, 3);
  const std::vector<std::size_t> rows{2, 0, 2};
  const std::vector<std::size_t> cols{2, 1};
  expect_gradients_match(
      [&](Graph&, std::vector<Var>& v) { return sum(square(gather_rows(v[0], rows))); }, {table});
  expect_gradients_match(
      [&](Graph&, std::vector<Var>& v) { return sum(square(select_cols(v[0], cols))); }, {table});
  expect_gradients_match(
      [&](Graph&, std::vector<Var>& v) { return sum(square(slice_cols(v[0], 1, 3))); }, {table});
}

TEST(Autodiff, ReluAndClampAwayFromKinks) {
  Tensor a = Tensor::matrix({{-2.0, -0.5, 0.7}, {1.3, 3.0, -4.0}});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(relu(v[0]) * v[0]); }, {a});
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(square(clamp(v[0], -1, 2))); },
                         {a});
}

TEST(Autodiff, ScalarBroadcast) {
  Tensor a = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  Tensor s = Tensor::scalar(0.7);
  expect_gradients_match([](Graph&, std::vector<Var>& v) { return sum(square(v[0] * v[1] + v[1])); },
                         {a, s});
}

TEST(Autodiff, StopGradientBlocksFlow) {
  Graph g;
  Var x = g.parameter(Tensor::vector({1.0, 2.0}));
  Var y = sum(x * stop_gradient(x));
  g.backward(y);
  EXPECT_EQ(x.grad(), Tensor::vector({1.0, 2.0}));
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::vector({1.0, 2.0}));
  Var p = g.parameter(Tensor::vector({3.0, 4.0}));
  g.backward(sum(c * p));
  EXPECT_FALSE(c.needs_grad());
  EXPECT_EQ(p.grad(), Tensor::vector({1.0, 2.0}));
  EXPECT_EQ(c.grad(), Tensor::vector({0.0, 0.0}));
}

TEST(Autodiff, BackwardResetsPreviousGradients) {
  Graph g;
  Var p = g.parameter(Tensor::scalar(2.0));
  Var y = square(p);
  g.backward(y);
  g.backward(y);
  EXPECT_DOUBLE_EQ(p.grad().item(), 4.0);
}

TEST(Autodiff, ContractViolations) {
  Graph g;
  Var v = g.parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(v), ContractError);
  Graph other;
  Var w = other.parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(add(v, w), ContractError);
  EXPECT_THROW(add(v, g.constant(Tensor::vector({1.0, 2.0, 3.0}))), DimensionError);
  EXPECT_THROW(matmul(g.constant(Tensor::zeros(2, 3)), g.constant(Tensor::zeros(2, 3))),
               DimensionError);
  EXPECT_THROW(softmax_with_temperature(v, 0.0), ContractError);
  EXPECT_THROW(log(g.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(log_weighted_sum_exp(g.constant(Tensor::zeros(1, 2)), Tensor::zeros(1, 2)),
               DomainError);
}

TEST(Autodiff, NonFiniteResultsAreRejected) {
  Graph g;
  Var big = g.constant(Tensor::vector({800.0}));
  EXPECT_THROW(exp(big), NumericError);
}

TEST(Autodiff, UntracedGraphStoresNoClosures) {
  Graph g(false);
  Var p = g.parameter(Tensor::scalar(1.5));
  Var y = square(p);
  EXPECT_DOUBLE_EQ(y.value().item(), 2.25);
  EXPECT_FALSE(y.needs_grad());
}

}  // namespace
}  // namespace gfr
