#include <functional>

#include <gtest/gtest.h>

#include "camkd/autodiff.hpp"
#include "camkd/errors.hpp"
#include "camkd/rng.hpp"
#include "oracles.hpp"

namespace camkd {
namespace {

using BuildFn = std::function<Var(Graph&, std::span<const Var>)>;

// Builds the scalar twice per perturbation: once recorded for backward, and
// repeatedly for central differences.
double check_gradient(std::vector<Tensor> inputs, const BuildFn& build) {
  Graph g;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.parameter(t));
  g.backward(build(g, leaves));
  std::vector<Tensor> analytic;
  for (const Var& v : leaves) analytic.push_back(v.grad());

  std::vector<Tensor*> params;
  for (Tensor& t : inputs) params.push_back(&t);
  const auto numeric = testing::finite_differences(params, [&] {
    Graph h;
    std::vector<Var> vs;
    for (const Tensor& t : inputs) vs.push_back(h.constant(t));
    return build(h, vs).value().item();
  });
  return testing::relative_error(analytic, numeric);
}

// Reduces a matrix-valued op output to a scalar with fixed random weights so
// every output entry contributes to the gradient.
Var weighted_sum(Var x, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor w = testing::random_tensor(rng, x.shape().rows, x.shape().cols);
  return ad::mean(ad::mul(x, x.graph()->constant(w)));
}

class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(1000 + GetParam());
  const std::size_t m = 1 + rng.uniform_int(5), n = 2 + rng.uniform_int(6), k = 1 + rng.uniform_int(6);
  const Tensor a = testing::random_tensor(rng, m, n);
  const Tensor b = testing::random_tensor(rng, n, k);
  const Tensor c = testing::random_tensor(rng, m, n);
  const Tensor bias = testing::random_tensor(rng, 1, n);
  const std::vector<int> labels = testing::random_labels(rng, m, n);

  EXPECT_LT(check_gradient({a, b}, [](Graph&, auto v) { return weighted_sum(ad::matmul(v[0], v[1]), 1); }), 1e-7);
  EXPECT_LT(check_gradient({a, c}, [](Graph&, auto v) { return weighted_sum(ad::add(v[0], v[1]), 2); }), 1e-7);
  EXPECT_LT(check_gradient({a, c}, [](Graph&, auto v) { return weighted_sum(ad::sub(v[0], v[1]), 3); }), 1e-7);
  EXPECT_LT(check_gradient({a, c}, [](Graph&, auto v) { return weighted_sum(ad::mul(v[0], v[1]), 4); }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::scale(v[0], -1.7), 5); }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::add_scalar(v[0], 0.3), 6); }), 1e-7);
  EXPECT_LT(check_gradient({a, bias}, [](Graph&, auto v) {
              return weighted_sum(ad::add_row_broadcast(v[0], v[1]), 7);
            }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::relu(v[0]), 8); }), 1e-6);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::softmax_t(v[0], 2.5), 9); }), 1e-6);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) {
              return weighted_sum(ad::log(ad::softmax_t(v[0], 1.0)), 10);
            }), 1e-6);
  EXPECT_LT(check_gradient({a}, [&labels](Graph&, auto v) {
              return ad::mean(ad::cross_entropy(ad::softmax_t(v[0], 1.0), labels));
            }), 1e-6);
  EXPECT_LT(check_gradient({a, c}, [](Graph&, auto v) { return ad::mean(ad::l2_sq(v[0], v[1])); }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::row_sum(v[0]), 11); }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::avg_pool(v[0]), 12); }), 1e-7);
  EXPECT_LT(check_gradient({a, c}, [](Graph&, auto v) {
              const std::vector<Var> parts{v[0], v[1]};
              return weighted_sum(ad::concat_cols(parts), 13);
            }), 1e-7);
  EXPECT_LT(check_gradient({a}, [](Graph&, auto v) { return weighted_sum(ad::column(v[0], 1), 14); }), 1e-7);
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, OpGradient, ::testing::Range(0, 8));

TEST(Graph, BackwardRejectsNonScalarLoss) {
  Graph g;
  const Var x = g.parameter(Tensor(2, 2, 1.0));
  EXPECT_THROW(g.backward(x), UsageError);
}

TEST(Graph, BackwardRejectsForeignVar) {
  Graph g, h;
  const Var x = h.parameter(Tensor::scalar(1.0));
  EXPECT_THROW(g.backward(x), UsageError);
}

TEST(Graph, ParentsPrecedeChildren) {
  Graph g;
  const Var x = g.parameter(Tensor(2, 3, 0.5));
  const Var w = g.parameter(Tensor(3, 2, 0.25));
  const Var loss = ad::mean(ad::relu(ad::matmul(x, w)));
  EXPECT_EQ(loss.index() + 1, g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const std::size_t p : g.node_at(i).parents) EXPECT_LT(p, i);
  }
}

TEST(Graph, GradientShapesMatchValues) {
  Rng rng(5);
  Graph g;
  const Var x = g.parameter(testing::random_tensor(rng, 3, 4));
  const Var w = g.parameter(testing::random_tensor(rng, 4, 2));
  g.backward(ad::mean(ad::softmax_t(ad::matmul(x, w), 1.0)));
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g.node_at(i).grad.shape(), g.node_at(i).value.shape());
  }
}

TEST(Graph, ConstantsReceiveNoGradientPath) {
  Graph g;
  const Var c = g.constant(Tensor::scalar(3.0));
  const Var p = g.parameter(Tensor::scalar(2.0));
  g.backward(ad::mul(c, p));
  EXPECT_FALSE(g.requires_grad(c));
  EXPECT_EQ(p.grad().item(), 3.0);
}

TEST(Graph, BackwardIsLinearInLosses) {
  Rng rng(9);
  const Tensor a = testing::random_tensor(rng, 3, 4);
  const Tensor b = testing::random_tensor(rng, 3, 4);
  auto grad_of = [&](int which) {
    Graph g;
    const Var x = g.parameter(a);
    const Var y = g.constant(b);
    const Var l1 = ad::mean(ad::l2_sq(x, y));
    const Var l2 = ad::mean(ad::softmax_t(ad::mul(x, y), 1.5));
    const Var loss = which == 0 ? l1 : which == 1 ? l2 : ad::add(l1, l2);
    g.backward(loss);
    return x.grad();
  };
  const Tensor g1 = grad_of(0), g2 = grad_of(1), g12 = grad_of(2);
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-10);
}

TEST(Graph, RepeatedBackwardResetsGradients) {
  Graph g;
  const Var p = g.parameter(Tensor::scalar(2.0));
  const Var loss = ad::mul(p, p);
  g.backward(loss);
  g.backward(loss);
  EXPECT_EQ(p.grad().item(), 4.0);
}

TEST(Graph, LogClampBlocksGradient) {
  Graph g;
  const Var p = g.parameter(Tensor::from_rows({{0.0, 0.5}}));
  g.backward(ad::mean(ad::log(p)));
  EXPECT_EQ(p.grad()[0], 0.0);
  EXPECT_NEAR(p.grad()[1], 1.0, 1e-15);
}

}  // namespace
}  // namespace camkd
