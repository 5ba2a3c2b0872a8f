// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/error.hpp>
#include <dos/gradcheck.hpp>
#include <dos/graph.hpp>
#include <dos/ops.hpp>
#include <dos/orq.hpp>
#include <dos/random.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "support.hpp"

namespace dos {
namespace {

using MultiFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Central differences computed on freshly built graphs, compared against the
// tape's backward pass. Independent of gradient_check.
double oracle_rel_err(const MultiFn& fn, const std::vector<Tensor>& points, double eps = 1e-5) {
  std::vector<ParamPtr> params;
  for (std::size_t i = 0; i < points.size(); ++i) params.push_back(make_parameter("p" + std::to_string(i), points[i]));

  auto eval = [&]() {
    Graph g;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(g.param(p));
    return g.value(fn(g, vars)).item();
  };

  Graph g;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(g.param(p));
  const Gradients grads = g.backward(fn(g, vars));

  double worst = 0.0;
  for (const auto& p : params) {
    const Tensor original = p->value;
    const Tensor& analytic = grads.at(*p);
    for (std::size_t c = 0; c < original.size(); ++c) {
      std::vector<double> buf = original.to_vector();
      buf[c] += eps;
      p->value = Tensor(original.rows(), original.cols(), buf);
      const double plus = eval();
      buf[c] -= 2 * eps;
      p->value = Tensor(original.rows(), original.cols(), buf);
      const double minus = eval();
      p->value = original;
      const double numeric = (plus - minus) / (2 * eps);
      const double a = analytic.data()[c];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

// Reduces a matrix output to a scalar with a fixed random weighting so every
// output entry contributes a distinct gradient.
Var project(Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, g.constant(normal_tensor(y.rows(), y.cols(), 1.0, rng))));
}

TEST(Graph, SquareValueAndGradient) {
  auto x = make_parameter("x", Tensor::scalar(3.0));
  Graph g;
  Var vx = g.param(x);
  const auto fb = forward_backward(g, mul(vx, vx));
  EXPECT_DOUBLE_EQ(fb.value.item(), 9.0);
  EXPECT_DOUBLE_EQ(fb.grads.at(*x).item(), 6.0);
}

TEST(Graph, SigmoidAtZero) {
  auto x = make_parameter("x", Tensor::scalar(0.0));
  Graph g;
  const auto fb = forward_backward(g, sigmoid(g.param(x)));
  EXPECT_DOUBLE_EQ(fb.value.item(), 0.5);
  EXPECT_DOUBLE_EQ(fb.grads.at(*x).item(), 0.25);
}

TEST(Graph, SumOfProductMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor a = normal_tensor(3, 3, 1.0, rng);
  const Tensor b = normal_tensor(3, 3, 1.0, rng);
  const double err = oracle_rel_err([](Graph&, const std::vector<Var>& v) { return sum(matmul(v[0], v[1])); }, {a, b},
                                    1e-4);
  EXPECT_LT(err, 1e-5);
}

TEST(Graph, NonScalarSeedIsRejected) {
  Graph g;
  Var x = g.param(make_parameter("x", Tensor::row({1, 2})));
  EXPECT_THROW(g.backward(x), ContractViolation);
}

TEST(Graph, NonFiniteValueNamesTheNode) {
  Graph g;
  Var x = g.param(make_parameter("x", Tensor::scalar(1.0)));
  try {
    g.add_node("exploding_op", {x}, 1, 1, {std::numeric_limits<double>::quiet_NaN()}, nullptr);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exploding_op"), std::string::npos) << e.what();
  }
}

TEST(Graph, NonFiniteGradientNamesTheNode) {
  Graph g;
  Var x = g.param(make_parameter("x", Tensor::scalar(1.0)));
  Var y = g.add_node("bad_backward", {x}, 1, 1, {1.0}, [](std::span<const double>, std::span<double* const> in) {
    if (in[0]) in[0][0] += std::numeric_limits<double>::infinity();
  });
  Var z = g.add_node("poison", {y}, 1, 1, {1.0}, [](std::span<const double>, std::span<double* const> in) {
    if (in[0]) in[0][0] += std::numeric_limits<double>::infinity();
  });
  try {
    g.backward(z);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_backward"), std::string::npos) << e.what();
  }
}

TEST(Graph, TensorRejectsNonFinite) {
  EXPECT_THROW(Tensor::scalar(std::numeric_limits<double>::infinity()), NumericError);
  EXPECT_THROW(Tensor(1, 2, {1.0}), ContractViolation);
}

TEST(Graph, ShapeMismatchIsContractViolation) {
  Graph g;
  Var a = g.constant(Tensor::zeros(2, 3));
  Var b = g.constant(Tensor::zeros(3, 2));
  EXPECT_THROW(add(a, b), ContractViolation);
  EXPECT_THROW(add_row(a, g.constant(Tensor::zeros(1, 2))), ContractViolation);
  EXPECT_THROW(matmul(a, a), ContractViolation);
}

TEST(Graph, SharedParameterAccumulatesGradient) {
  auto x = make_parameter("x", Tensor::scalar(2.0));
  Graph g;
  Var a = g.param(x);
  Var b = g.param(x);
  EXPECT_EQ(a.id, b.id);
  const auto grads = g.backward(add(mul(a, b), scale(a, 3.0)));
  EXPECT_DOUBLE_EQ(grads.at(*x).item(), 7.0);
}

TEST(Graph, EvaluationIsDeterministic) {
  Rng rng(3);
  const Tensor a = normal_tensor(4, 5, 1.0, rng);
  auto run = [&] {
    Graph g;
    Var x = g.constant(a);
    return g.value(softmax_rows(layer_norm_rows(matmul_nt(x, x))));
  };
  EXPECT_TRUE(run().identical(run()));
}

TEST(StopGradient, LiveFactorOnly) {
  auto x = make_parameter("x", Tensor::scalar(2.0));
  Graph g;
  Var v = g.param(x);
  const auto fb = forward_backward(g, mul(stop_gradient(v), v));
  EXPECT_DOUBLE_EQ(fb.value.item(), 4.0);
  EXPECT_DOUBLE_EQ(fb.grads.at(*x).item(), 2.0);
}

TEST(StopGradient, BlocksAllFlow) {
  auto x = make_parameter("x", Tensor::row({1.5, -2.0}));
  Graph g;
  const auto grads = g.backward(sum(stop_gradient(g.param(x))));
  EXPECT_EQ(grads.at(*x).to_vector(), (std::vector<double>{0.0, 0.0}));
}

TEST(StopGradient, ForwardIsBitwiseIdentity) {
  Rng rng(5);
  const Tensor t = normal_tensor(3, 7, 1e3, rng);
  Graph g;
  EXPECT_TRUE(g.value(stop_gradient(g.constant(t))).identical(t));
}

TEST(StopGradient, CommitmentTerm) {
  auto x = make_parameter("x", Tensor::scalar(1.0));
  auto c = make_parameter("c", Tensor::scalar(0.0));
  Graph g;
  const auto grads = g.backward(sum_squares(sub(g.param(x), stop_gradient(g.param(c)))));
  EXPECT_DOUBLE_EQ(grads.at(*x).item(), 2.0);
  EXPECT_DOUBLE_EQ(grads.at(*c).item(), 0.0);
}

TEST(GradientCheck, LinearLayer) {
  Rng rng(21);
  const Tensor w = normal_tensor(4, 3, 1.0, rng);
  const Tensor b = normal_tensor(1, 3, 1.0, rng);
  const double err = gradient_check(
      [&](Graph& g, Var x) { return project(g, linear(x, g.constant(w), g.constant(b)), 1); },
      normal_tensor(5, 4, 1.0, rng), 1e-4);
  EXPECT_LT(err, 1e-5);
}

TEST(GradientCheck, AttentionBlock) {
  Rng rng(22);
  const Tensor wq = normal_tensor(4, 4, 0.5, rng);
  const Tensor wk = normal_tensor(4, 4, 0.5, rng);
  const Tensor wv = normal_tensor(4, 4, 0.5, rng);
  const double err = gradient_check(
      [&](Graph& g, Var x) {
        Var q = matmul(x, g.constant(wq));
        Var k = matmul(x, g.constant(wk));
        Var v = matmul(x, g.constant(wv));
        return project(g, attention(q, k, v, 3, 2, false), 2);
      },
      normal_tensor(6, 4, 1.0, rng), 1e-4);
  EXPECT_LT(err, 1e-4);
}

TEST(GradientCheck, HardMaskBlocksMaskedCoordinates) {
  const Tensor scores = Tensor::row({0.9, 0.1, 0.5, 0.3});
  const Tensor mask = topk_mask(scores, 2);
  auto x = make_parameter("x", Tensor::row({1.0, 2.0, 3.0, 4.0}));
  Graph g;
  const auto grads = g.backward(sum_squares(apply_mask(g.param(x), mask)));
  const Tensor& gx = grads.at(*x);
  for (std::size_t j = 0; j < 4; ++j) {
    if (mask(0, j) == 0.0) EXPECT_EQ(gx(0, j), 0.0);
    else EXPECT_DOUBLE_EQ(gx(0, j), 2.0 * x->value(0, j));
  }
}

TEST(GradientCheck, DetectsWrongBackward) {
  const double err = gradient_check(
      [](Graph& g, Var x) {
        Var y = g.add_node("wrong_square", {x}, 1, 1, {x.value().item() * x.value().item()},
                           [x](std::span<const double> go, std::span<double* const> in) {
                             if (in[0]) in[0][0] += go[0] * x.value().item();  // missing factor 2
                           });
        return y;
      },
      Tensor::scalar(3.0), 1e-4);
  EXPECT_GT(err, 0.4);
}

TEST(GradientCheck, RejectsNonScalarFunction) {
  EXPECT_THROW(gradient_check([](Graph&, Var x) { return x; }, Tensor::row({1, 2}), 1e-4), ContractViolation);
}

struct PrimitiveCase {
  std::string name;
  std::vector<std::array<std::size_t, 2>> shapes;
  MultiFn fn;
};

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> cases;
  auto unary = [&](std::string name, std::size_t r, std::size_t c, std::function<Var(Graph&, Var)> f) {
    cases.push_back({std::move(name), {{r, c}}, [f](Graph& g, const std::vector<Var>& v) {
                       return project(g, f(g, v[0]), 99);
                     }});
  };
  auto binary = [&](std::string name, std::array<std::size_t, 2> s0, std::array<std::size_t, 2> s1,
                    std::function<Var(Var, Var)> f) {
    cases.push_back({std::move(name), {s0, s1}, [f](Graph& g, const std::vector<Var>& v) {
                       return project(g, f(v[0], v[1]), 98);
                     }});
  };
  binary("add", {3, 4}, {3, 4}, [](Var a, Var b) { return add(a, b); });
  binary("sub", {3, 4}, {3, 4}, [](Var a, Var b) { return sub(a, b); });
  binary("mul", {3, 4}, {3, 4}, [](Var a, Var b) { return mul(a, b); });
  binary("add_row", {3, 4}, {1, 4}, [](Var a, Var b) { return add_row(a, b); });
  binary("mul_row", {3, 4}, {1, 4}, [](Var a, Var b) { return mul_row(a, b); });
  binary("matmul", {3, 4}, {4, 2}, [](Var a, Var b) { return matmul(a, b); });
  binary("matmul_nt", {3, 4}, {5, 4}, [](Var a, Var b) { return matmul_nt(a, b); });
  binary("concat_cols", {3, 2}, {3, 3}, [](Var a, Var b) { return concat_cols(a, b); });
  unary("scale", 3, 4, [](Graph&, Var a) { return scale(a, -1.7); });
  unary("transpose", 3, 4, [](Graph&, Var a) { return transpose(a); });
  unary("sigmoid", 3, 4, [](Graph&, Var a) { return sigmoid(a); });
  unary("gelu", 3, 4, [](Graph&, Var a) { return gelu(a); });
  unary("softmax_rows", 3, 4, [](Graph&, Var a) { return softmax_rows(a); });
  unary("layer_norm_rows", 3, 5, [](Graph&, Var a) { return layer_norm_rows(a); });
  unary("sum", 3, 4, [](Graph&, Var a) { return sum(a); });
  unary("mean", 3, 4, [](Graph&, Var a) { return mean(a); });
  unary("sum_squares", 3, 4, [](Graph&, Var a) { return sum_squares(a); });
  unary("segment_mean", 6, 3, [](Graph&, Var a) { return segment_mean(a, 3); });
  unary("slice_rows", 5, 3, [](Graph&, Var a) { return slice_rows(a, 1, 3); });
  unary("tile_rows", 2, 3, [](Graph&, Var a) { return tile_rows(a, 3); });
  unary("gather_rows", 4, 3, [](Graph&, Var a) {
    const std::size_t rows[] = {2, 0, 2, 3};
    return gather_rows(a, rows);
  });
  unary("apply_mask", 3, 4, [](Graph&, Var a) {
    return apply_mask(a, Tensor::from_rows({{1, 0, 1, 0}, {0, 1, 1, 0}, {1, 1, 0, 1}}));
  });
  unary("attention_causal", 6, 4, [](Graph&, Var a) { return attention(a, scale(a, 0.5), a, 3, 2, true); });
  unary("bce_sum", 1, 4, [](Graph&, Var a) {
    const double labels[] = {1, 0, 0, 1};
    return bce_sum(sigmoid(a), labels);
  });
  unary("softmax_cross_entropy_sum", 3, 4, [](Graph&, Var a) {
    const std::size_t targets[] = {1, 3, 0};
    return softmax_cross_entropy_sum(a, targets);
  });
  cases.push_back({"linear", {{3, 4}, {4, 2}, {1, 2}}, [](Graph& g, const std::vector<Var>& v) {
                     return project(g, linear(v[0], v[1], v[2]), 97);
                   }});
  return cases;
}

TEST(Primitives, FiniteDifferencesAtTenRandomPoints) {
  for (const auto& pc : primitive_cases()) {
    for (std::uint64_t point = 0; point < 10; ++point) {
      Rng rng(1000 + point);
      std::vector<Tensor> inputs;
      for (const auto& s : pc.shapes) inputs.push_back(normal_tensor(s[0], s[1], 1.0, rng));
      EXPECT_LT(oracle_rel_err(pc.fn, inputs), 1e-4) << pc.name << " at point " << point;
    }
  }
}

TEST(Primitives, GradientCheckAgreesWithOracle) {
  for (const auto& pc : primitive_cases()) {
    Rng rng(77);
    std::vector<ParamPtr> params;
    for (const auto& s : pc.shapes) params.push_back(make_parameter(pc.name, normal_tensor(s[0], s[1], 1.0, rng)));
    const double err = gradient_check(
        [&](Graph& g) {
          std::vector<Var> vars;
          for (const auto& p : params) vars.push_back(g.param(p));
          return pc.fn(g, vars);
        },
        params);
    EXPECT_LT(err, 1e-4) << pc.name;
  }
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  Rng rng(4);
  Graph g;
  const Tensor s = g.value(softmax_rows(g.constant(normal_tensor(5, 7, 10.0, rng))));
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double total = 0;
    for (double v : s.row_span(r)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Primitives, CausalAttentionIgnoresFuture) {
  Rng rng(8);
  const Tensor a = normal_tensor(4, 2, 1.0, rng);
  std::vector<double> changed = a.to_vector();
  changed[3 * 2] += 5.0;  // last row
  auto run = [](const Tensor& x) {
    Graph g;
    Var v = g.constant(x);
    return g.value(attention(v, v, v, 4, 1, true));
  };
  const Tensor before = run(a);
  const Tensor after = run(Tensor(4, 2, changed));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(before(r, c), after(r, c));
}

}  // namespace
}  // namespace dos
