// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "dos/error.hpp"

namespace dos {
namespace {

double evaluate_replay(const ParamFn& fn, const std::shared_ptr<FreezeTape>& tape) {
  Graph g;
  g.set_freeze(tape, FreezeMode::replay);
  const Var y = fn(g);
  const double v = g.value(y).item();
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite perturbed value");
  return v;
}

}  // namespace

double gradient_check(const ScalarFn& fn, const Tensor& point, double eps) {
  const ParamPtr x = make_parameter("gradient_check.point", point);
  const ParamPtr params[] = {x};
  return gradient_check([&](Graph& g) { return fn(g, g.param(x)); }, params, GradCheckOptions{eps, 0, 0});
}

double gradient_check(const ParamFn& fn, std::span<const ParamPtr> params, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw ContractViolation("gradient_check: eps must be positive");

  auto tape = std::make_shared<FreezeTape>();
  Gradients grads;
  {
    Graph g;
    g.set_freeze(tape, FreezeMode::record);
    const Var y = fn(g);
    if (g.value(y).size() != 1) throw ContractViolation("gradient_check: function is not scalar-valued");
    grads = g.backward(y);
  }

  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  for (const ParamPtr& p : params) {
    const Tensor original = p->value;
    const std::size_t n = original.size();
    std::vector<double> analytic(n, 0.0);
    if (grads.contains(*p)) {
      const auto a = grads.at(*p).data();
      std::copy(a.begin(), a.end(), analytic.begin());
    }

    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_param != 0 && opts.max_coords_per_param < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
    }

    for (std::size_t c : coords) {
      std::vector<double> buf = original.to_vector();
      buf[c] = original.data()[c] + opts.eps;
      p->value = Tensor(original.rows(), original.cols(), buf);
      const double plus = evaluate_replay(fn, tape);
      buf[c] = original.data()[c] - opts.eps;
      p->value = Tensor(original.rows(), original.cols(), buf);
      const double minus = evaluate_replay(fn, tape);
      p->value = original;

      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double err = std::abs(analytic[c] - numeric) / std::max(1.0, std::abs(analytic[c]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dos
