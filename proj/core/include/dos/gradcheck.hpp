// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "dos/graph.hpp"

namespace dos {

/// Builds a scalar-valued subgraph from a single differentiable input.
using ScalarFn = std::function<Var(Graph&, Var)>;
/// Builds a scalar-valued graph that reads its parameters via Graph::param.
using ParamFn = std::function<Var(Graph&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
///
/// Stop-gradient outputs and discrete decisions are recorded at `point` and
/// replayed for every perturbed evaluation, so the finite differences measure
/// the surrogate the straight-through compositions differentiate.
double gradient_check(const ScalarFn& fn, const Tensor& point, double eps);

struct GradCheckOptions {
  double eps = 1e-4;
  /// 0 checks every coordinate; otherwise a seeded random subset per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

double gradient_check(const ParamFn& fn, std::span<const ParamPtr> params, const GradCheckOptions& opts = {});

}  // namespace dos
