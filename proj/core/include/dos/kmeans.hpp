// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "dos/random.hpp"
#include "dos/tensor.hpp"

namespace dos {

struct KMeansOptions {
  std::size_t max_iters = 50;
  double tol = 1e-6;  // relative objective change
};

struct KMeansResult {
  Tensor centroids;                     // k x d
  std::vector<std::size_t> assignment;  // per point
  std::vector<double> objective;        // sum of squared distances after each assignment step
  std::size_t iterations = 0;
  bool converged = false;  // assignments stopped changing
};

/// Lloyd's algorithm with k-means++ seeding. Clusters that go empty are
/// re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& opts = {});

/// Index of the nearest row of `centroids` for every row of `points` (squared
/// Euclidean distance, ties to the lowest index).
std::vector<std::size_t> nearest_rows(const Tensor& points, const Tensor& centroids);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace dos
