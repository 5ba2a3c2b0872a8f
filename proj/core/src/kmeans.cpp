// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/kmeans.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Dense>

#include "dos/error.hpp"

namespace dos {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

std::vector<std::size_t> nearest_rows(const Tensor& points, const Tensor& centroids) {
  if (centroids.rows() == 0) throw ContractViolation("nearest_rows: empty codebook");
  if (points.cols() != centroids.cols()) throw ContractViolation("nearest_rows: width mismatch");
  const std::size_t n = points.rows(), k = centroids.rows(), d = points.cols();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> x(points.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::Map<const RowMat> c(centroids.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));

  // Expanded distances screen the candidates; the winner is decided on exact
  // differences among every code within the rounding margin of the minimum.
  const Eigen::VectorXd cn = c.rowwise().squaredNorm();
  const RowMat dots = x * c.transpose();
  const double cmax = cn.size() > 0 ? cn.maxCoeff() : 0.0;
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = dots.row(static_cast<Eigen::Index>(i));
    double approx_best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
      approx_best = std::min(approx_best, cn[static_cast<Eigen::Index>(j)] - 2.0 * row[static_cast<Eigen::Index>(j)]);
    const double xn = x.row(static_cast<Eigen::Index>(i)).squaredNorm();
    const double margin = 1e-9 * (xn + cmax) + 1e-300;
    const auto p = points.row_span(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (cn[static_cast<Eigen::Index>(j)] - 2.0 * row[static_cast<Eigen::Index>(j)] > approx_best + margin) continue;
      const double dist = squared_distance(p, centroids.row_span(j));
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

namespace {

std::vector<double> kmeanspp_seed(const Tensor& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> c(k * d);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy_n(x.row_span(pick).begin(), d, c.begin());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row_span(i), x.row_span(pick));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    std::copy_n(x.row_span(pick).begin(), d, c.begin() + static_cast<std::ptrdiff_t>(j * d));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row_span(i), x.row_span(pick)));
  }
  return c;
}

double objective(const Tensor& x, const Tensor& c, const std::vector<std::size_t>& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += squared_distance(x.row_span(i), c.row_span(a[i]));
  return s;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& opts) {
  const std::size_t n = points.rows(), d = points.cols();
  if (k == 0) throw ContractViolation("kmeans: k must be >= 1");
  if (k > n) throw ContractViolation("kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");

  KMeansResult res;
  res.centroids = Tensor(k, d, kmeanspp_seed(points, k, rng));
  res.assignment = nearest_rows(points, res.centroids);
  res.objective.push_back(objective(points, res.centroids, res.assignment));

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = res.assignment[i];
      ++counts[a];
      const auto p = points.row_span(i);
      for (std::size_t j = 0; j < d; ++j) sums[a * d + j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < d; ++j) sums[c * d + j] /= static_cast<double>(counts[c]);

    // Empty-cluster repair: move the centroid onto the worst-served point.
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      double worst = -1.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        const std::size_t a = res.assignment[i];
        const double dist = squared_distance(points.row_span(i), {sums.data() + a * d, d});
        if (dist > worst) {
          worst = dist;
          arg = i;
        }
      }
      taken[arg] = true;
      std::copy_n(points.row_span(arg).begin(), d, sums.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
    res.centroids = Tensor(k, d, std::move(sums));

    auto next = nearest_rows(points, res.centroids);
    const double prev_obj = res.objective.back();
    const double obj = objective(points, res.centroids, next);
    res.objective.push_back(obj);
    res.iterations = it;
    const bool changed = next != res.assignment;
    res.assignment = std::move(next);
    if (!changed) {
      res.converged = true;
      break;
    }
    if (prev_obj - obj <= opts.tol * prev_obj) break;
  }
  return res;
}

}  // namespace dos
