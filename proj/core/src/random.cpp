// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/random.hpp"

#include <Eigen/Dense>
#include <vector>

namespace dos {

Rng make_stream(std::uint64_t seed, std::string_view name) {
  // FNV-1a, stable across standard libraries unlike std::hash.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor(rows, cols, std::move(v));
}

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor(rows, cols, std::move(v));
}

Tensor random_orthogonal(std::size_t n, Rng& rng) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Tensor g = normal_tensor(n, n, 1.0, rng);
  const RowMat a = Eigen::Map<const RowMat>(g.data().data(), n, n);
  Eigen::HouseholderQR<RowMat> qr(a);
  RowMat q = qr.householderQ();
  const RowMat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return Tensor(n, n, std::vector<double>(q.data(), q.data() + n * n));
}

}  // namespace dos
