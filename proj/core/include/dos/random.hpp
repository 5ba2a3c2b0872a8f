// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "dos/tensor.hpp"

namespace dos {

using Rng = std::mt19937_64;

/// Independent generator for a named sub-stream ("data", "init", "shuffle",
/// ...) of a single user-facing seed.
Rng make_stream(std::uint64_t seed, std::string_view name);

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng);
Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);
/// Random orthogonal n x n matrix: Q factor of a Gaussian matrix, sign-fixed.
Tensor random_orthogonal(std::size_t n, Rng& rng);

}  // namespace dos
