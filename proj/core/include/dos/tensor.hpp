// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace dos {

/// Immutable row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
///
/// Every entry is finite; construction throws NumericError otherwise. The
/// storage is shared between copies, so tensors are cheap to pass by value
/// and safe to share across threads.
class Tensor {
 public:
  Tensor();
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool empty() const { return size() == 0; }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  std::span<const double> row_span(std::size_t r) const;
  double operator()(std::size_t r, std::size_t c) const { return (*data_)[r * cols_ + c]; }
  double item() const;

  std::vector<double> to_vector() const { return *data_; }

  /// Same shape and bit-for-bit identical entries.
  bool identical(const Tensor& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace dos
