// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "dos/error.hpp"

namespace dos {

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data) : rows_(rows), cols_(cols) {
  if (rows * cols != data.size()) {
    std::ostringstream msg;
    msg << "tensor shape " << rows << "x" << cols << " does not match data length " << data.size();
    throw ContractViolation(msg.str());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream msg;
      msg << "non-finite tensor entry " << data[i] << " at flat index " << i;
      throw NumericError(msg.str());
    }
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return filled(rows, cols, 0.0); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, value));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor(n, n, std::move(v));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("from_rows: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(v));
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  if (r >= rows_) throw ContractViolation("row index out of range");
  return {data_->data() + r * cols_, cols_};
}

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on a non-scalar tensor");
  return (*data_)[0];
}

bool Tensor::identical(const Tensor& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  if (size() == 0) return true;
  return std::memcmp(data_->data(), other.data_->data(), size() * sizeof(double)) == 0;
}

}  // namespace dos
