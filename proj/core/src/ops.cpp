// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dos/error.hpp"

namespace dos {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(const Tensor& t) { return CMap(t.data().data(), t.rows(), t.cols()); }
CMap cmap(std::span<const double> s, std::size_t r, std::size_t c) { return CMap(s.data(), r, c); }
MMap mmap(double* p, std::size_t r, std::size_t c) { return MMap(p, r, c); }

std::string shape_str(const Tensor& t) {
  std::ostringstream s;
  s << t.rows() << "x" << t.cols();
  return s.str();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.value().shape() != b.value().shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                            shape_str(b.value()));
  }
}

void require_same_graph(const char* op, Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractViolation(std::string(op) + ": inputs from different graphs");
}

// Elementwise unary op given f(x) and f'(x, y).
template <class F, class D>
Var unary(const char* name, Var a, F f, D df) {
  const Tensor x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x.data()[i]);
  auto out = std::make_shared<std::vector<double>>(y);
  return a.graph->add_node(name, {a}, x.rows(), x.cols(), std::move(y),
                           [x, out, df](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * df(x.data()[i], (*out)[i]);
                           });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_graph("add", a, b);
  require_same_shape("add", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + y.data()[i];
  return a.graph->add_node("add", {a, b}, x.rows(), x.cols(), std::move(out),
                           [](std::span<const double> g, std::span<double* const> gin) {
                             for (int k = 0; k < 2; ++k) {
                               if (gin[k] == nullptr) continue;
                               for (std::size_t i = 0; i < g.size(); ++i) gin[k][i] += g[i];
                             }
                           });
}

Var sub(Var a, Var b) {
  require_same_graph("sub", a, b);
  require_same_shape("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] - y.data()[i];
  return a.graph->add_node("sub", {a, b}, x.rows(), x.cols(), std::move(out),
                           [](std::span<const double> g, std::span<double* const> gin) {
                             if (gin[0] != nullptr)
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                             if (gin[1] != nullptr)
                               for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i];
                           });
}

Var mul(Var a, Var b) {
  require_same_graph("mul", a, b);
  require_same_shape("mul", a, b);
  const Tensor x = a.value();
  const Tensor y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * y.data()[i];
  return a.graph->add_node("mul", {a, b}, x.rows(), x.cols(), std::move(out),
                           [x, y](std::span<const double> g, std::span<double* const> gin) {
                             if (gin[0] != nullptr)
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * y.data()[i];
                             if (gin[1] != nullptr)
                               for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * x.data()[i];
                           });
}

Var add_row(Var m, Var row) {
  require_same_graph("add_row", m, row);
  const Tensor& x = m.value();
  const Tensor& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols())
    throw ContractViolation("add_row: row " + shape_str(r) + " does not fit matrix " + shape_str(x));
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x(i, j) + r.data()[j];
  return m.graph->add_node("add_row", {m, row}, rows, cols, std::move(out),
                           [rows, cols](std::span<const double> g, std::span<double* const> gin) {
                             if (gin[0] != nullptr)
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                             if (gin[1] != nullptr)
                               for (std::size_t i = 0; i < rows; ++i)
                                 for (std::size_t j = 0; j < cols; ++j) gin[1][j] += g[i * cols + j];
                           });
}

Var mul_row(Var m, Var row) {
  require_same_graph("mul_row", m, row);
  const Tensor x = m.value();
  const Tensor r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols())
    throw ContractViolation("mul_row: row " + shape_str(r) + " does not fit matrix " + shape_str(x));
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x(i, j) * r.data()[j];
  return m.graph->add_node("mul_row", {m, row}, rows, cols, std::move(out),
                           [x, r, rows, cols](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < rows; ++i)
                               for (std::size_t j = 0; j < cols; ++j) {
                                 const double gij = g[i * cols + j];
                                 if (gin[0] != nullptr) gin[0][i * cols + j] += gij * r.data()[j];
                                 if (gin[1] != nullptr) gin[1][j] += gij * x(i, j);
                               }
                           });
}

Var scale(Var a, double s) {
  const Tensor& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * s;
  return a.graph->add_node("scale", {a}, x.rows(), x.cols(), std::move(out),
                           [s](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * s;
                           });
}

Var matmul(Var a, Var b) {
  require_same_graph("matmul", a, b);
  const Tensor x = a.value();
  const Tensor y = b.value();
  if (x.cols() != y.rows())
    throw ContractViolation("matmul: inner dimensions differ " + shape_str(x) + " * " + shape_str(y));
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  std::vector<double> out(m * n);
  mmap(out.data(), m, n).noalias() = cmap(x) * cmap(y);
  return a.graph->add_node("matmul", {a, b}, m, n, std::move(out),
                           [x, y, m, k, n](std::span<const double> g, std::span<double* const> gin) {
                             const CMap G = cmap(g, m, n);
                             if (gin[0] != nullptr) mmap(gin[0], m, k).noalias() += G * cmap(y).transpose();
                             if (gin[1] != nullptr) mmap(gin[1], k, n).noalias() += cmap(x).transpose() * G;
                           });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph("matmul_nt", a, b);
  const Tensor x = a.value();
  const Tensor y = b.value();
  if (x.cols() != y.cols())
    throw ContractViolation("matmul_nt: inner dimensions differ " + shape_str(x) + " * " + shape_str(y) + "^T");
  const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
  std::vector<double> out(m * n);
  mmap(out.data(), m, n).noalias() = cmap(x) * cmap(y).transpose();
  return a.graph->add_node("matmul_nt", {a, b}, m, n, std::move(out),
                           [x, y, m, k, n](std::span<const double> g, std::span<double* const> gin) {
                             const CMap G = cmap(g, m, n);
                             if (gin[0] != nullptr) mmap(gin[0], m, k).noalias() += G * cmap(y);
                             if (gin[1] != nullptr) mmap(gin[1], n, k).noalias() += G.transpose() * cmap(x);
                           });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  mmap(out.data(), c, r) = cmap(x).transpose();
  return a.graph->add_node("transpose", {a}, c, r, std::move(out),
                           [r, c](std::span<const double> g, std::span<double* const> gin) {
                             mmap(gin[0], r, c) += cmap(g, c, r).transpose();
                           });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = x.row_span(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += out[i * cols + j] = std::exp(r[j] - mx);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= z;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return a.graph->add_node("softmax_rows", {a}, rows, cols, std::move(out),
                           [y, rows, cols](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < rows; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * (*y)[i * cols + j];
                               for (std::size_t j = 0; j < cols; ++j)
                                 gin[0][i * cols + j] += (*y)[i * cols + j] * (g[i * cols + j] - dot);
                             }
                           });
}

Var layer_norm_rows(Var a, double eps) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw ContractViolation("layer_norm_rows: zero-width input");
  std::vector<double> out(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = x.row_span(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = (r[j] - mu) * inv;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return a.graph->add_node(
      "layer_norm_rows", {a}, rows, cols, std::move(out),
      [y, inv_std, rows, cols](std::span<const double> g, std::span<double* const> gin) {
        const double n = static_cast<double>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double mg = 0.0, mgy = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            mg += g[i * cols + j];
            mgy += g[i * cols + j] * (*y)[i * cols + j];
          }
          mg /= n;
          mgy /= n;
          for (std::size_t j = 0; j < cols; ++j)
            gin[0][i * cols + j] += (*inv_std)[i] * (g[i * cols + j] - mg - (*y)[i * cols + j] * mgy);
        }
      });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  return a.graph->add_node("sum", {a}, 1, 1, {s}, [n = x.size()](std::span<const double> g, std::span<double* const> gin) {
    for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_squares(Var a) {
  const Tensor x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return a.graph->add_node("sum_squares", {a}, 1, 1, {s},
                           [x](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < x.size(); ++i) gin[0][i] += 2.0 * g[0] * x.data()[i];
                           });
}

Var segment_mean(Var a, std::size_t segment) {
  const Tensor& x = a.value();
  if (segment == 0 || x.rows() % segment != 0)
    throw ContractViolation("segment_mean: rows " + std::to_string(x.rows()) + " not divisible by segment " +
                            std::to_string(segment));
  const std::size_t groups = x.rows() / segment, cols = x.cols();
  const double inv = 1.0 / static_cast<double>(segment);
  std::vector<double> out(groups * cols, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < cols; ++j) out[(r / segment) * cols + j] += x(r, j);
  for (double& v : out) v *= inv;
  const std::size_t rows = x.rows();
  return a.graph->add_node("segment_mean", {a}, groups, cols, std::move(out),
                           [rows, cols, segment, inv](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t j = 0; j < cols; ++j)
                                 gin[0][r * cols + j] += g[(r / segment) * cols + j] * inv;
                           });
}

Var concat_cols(Var a, Var b) {
  require_same_graph("concat_cols", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows()) throw ContractViolation("concat_cols: row counts differ");
  const std::size_t rows = x.rows(), ca = x.cols(), cb = y.cols(), c = ca + cb;
  std::vector<double> out(rows * c);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(x.row_span(i).begin(), ca, out.begin() + static_cast<std::ptrdiff_t>(i * c));
    std::copy_n(y.row_span(i).begin(), cb, out.begin() + static_cast<std::ptrdiff_t>(i * c + ca));
  }
  return a.graph->add_node("concat_cols", {a, b}, rows, c, std::move(out),
                           [rows, ca, cb, c](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < rows; ++i) {
                               if (gin[0] != nullptr)
                                 for (std::size_t j = 0; j < ca; ++j) gin[0][i * ca + j] += g[i * c + j];
                               if (gin[1] != nullptr)
                                 for (std::size_t j = 0; j < cb; ++j) gin[1][i * cb + j] += g[i * c + ca + j];
                             }
                           });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (begin + count > x.rows()) throw ContractViolation("slice_rows: range exceeds " + shape_str(x));
  const std::size_t cols = x.cols();
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return a.graph->add_node("slice_rows", {a}, count, cols, std::move(out),
                           [begin, cols](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][begin * cols + i] += g[i];
                           });
}

Var tile_rows(Var a, std::size_t times) {
  const Tensor& x = a.value();
  const std::size_t n = x.size();
  std::vector<double> out;
  out.reserve(n * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.data().begin(), x.data().end());
  return a.graph->add_node("tile_rows", {a}, x.rows() * times, x.cols(), std::move(out),
                           [n](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][i % n] += g[i];
                           });
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  const Tensor& t = table.value();
  const std::size_t cols = t.cols();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  for (std::size_t r : rows) {
    if (r >= t.rows()) throw ContractViolation("gather_rows: index " + std::to_string(r) + " out of range");
    const auto src = t.row_span(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return table.graph->add_node("gather_rows", {table}, rows.size(), cols, std::move(out),
                               [idx = std::move(idx), cols](std::span<const double> g, std::span<double* const> gin) {
                                 for (std::size_t i = 0; i < idx.size(); ++i)
                                   for (std::size_t j = 0; j < cols; ++j) gin[0][idx[i] * cols + j] += g[i * cols + j];
                               });
}

Var apply_mask(Var a, const Tensor& mask) {
  const Tensor& x = a.value();
  if (mask.shape() != x.shape()) throw ContractViolation("apply_mask: mask shape " + shape_str(mask) + " vs " + shape_str(x));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.data()[i] != 0.0 ? x.data()[i] : 0.0;
  return a.graph->add_node("apply_mask", {a}, x.rows(), x.cols(), std::move(out),
                           [mask](std::span<const double> g, std::span<double* const> gin) {
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (mask.data()[i] != 0.0) gin[0][i] += g[i];
                           });
}

Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads, bool causal) {
  require_same_graph("attention", q, k);
  require_same_graph("attention", q, v);
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const Tensor Q = q.value(), K = k.value(), V = v.value();
  const std::size_t rows = Q.rows(), cols = Q.cols();
  if (seq_len == 0 || rows % seq_len != 0) throw ContractViolation("attention: rows not divisible by seq_len");
  if (heads == 0 || cols % heads != 0) throw ContractViolation("attention: width not divisible by head count");
  const std::size_t blocks = rows / seq_len, dh = cols / heads, S = seq_len;
  const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<double>>(blocks * heads * S * S, 0.0);
  std::vector<double> out(rows * cols, 0.0);
  const CMap Qm = cmap(Q), Km = cmap(K), Vm = cmap(V);
  MMap Om = mmap(out.data(), rows, cols);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      MMap P = mmap(probs->data() + (b * heads + h) * S * S, S, S);
      const auto Qb = Qm.block(b * S, h * dh, S, dh);
      const auto Kb = Km.block(b * S, h * dh, S, dh);
      const auto Vb = Vm.block(b * S, h * dh, S, dh);
      P.noalias() = (Qb * Kb.transpose()) * scale_f;
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t last = causal ? i : S - 1;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= last; ++j) mx = std::max(mx, P(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j <= last; ++j) z += P(i, j) = std::exp(P(i, j) - mx);
        for (std::size_t j = 0; j <= last; ++j) P(i, j) /= z;
        for (std::size_t j = last + 1; j < S; ++j) P(i, j) = 0.0;
      }
      Om.block(b * S, h * dh, S, dh).noalias() = P * Vb;
    }
  }
  return q.graph->add_node(
      "attention", {q, k, v}, rows, cols, std::move(out),
      [Q, K, V, probs, blocks, heads, dh, S, rows, cols, scale_f](std::span<const double> g,
                                                                   std::span<double* const> gin) {
        const CMap G = cmap(g, rows, cols);
        const CMap Qm = cmap(Q), Km = cmap(K), Vm = cmap(V);
        RowMat dP(S, S), dA(S, S);
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const CMap P(probs->data() + (b * heads + h) * S * S, S, S);
            const auto Gb = G.block(b * S, h * dh, S, dh);
            if (gin[2] != nullptr) mmap(gin[2], rows, cols).block(b * S, h * dh, S, dh).noalias() += P.transpose() * Gb;
            if (gin[0] == nullptr && gin[1] == nullptr) continue;
            dP.noalias() = Gb * Vm.block(b * S, h * dh, S, dh).transpose();
            for (std::size_t i = 0; i < S; ++i) {
              const double dot = dP.row(i).dot(P.row(i));
              for (std::size_t j = 0; j < S; ++j) dA(i, j) = P(i, j) * (dP(i, j) - dot);
            }
            if (gin[0] != nullptr)
              mmap(gin[0], rows, cols).block(b * S, h * dh, S, dh).noalias() +=
                  scale_f * (dA * Km.block(b * S, h * dh, S, dh));
            if (gin[1] != nullptr)
              mmap(gin[1], rows, cols).block(b * S, h * dh, S, dh).noalias() +=
                  scale_f * (dA.transpose() * Qm.block(b * S, h * dh, S, dh));
          }
        }
      });
}

Var stop_gradient(Var a) {
  Tensor value = a.graph->frozen(a.value());
  return a.graph->add_node("stop_gradient", {a}, std::move(value), nullptr);
}

Var bce_sum(Var prob, std::span<const double> labels, double clamp) {
  const Tensor p = prob.value();
  if (labels.size() != p.size())
    throw ContractViolation("bce_sum: " + std::to_string(labels.size()) + " labels for " + std::to_string(p.size()) +
                            " predictions");
  if (p.size() == 0) throw ContractViolation("bce_sum: empty batch");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw ContractViolation("bce_sum: labels must be 0 or 1");
  std::vector<double> y(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double c = std::clamp(p.data()[i], clamp, 1.0 - clamp);
    loss -= y[i] * std::log(c) + (1.0 - y[i]) * std::log(1.0 - c);
  }
  return prob.graph->add_node("bce_sum", {prob}, 1, 1, {loss},
                              [p, y = std::move(y), clamp](std::span<const double> g, std::span<double* const> gin) {
                                for (std::size_t i = 0; i < p.size(); ++i) {
                                  const double v = p.data()[i];
                                  if (v < clamp || v > 1.0 - clamp) continue;
                                  gin[0][i] += g[0] * (-y[i] / v + (1.0 - y[i]) / (1.0 - v));
                                }
                              });
}

Var softmax_cross_entropy_sum(Var logits, std::span<const std::size_t> targets) {
  const Tensor& x = logits.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (targets.size() != rows) throw ContractViolation("softmax_cross_entropy_sum: one target per row required");
  auto probs = std::make_shared<std::vector<double>>(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] >= cols) throw ContractViolation("softmax_cross_entropy_sum: target out of range");
    const auto r = x.row_span(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (*probs)[i * cols + j] = std::exp(r[j] - mx);
    for (std::size_t j = 0; j < cols; ++j) (*probs)[i * cols + j] /= z;
    loss -= r[targets[i]] - mx - std::log(z);
  }
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return logits.graph->add_node("softmax_cross_entropy_sum", {logits}, 1, 1, {loss},
                                [probs, t = std::move(t), cols](std::span<const double> g, std::span<double* const> gin) {
                                  for (std::size_t i = 0; i < t.size(); ++i) {
                                    for (std::size_t j = 0; j < cols; ++j) gin[0][i * cols + j] += g[0] * (*probs)[i * cols + j];
                                    gin[0][i * cols + t[i]] -= g[0];
                                  }
                                });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace dos
