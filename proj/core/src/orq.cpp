// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/orq.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <numeric>

#include "dos/error.hpp"
#include "dos/kmeans.hpp"
#include "dos/ops.hpp"

namespace dos {

void Codebook::record_usage(std::span<const std::size_t> codes) {
  if (usage.size() != size()) usage.assign(size(), 0);
  for (std::size_t c : codes) ++usage.at(c);
}

void Codebook::reset_usage() { usage.assign(size(), 0); }

CodebookPtr make_codebook(std::string name, std::size_t size, std::size_t dim, Rng& rng, double init_std) {
  if (size == 0) throw ContractViolation("codebook size must be >= 1");
  auto cb = std::make_shared<Codebook>();
  cb->vectors = make_parameter(std::move(name), normal_tensor(size, dim, init_std, rng));
  cb->usage.assign(size, 0);
  return cb;
}

std::vector<ParamPtr> OrqStack::parameters() const {
  std::vector<ParamPtr> out;
  for (const auto& l : layers) {
    out.insert(out.end(), {l.ortho.weight, l.scorer.w1, l.scorer.b1, l.scorer.w2, l.scorer.b2});
    if (std::find(out.begin(), out.end(), l.codebook->vectors) == out.end()) out.push_back(l.codebook->vectors);
  }
  return out;
}

OrqStack make_orq_stack(const std::string& prefix, const OrqStackConfig& cfg, Rng& rng,
                        std::span<const CodebookPtr> shared) {
  if (cfg.depth == 0) throw ContractViolation("ORQ stack needs at least one layer");
  if (!shared.empty() && shared.size() != cfg.depth) throw ContractViolation("one shared codebook per layer required");
  if (!cfg.primary_dims.empty() && cfg.primary_dims.size() != cfg.depth)
    throw ContractViolation("primary_dims must list one k per layer");
  const std::size_t d = cfg.dim;
  const std::size_t h = cfg.scorer_hidden == 0 ? d : cfg.scorer_hidden;

  OrqStack stack;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    OrqLayer layer;
    layer.k = cfg.primary_dims.empty() ? std::max<std::size_t>(1, d / 2) : cfg.primary_dims[l];
    if (layer.k < 1 || layer.k > d) throw ContractViolation("primary dimension count must satisfy 1 <= k <= d");
    layer.ortho.weight = make_parameter(p + ".w_orth", random_orthogonal(d, rng));
    layer.scorer.w1 = make_parameter(p + ".scorer.w1", normal_tensor(d, h, 1.0 / std::sqrt(double(d)), rng));
    layer.scorer.b1 = make_parameter(p + ".scorer.b1", Tensor::zeros(1, h));
    layer.scorer.w2 = make_parameter(p + ".scorer.w2", normal_tensor(h, d, 1.0 / std::sqrt(double(h)), rng));
    layer.scorer.b2 = make_parameter(p + ".scorer.b2", Tensor::zeros(1, d));
    if (!shared.empty()) {
      if (!shared[l] || shared[l]->dim() != d || shared[l]->size() != cfg.codebook_size)
        throw ContractViolation("shared codebook shape does not match the stack");
      layer.codebook = shared[l];
    } else {
      layer.codebook = make_codebook(p + ".codebook", cfg.codebook_size, d, rng);
    }
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

Tensor topk_mask(const Tensor& scores, std::size_t k) {
  const std::size_t rows = scores.rows(), cols = scores.cols();
  if (k > cols) throw ContractViolation("topk_mask: k exceeds width");
  std::vector<double> mask(scores.size(), 0.0);
  std::vector<std::size_t> order(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = scores.row_span(i);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return r[a] > r[b] || (r[a] == r[b] && a < b); });
    for (std::size_t j = 0; j < k; ++j) mask[i * cols + order[j]] = 1.0;
  }
  return Tensor(rows, cols, std::move(mask));
}

Var rotate(Graph& g, const OrqLayer& layer, Var x) {
  if (x.cols() != layer.dim())
    throw ContractViolation("rotate: input width " + std::to_string(x.cols()) + " but layer width " +
                            std::to_string(layer.dim()));
  return matmul_nt(x, g.param(layer.ortho.weight));
}

Var orth_penalty(Graph& g, const OrqLayer& layer) {
  const Var w = g.param(layer.ortho.weight);
  const Var eye = g.constant(Tensor::identity(layer.dim()));
  return sum_squares(matmul_nt(w, w) - eye);
}

PrimarySelection select_primary(Graph& g, const OrqLayer& layer, Var x, Var x_orth) {
  const auto& s = layer.scorer;
  const Var hidden = gelu(linear(x, g.param(s.w1), g.param(s.b1)));
  const Var scores = sigmoid(linear(hidden, g.param(s.w2), g.param(s.b2)));
  Tensor mask = g.frozen(topk_mask(scores.value(), layer.k));

  std::vector<double> inv(mask.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = mask.data()[i] != 0.0 ? 0.0 : 1.0;
  const Tensor complement(mask.rows(), mask.cols(), std::move(inv));

  const Var hard = apply_mask(x_orth, mask);
  const Var st = (scores - stop_gradient(scores)) * x_orth;
  return PrimarySelection{scores, mask, hard + st, apply_mask(x_orth, complement)};
}

LayerQuantization quantize_layer(Graph& g, const OrqLayer& layer, Var x_pri, const Tensor& mask) {
  const Tensor& codes = layer.codebook->vectors->value;
  if (codes.rows() == 0) throw ContractViolation("quantize_layer: empty codebook");
  if (x_pri.cols() != codes.cols()) throw ContractViolation("quantize_layer: width mismatch with codebook");

  std::vector<std::size_t> nearest = nearest_rows(x_pri.value(), codes);
  std::vector<double> as_double(nearest.begin(), nearest.end());
  const std::size_t n = as_double.size();
  const Tensor replayed = g.frozen(Tensor(1, n, std::move(as_double)));
  for (std::size_t i = 0; i < nearest.size(); ++i) nearest[i] = static_cast<std::size_t>(replayed.data()[i]);

  LayerQuantization q;
  q.code = gather_rows(g.param(layer.codebook->vectors), nearest);
  q.masked_code = apply_mask(q.code, mask);
  q.x_resi = x_pri - q.masked_code;
  q.quantized = stop_gradient(q.masked_code) + (x_pri - stop_gradient(x_pri));
  q.index = std::move(nearest);
  return q;
}

QuantTrace orq_forward(Graph& g, const OrqStack& stack, Var x) {
  QuantTrace trace;
  Var current = x;
  for (const auto& layer : stack.layers) {
    LayerTrace lt;
    lt.input = current;
    lt.x_orth = rotate(g, layer, current);
    lt.selection = select_primary(g, layer, current, lt.x_orth);
    lt.quantization = quantize_layer(g, layer, lt.selection.x_pri, lt.selection.mask);
    lt.x_next = lt.selection.x_sec + lt.quantization.x_resi;
    current = lt.x_next;
    trace.layers.push_back(std::move(lt));
  }
  trace.leftover = current;
  return trace;
}

Var decoder_free_reconstruct(Graph& g, const OrqStack& stack, const QuantTrace& trace) {
  if (trace.layers.size() != stack.depth()) throw ContractViolation("trace does not match stack depth");
  const Var& last = trace.layers.back().quantization.masked_code;
  Var recon = g.constant(Tensor::zeros(last.rows(), last.cols()));
  for (std::size_t l = stack.depth(); l-- > 0;) {
    recon = matmul(trace.layers[l].quantization.masked_code + recon, g.param(stack.layers[l].ortho.weight));
  }
  return recon;
}

Var vq_loss(Graph& g, const QuantTrace& trace, double beta) {
  if (beta < 0.0) throw ContractViolation("vq_loss: beta must be >= 0");
  if (trace.layers.empty()) throw ContractViolation("vq_loss: empty trace");
  Var total = g.constant(Tensor::scalar(0.0));
  for (const auto& lt : trace.layers) {
    const Var x = lt.selection.x_pri;
    const Var c = lt.quantization.code;
    total = total + sum_squares(stop_gradient(x) - c) + scale(sum_squares(x - stop_gradient(c)), beta);
  }
  return total;
}

void fit_codebooks_kmeans(std::span<const OrqStack* const> stacks, std::span<const Tensor> inputs, Rng& rng,
                          std::size_t max_points) {
  if (stacks.size() != inputs.size()) throw ContractViolation("fit_codebooks_kmeans: one input per stack");
  if (stacks.empty()) return;
  const std::size_t depth = stacks.front()->depth();
  for (const auto* s : stacks)
    if (s->depth() != depth) throw ContractViolation("fit_codebooks_kmeans: stacks differ in depth");

  std::vector<Tensor> current(inputs.begin(), inputs.end());
  for (std::size_t l = 0; l < depth; ++l) {
    std::vector<Tensor> primaries(stacks.size());
    for (std::size_t i = 0; i < stacks.size(); ++i) {
      Graph g;
      const OrqLayer& layer = stacks[i]->layers[l];
      const Var x = g.constant(current[i]);
      primaries[i] = select_primary(g, layer, x, rotate(g, layer, x)).x_pri.value();
    }

    // Pool the features of every stack that quantizes into the same codebook.
    // Groups follow stack order so the rng draws do not depend on addresses.
    std::vector<std::pair<Codebook*, std::vector<std::size_t>>> owners;
    for (std::size_t i = 0; i < stacks.size(); ++i) {
      Codebook* book = stacks[i]->layers[l].codebook.get();
      auto it = std::find_if(owners.begin(), owners.end(), [&](const auto& o) { return o.first == book; });
      if (it == owners.end()) it = owners.insert(owners.end(), {book, {}});
      it->second.push_back(i);
    }
    for (auto& [book, members] : owners) {
      std::vector<double> pooled;
      std::size_t rows = 0;
      for (std::size_t i : members) {
        pooled.insert(pooled.end(), primaries[i].data().begin(), primaries[i].data().end());
        rows += primaries[i].rows();
      }
      const std::size_t d = primaries[members.front()].cols();
      Tensor points(rows, d, std::move(pooled));
      if (rows > max_points) {
        std::vector<std::size_t> pick(rows);
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(max_points);
        std::sort(pick.begin(), pick.end());
        std::vector<double> sub;
        sub.reserve(max_points * d);
        for (std::size_t r : pick) sub.insert(sub.end(), points.row_span(r).begin(), points.row_span(r).end());
        points = Tensor(max_points, d, std::move(sub));
      }
      const std::size_t k = book->size();
      if (points.rows() < k) throw ContractViolation("fit_codebooks_kmeans: fewer points than codes");
      book->vectors->value = kmeans(points, k, rng).centroids;
      book->reset_usage();
    }

    for (std::size_t i = 0; i < stacks.size(); ++i) {
      Graph g;
      const OrqLayer& layer = stacks[i]->layers[l];
      const Var x = g.constant(current[i]);
      const auto sel = select_primary(g, layer, x, rotate(g, layer, x));
      const auto q = quantize_layer(g, layer, sel.x_pri, sel.mask);
      current[i] = (sel.x_sec + q.x_resi).value();
    }
  }
}

}  // namespace dos
