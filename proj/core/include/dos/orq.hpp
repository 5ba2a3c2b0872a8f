// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dos/graph.hpp"
#include "dos/random.hpp"
#include "dos/tensor.hpp"

namespace dos {

/// K trainable code vectors of full width d plus per-code usage counters.
/// Towers that share a codebook hold the same CodebookPtr.
struct Codebook {
  ParamPtr vectors;  // K x d
  std::vector<std::uint64_t> usage;

  std::size_t size() const { return vectors->value.rows(); }
  std::size_t dim() const { return vectors->value.cols(); }
  void record_usage(std::span<const std::size_t> codes);
  void reset_usage();
};
using CodebookPtr = std::shared_ptr<Codebook>;

CodebookPtr make_codebook(std::string name, std::size_t size, std::size_t dim, Rng& rng, double init_std = 0.1);

struct OrthoMap {
  ParamPtr weight;  // d x d
};

/// Two-layer perceptron d -> hidden -> d producing one score per dimension.
struct DimScorer {
  ParamPtr w1, b1, w2, b2;
};

struct OrqLayer {
  OrthoMap ortho;
  DimScorer scorer;
  CodebookPtr codebook;
  std::size_t k = 1;  // primary dimensions kept per position

  std::size_t dim() const { return ortho.weight->value.rows(); }
};

struct OrqStack {
  std::vector<OrqLayer> layers;

  std::size_t dim() const { return layers.empty() ? 0 : layers.front().dim(); }
  std::size_t depth() const { return layers.size(); }
  std::vector<ParamPtr> parameters() const;
};

struct OrqStackConfig {
  std::size_t dim = 32;
  std::size_t depth = 3;
  std::size_t codebook_size = 64;
  std::vector<std::size_t> primary_dims;  // per layer; empty means dim / 2 everywhere
  std::size_t scorer_hidden = 0;          // 0 means dim
};

/// Rotations start from a random orthogonal matrix. Pass `shared` (one per
/// layer) to reuse existing codebooks instead of creating new ones.
OrqStack make_orq_stack(const std::string& prefix, const OrqStackConfig& cfg, Rng& rng,
                        std::span<const CodebookPtr> shared = {});

/// Per-row 0/1 mask of the k largest scores; ties go to the lower index.
Tensor topk_mask(const Tensor& scores, std::size_t k);

/// X_orth = X * W^T, one row per position.
Var rotate(Graph& g, const OrqLayer& layer, Var x);

/// ||W W^T - I||_F^2
Var orth_penalty(Graph& g, const OrqLayer& layer);

struct PrimarySelection {
  Var scores;   // sigmoid(MLP(x)), n x d
  Tensor mask;  // top-k indicator, n x d
  Var x_pri;
  Var x_sec;
};

/// Splits the rotated features by the scorer's top-k. The scorer is trained
/// through x_pri = mask*x_orth + (s - sg(s))*x_orth, which leaves the forward
/// value unchanged.
PrimarySelection select_primary(Graph& g, const OrqLayer& layer, Var x, Var x_orth);

struct LayerQuantization {
  std::vector<std::size_t> index;  // nearest code per position
  Var code;                        // gathered code vectors, n x d
  Var masked_code;                 // code restricted to the primary mask
  Var quantized;                   // masked_code forward, identity gradient to x_pri
  Var x_resi;                      // x_pri - masked_code
};

/// Nearest-code assignment of x_pri over the full codebook width.
LayerQuantization quantize_layer(Graph& g, const OrqLayer& layer, Var x_pri, const Tensor& mask);

struct LayerTrace {
  Var input;
  Var x_orth;
  PrimarySelection selection;
  LayerQuantization quantization;
  Var x_next;  // x_sec + x_resi
};

struct QuantTrace {
  std::vector<LayerTrace> layers;
  Var leftover;  // x_next of the last layer
};

QuantTrace orq_forward(Graph& g, const OrqStack& stack, Var x);

/// Inverts the stack with the final leftover replaced by zero:
/// E_{L+1} = 0, E_l = (mask_l * C_l + E_{l+1}) * W_l.
Var decoder_free_reconstruct(Graph& g, const OrqStack& stack, const QuantTrace& trace);

/// Sum over layers of ||sg[x_pri] - C||^2 + beta * ||x_pri - sg[C]||^2.
Var vq_loss(Graph& g, const QuantTrace& trace, double beta);

/// Sets every codebook by k-means on the primary features it quantizes,
/// layer by layer. stacks[i] consumes inputs[i]; layers sharing a codebook
/// are fitted jointly on their pooled features.
void fit_codebooks_kmeans(std::span<const OrqStack* const> stacks, std::span<const Tensor> inputs, Rng& rng,
                          std::size_t max_points = 20000);

}  // namespace dos
