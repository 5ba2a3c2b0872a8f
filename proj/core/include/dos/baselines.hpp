// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "dos/embeddings.hpp"
#include "dos/graph.hpp"
#include "dos/kmeans.hpp"
#include "dos/orq.hpp"
#include "dos/sid.hpp"

namespace dos {

/// Residual k-means: level l clusters what levels < l left over.
struct RQKMeansModel {
  std::vector<Tensor> codebooks;  // L tensors of K x d
};

struct RQKMeansFit {
  RQKMeansModel model;
  SidTable sids;
  std::vector<double> level_mse;  // mean squared residual norm after each level
  std::vector<KMeansResult> levels;
};

RQKMeansFit rq_kmeans_fit(const SemanticEmbeddingTable& table, std::size_t depth, std::size_t codebook_size,
                          std::size_t iters = 50, std::uint64_t seed = 0);

/// Codes of arbitrary rows under a fitted model, one SID per row.
std::vector<SemanticId> rq_kmeans_encode(const RQKMeansModel& model, const Tensor& rows);

struct RQVAEConfig {
  std::size_t depth = 3;
  std::size_t codebook_size = 64;
  std::size_t hidden = 0;  // 0 means 2 * dim
  double beta = 0.25;
  double lr = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool kmeans_init = true;
  bool dead_code_reset = true;

  nlohmann::json to_json() const;
};

/// Perceptron encoder, residual codebooks in latent space, perceptron decoder.
struct RQVAELiteModel {
  ParamPtr enc_w1, enc_b1, enc_w2, enc_b2;
  std::vector<CodebookPtr> codebooks;
  ParamPtr dec_w1, dec_b1, dec_w2, dec_b2;

  std::vector<ParamPtr> parameters() const;
};

RQVAELiteModel make_rq_vae(std::size_t dim, const RQVAEConfig& cfg);

struct RQVAEPass {
  Var latent;
  std::vector<std::vector<std::size_t>> codes;  // per level, per row
  Var quantized;                                // straight-through sum of codes
  Var recon;
  Var recon_loss;  // summed squared error, averaged over rows
  Var vq_loss;     // codebook + beta * commitment, averaged over rows
  Var total;
};

RQVAEPass rq_vae_forward(Graph& g, const RQVAELiteModel& model, const Tensor& rows, double beta);

struct RQVAEResult {
  RQVAELiteModel model;
  SidTable sids;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  double recon_mse = 0.0;          // mean squared reconstruction norm on the full table
};

/// Unsupervised training on reconstruction and VQ losses. Throws NumericError
/// naming the failing step on divergence.
RQVAEResult rq_vae_lite_train(const SemanticEmbeddingTable& table, const RQVAEConfig& cfg);

std::vector<SemanticId> rq_vae_encode(const RQVAELiteModel& model, const Tensor& rows);

/// Uniformly random codes for every item; a structure-free control.
SidTable random_sids(const SemanticEmbeddingTable& table, std::size_t depth, std::size_t codebook_size,
                     std::uint64_t seed);

}  // namespace dos
