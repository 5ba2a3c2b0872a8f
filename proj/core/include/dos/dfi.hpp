// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dos/embeddings.hpp"
#include "dos/graph.hpp"
#include "dos/orq.hpp"
#include "dos/sid.hpp"

namespace dos {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t depth = 3;                  // quantization levels L
  std::size_t codebook_size = 64;         // K
  std::vector<std::size_t> primary_dims;  // k per layer; empty means dim / 2
  std::size_t seq_len = 10;               // S, user click history length
  std::size_t item_seq_len = 0;           // 0 means seq_len
  std::size_t heads = 1;
  std::size_t ffn_hidden = 0;     // 0 means 2 * dim
  std::size_t scorer_hidden = 0;  // 0 means dim
  std::size_t head_hidden = 0;    // 0 means dim
  bool mlp_encoder = false;
  bool unshared_codebook = false;
  bool with_decoder = false;
  bool mutual_first_layer_only = false;

  std::size_t item_len() const { return item_seq_len == 0 ? seq_len : item_seq_len; }
};

enum class EncoderKind { transformer, mlp };

/// Either a pre-norm single-layer transformer encoder or, for the ablation,
/// a position-wise two-layer perceptron.
struct EncoderParams {
  EncoderKind kind = EncoderKind::transformer;
  std::size_t heads = 1;
  // transformer
  ParamPtr pos;  // max_len x d
  ParamPtr ln1_gain, ln1_bias, wq, wk, wv, wo, bo;
  ParamPtr ln2_gain, ln2_bias, ff_w1, ff_b1, ff_w2, ff_b2;
  // mlp
  ParamPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  std::vector<ParamPtr> parameters() const;
  std::size_t max_len() const { return pos ? pos->value.rows() : 0; }
};

/// max_len 0 builds a block without a positional table.
EncoderParams make_transformer_encoder(const std::string& prefix, std::size_t dim, std::size_t max_len,
                                       std::size_t heads, std::size_t ffn_hidden, Rng& rng);
EncoderParams make_mlp_encoder(const std::string& prefix, std::size_t dim, Rng& rng);

/// Encodes blocks of `seq_len` consecutive rows independently. Encoders
/// without a positional table (the item tower) treat each block as a set.
Var encode(Graph& g, const EncoderParams& params, Var rows, std::size_t seq_len);

/// One pre-norm attention + feed-forward block without positional terms.
Var transformer_block(Graph& g, const EncoderParams& params, Var h, std::size_t seq_len, bool causal);

/// MLP over [E_user ; E_item] with a sigmoid output.
struct PredictionHead {
  ParamPtr w1, b1, w2, b2;
};

/// Linear probe from pooled primary features to a label logit.
struct MiHead {
  ParamPtr w, b;
};

/// Two-layer perceptron reconstruction decoder, only for the decoder ablation.
struct Decoder {
  ParamPtr w1, b1, w2, b2;
};

class DfiModel {
 public:
  DfiModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  EncoderParams user_encoder, item_encoder;
  OrqStack user_orq, item_orq;
  ParamPtr user_agg, item_agg;  // d x d
  PredictionHead head;
  std::vector<MiHead> user_mi, item_mi;  // one per layer
  std::optional<Decoder> user_decoder, item_decoder;

  /// Every distinct parameter, in a fixed order.
  std::vector<ParamPtr> parameters() const;
  /// Distinct codebooks (L when shared, 2L otherwise).
  std::vector<CodebookPtr> codebooks() const;

 private:
  ModelConfig cfg_;
};

/// Dense inputs for a batch of samples: user rows are the click sequences, item
/// rows repeat each target item_len() times.
struct Batch {
  Tensor user_rows;  // (B*S) x d
  Tensor item_rows;  // (B*S_item) x d
  std::vector<double> labels;
  std::size_t size = 0;
};

Batch make_batch(const SemanticEmbeddingTable& table, std::span<const InteractionSample> samples,
                 const ModelConfig& cfg);

/// Sum over layers of quantized vectors, mean over positions, then a d x d map.
Var aggregate(Graph& g, const QuantTrace& trace, const ParamPtr& agg, std::size_t seq_len);

/// Sigmoid output of the head on the concatenated tower embeddings (B x 1).
Var predict(Graph& g, const PredictionHead& head, Var e_user, Var e_item);

/// Summed binary cross-entropy, predictions clamped to [1e-7, 1 - 1e-7].
Var bce(Graph& g, Var prob, std::span<const double> labels);

struct TowerPass {
  Var encoded;
  QuantTrace trace;
  Var embedding;
};

struct ModelPass {
  TowerPass user;
  TowerPass item;
  Var prob;
};

ModelPass forward(Graph& g, const DfiModel& model, const Batch& batch);

/// Binary cross-entropy of per-layer linear probes on mean-pooled primary
/// features, summed over towers and layers. Minimising it tightens a
/// variational lower bound on I(X_pri; Y).
Var mutual_loss(Graph& g, const DfiModel& model, const QuantTrace& user_trace, const QuantTrace& item_trace,
                std::span<const double> labels);

struct LossValues {
  double total = 0, bce = 0, orth = 0, mutual = 0, recon = 0, vq = 0;
};

struct LossTerms {
  Var total, bce, orth, mutual, recon, vq;
  LossValues values() const;
};

struct LossOutput {
  ModelPass pass;
  LossTerms terms;
};

/// L = L_BCE + alpha * (L_Orth + L_Mutual) + L_Recon + L_VQ.
/// L_Recon and L_VQ are summed over samples and averaged over positions.
LossOutput total_loss(Graph& g, const DfiModel& model, const Batch& batch, double alpha, double beta);

/// Positive-class probabilities for each sample.
std::vector<double> predict_scores(const DfiModel& model, const SemanticEmbeddingTable& table,
                                   std::span<const InteractionSample> samples, std::size_t batch_size = 256);

/// Runs each item through the item tower; SID level l is the layer-l code at
/// position 0.
SidTable export_item_sids(const DfiModel& model, const SemanticEmbeddingTable& table, std::size_t batch_size = 256);

}  // namespace dos
