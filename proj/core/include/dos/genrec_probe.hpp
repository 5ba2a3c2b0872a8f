// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dos/dfi.hpp"
#include "dos/embeddings.hpp"
#include "dos/graph.hpp"
#include "dos/sid.hpp"

namespace dos {

/// Token streams over a level-offset vocabulary: level l code c is token
/// c + l * K. Each stream is the flattened history followed by the target SID.
struct SidSequenceDataset {
  std::size_t depth = 0;
  std::size_t codebook_size = 0;
  std::size_t history_len = 0;             // items per history
  std::vector<std::vector<std::size_t>> streams;  // (history_len + 1) * depth tokens each
  std::vector<std::size_t> targets;               // target item row

  std::size_t size() const { return streams.size(); }
  std::size_t vocab() const { return depth * codebook_size; }
  std::size_t stream_len() const { return (history_len + 1) * depth; }
};

std::size_t sid_token(std::size_t level, std::size_t code, std::size_t codebook_size);

/// Builds one stream per positive sample. `sids` must list items in table row
/// order.
SidSequenceDataset build_sid_dataset(std::span<const InteractionSample> samples, const SidTable& sids,
                                     std::size_t codebook_size);

struct ProbeConfig {
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 0;  // 0 means 2 * dim
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::size_t beam = 10;
  std::size_t k = 10;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct ProbeModel {
  std::size_t depth = 0;
  std::size_t codebook_size = 0;
  ParamPtr tokens;  // (L*K) x dim
  ParamPtr pos;     // max_len x dim
  std::vector<EncoderParams> blocks;
  ParamPtr norm_gain, norm_bias;
  std::vector<ParamPtr> head_w, head_b;  // per level, dim x K

  std::vector<ParamPtr> parameters() const;
};

ProbeModel make_probe(std::size_t depth, std::size_t codebook_size, std::size_t max_len, const ProbeConfig& cfg);

/// Final hidden states for equal-length token streams, (B*T) x dim.
Var probe_hidden(Graph& g, const ProbeModel& m, const std::vector<std::vector<std::size_t>>& streams);

/// Code logits (B x K) for the token after the last position, whose level is
/// the stream length modulo depth.
Tensor probe_next_logits(const ProbeModel& m, const std::vector<std::vector<std::size_t>>& prefixes);

/// Mean next-token cross-entropy under teacher forcing over every position.
Var probe_loss(Graph& g, const ProbeModel& m, std::span<const std::vector<std::size_t>> streams);

struct ProbeTrainResult {
  ProbeModel model;
  std::vector<double> val_loss;  // index 0 is before any update
  std::vector<double> train_loss;
};

ProbeTrainResult probe_train(const SidSequenceDataset& train, const SidSequenceDataset& val, const ProbeConfig& cfg);

/// Mean loss over a dataset, evaluated in chunks.
double probe_dataset_loss(const ProbeModel& m, const SidSequenceDataset& data, std::size_t batch = 256);

/// Fraction of next tokens whose argmax matches under teacher forcing.
double next_token_accuracy(const ProbeModel& m, const SidSequenceDataset& data);

struct Beam {
  std::vector<std::size_t> codes;
  double log_prob = 0.0;
};

/// Expands every beam by all codes at each level and keeps the `width` best.
/// `step` maps partial code sequences to per-code log-probabilities. Ties
/// resolve toward the lexicographically smaller sequence.
using BeamStep = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<std::size_t>>&)>;
std::vector<Beam> beam_search(const BeamStep& step, std::size_t depth, std::size_t width);

/// Mean Hit@k: the target item's SID among the top-k beams generated from the
/// history. Items sharing a SID share credit.
double probe_eval(const ProbeModel& m, const SidSequenceDataset& test, const SidTable& sids, const ProbeConfig& cfg);

/// {scheme: hit@k}
nlohmann::json probe_report(const std::map<std::string, double>& hits);

}  // namespace dos
