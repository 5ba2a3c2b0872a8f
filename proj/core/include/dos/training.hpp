// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dos/dfi.hpp"
#include "dos/embeddings.hpp"
#include "dos/error.hpp"
#include "dos/graph.hpp"
#include "dos/orq.hpp"

namespace dos {

struct TrainConfig {
  std::string profile = "desk";
  double alpha = 0.1;  // weight of orthogonality and mutual-information terms
  double beta = 0.25;  // commitment weight
  ModelConfig model;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  bool kmeans_init = true;
  bool dead_code_reset = true;
  std::string table_path;
  std::string samples_path;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected; missing keys keep the profile defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// d=32, K=64, S=10, batch 128.
TrainConfig desk_profile();
/// d=1024, K=1024, batch 1024.
TrainConfig paper_profile();
TrainConfig profile_config(const std::string& name);

struct DataSplits {
  std::vector<InteractionSample> train, val, test;
};

/// Shuffles with the "shuffle" stream and cuts by the given ratios.
DataSplits split_dataset(std::span<const InteractionSample> samples, std::uint64_t seed,
                         std::array<std::size_t, 3> ratios = {8, 1, 1});

/// Stops once `patience` consecutive epochs fail to strictly improve on the
/// best metric so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Feeds one epoch's metric; returns true when training should stop.
  bool update(double metric);

  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best() const { return best_; }
  std::size_t epochs_seen() const { return epoch_; }
  bool improved_last() const { return bad_ == 0 && epoch_ > 0; }

 private:
  std::size_t patience_;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t bad_ = 0;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t step = 0;
};

class Adam {
 public:
  Adam(std::vector<ParamPtr> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const Gradients& grads);

  const std::vector<ParamPtr>& params() const { return params_; }
  const AdamState& state() const { return state_; }
  void set_state(AdamState s);
  double lr() const { return lr_; }

 private:
  std::vector<ParamPtr> params_;
  double lr_, beta1_, beta2_, eps_;
  AdamState state_;
};

/// Re-seeds every code with zero usage to a random row of `recent` plus
/// Gaussian noise, then clears the usage counters. Returns the reset count.
std::size_t dead_code_reset(Codebook& codebook, const Tensor& recent, Rng& rng, double noise = 0.01);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossValues train;       // per-sample means over the epoch
  double val_auc = 0.0;
  double val_f1 = 0.0;
  std::vector<std::vector<std::uint64_t>> usage;  // per codebook, before any reset
  std::vector<std::vector<std::size_t>> reset_codes;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  TrainConfig config;
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<NamedTensor> params;
  AdamState optimizer;
};

Checkpoint make_checkpoint(const DfiModel& model, const Adam* opt, const TrainConfig& cfg, std::size_t epoch,
                           std::vector<EpochRecord> history);

/// Rebuilds the model and copies every parameter from the checkpoint.
DfiModel restore_model(const Checkpoint& ckpt);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CorruptCheckpoint on truncated or damaged files and FormatError on
/// unknown versions.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Additionally throws ConfigMismatch when the stored model shape differs
/// from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected);

/// Throws ConfigMismatch naming the first differing model field.
void check_compatible(const ModelConfig& stored, const ModelConfig& requested);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
};

/// Raised when a loss or gradient stops being finite. Carries the last
/// checkpoint whose parameters were all finite.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last) : NumericError(what), last_(std::move(last)) {}
  const Checkpoint& last_finite() const { return last_; }

 private:
  Checkpoint last_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& cfg, const SemanticEmbeddingTable& table, const DataSplits& splits,
                  const EpochCallback& on_epoch = {});

/// Header plus one row per epoch.
void write_metrics_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace dos
