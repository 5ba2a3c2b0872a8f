// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dos/tensor.hpp"

namespace dos {

struct ItemMeta {
  std::string item_id;
  std::string name;
  std::string second_category;
  std::string third_category;
  bool accepts_reservations = false;
  double min_price = 0.0;         // yuan
  double min_shipping_fee = 0.0;  // yuan
  std::vector<std::string> dishes;
};

/// Text fed to the embedding model for one restaurant. An empty dish list
/// drops the "Featured dishes" sentence entirely.
std::string render_prompt(const ItemMeta& meta);

/// N item embeddings of width d, one row per id.
class SemanticEmbeddingTable {
 public:
  SemanticEmbeddingTable() = default;
  SemanticEmbeddingTable(std::vector<std::string> ids, Tensor vectors);

  std::size_t n_items() const { return ids_.size(); }
  std::size_t dim() const { return vectors_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Tensor& vectors() const { return vectors_; }
  std::span<const double> row(std::size_t i) const { return vectors_.row_span(i); }

  /// Row index for an item id; throws FormatError for unknown ids.
  std::size_t index_of(const std::string& id) const;

 private:
  std::vector<std::string> ids_;
  Tensor vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Path of the JSON manifest that accompanies a binary table file.
std::filesystem::path manifest_path(const std::filesystem::path& table_path);

/// Writes little-endian float32 rows to `path` and {"n","d","ids"} to the
/// manifest. Values are narrowed to float32.
void save_table(const SemanticEmbeddingTable& table, const std::filesystem::path& path);
SemanticEmbeddingTable load_table(const std::filesystem::path& path);

struct InteractionSample {
  std::vector<std::size_t> seq;  // row indices into the embedding table
  std::size_t target = 0;
  int label = 0;
};

struct HierarchyLabels {
  int l1 = 0;  // coarse
  int l2 = 0;  // mid, globally numbered
  int l3 = 0;  // fine, globally numbered
};

/// Planted three-level cluster structure behind a synthetic table.
struct SyntheticHierarchy {
  std::array<std::size_t, 3> clusters{};
  std::vector<HierarchyLabels> labels;  // per item
  Tensor coarse_centroids;              // c1 x d
  Tensor mid_offsets;                   // (c1*c2) x d
  Tensor fine_offsets;                  // (c1*c2*c3) x d
  double noise_sigma = 0.0;
};

struct SyntheticConfig {
  std::size_t n_items = 2000;
  std::size_t dim = 32;
  std::array<std::size_t, 3> clusters{4, 4, 4};
  std::array<double, 3> level_scales{1.0, 0.5, 0.25};
  double noise_sigma = 0.05;
  std::size_t n_users = 500;
  std::size_t seq_len = 10;
  std::size_t n_samples = 20000;
  double positive_ratio = 0.5;
  double p_coherent = 0.9;
};

struct SyntheticData {
  SemanticEmbeddingTable table;
  SyntheticHierarchy hierarchy;
  std::vector<InteractionSample> samples;
};

/// Deterministic under `seed`. Throws ConfigError when n_items cannot cover
/// every fine cluster.
SyntheticData gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

void save_samples(const std::vector<InteractionSample>& samples, const SemanticEmbeddingTable& table,
                  const std::filesystem::path& path);
std::vector<InteractionSample> load_samples(const std::filesystem::path& path, const SemanticEmbeddingTable& table);

void save_hierarchy(const SyntheticHierarchy& h, const SemanticEmbeddingTable& table, const std::filesystem::path& path);
std::vector<HierarchyLabels> load_hierarchy(const std::filesystem::path& path, const SemanticEmbeddingTable& table);

}  // namespace dos
