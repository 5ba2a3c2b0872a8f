// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dos/embeddings.hpp"
#include "dos/sid.hpp"

namespace dos {

/// Mann-Whitney statistic; tied pairs count one half. Labels are 0/1.
/// Throws UndefinedMetric unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// F1 of (score >= threshold) against the labels; 0 when nothing is
/// predicted positive.
double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// 1 iff target is among the first k entries. Duplicate candidates are a
/// contract violation.
int hit_at_k(std::span<const std::size_t> ranked, std::size_t target, std::size_t k = 10);

struct CodebookStats {
  double perplexity = 1.0;
  double utilization = 0.0;
};

CodebookStats codebook_stats(std::span<const std::size_t> assignments, std::size_t codebook_size);

/// Normalized mutual information, arithmetic-mean normalization. Two constant
/// assignments score 1.
double nmi(std::span<const std::size_t> codes, std::span<const std::size_t> labels);

/// 1 - distinct / count over full SIDs.
double collision_rate(const SidTable& sids);

struct MetricReport {
  std::optional<double> auc;
  std::optional<double> f1;
  std::map<std::size_t, double> hit_at_k;
  std::vector<CodebookStats> layers;
  std::vector<double> nmi;  // level l against hierarchy level l
  std::optional<double> collision_rate;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Per-layer codebook stats, collision rate and, when labels are given, NMI of
/// each SID level against the matching hierarchy level (levels beyond the
/// hierarchy depth are skipped). SIDs must follow the table's item order.
MetricReport sid_report(const SidTable& sids, std::size_t codebook_size,
                        const std::vector<HierarchyLabels>* labels = nullptr);

/// Aligned plain-text table; one row per report.
std::string format_reports(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace dos
