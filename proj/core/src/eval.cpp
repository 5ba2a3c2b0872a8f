// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dos/error.hpp"

namespace dos {
namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractViolation("metric: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                            " labels");
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractViolation("metric: labels must be 0 or 1");
}

double entropy(const std::map<std::size_t, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [key, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int y : labels) pos += static_cast<std::size_t>(y);
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("auc needs at least one positive and one negative label");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum of positives, so tied groups stay integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) group_pos += static_cast<std::size_t>(labels[order[j++]]);
    // ranks i+1 .. j, average (i+1+j)/2
    twice_rank_sum += group_pos * (i + 1 + j);
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_binary(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1) ++tp;
    if (pred && labels[i] == 0) ++fp;
    if (!pred && labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

int hit_at_k(std::span<const std::size_t> ranked, std::size_t target, std::size_t k) {
  std::unordered_set<std::size_t> seen;
  for (std::size_t c : ranked)
    if (!seen.insert(c).second) throw ContractViolation("hit_at_k: duplicate candidate " + std::to_string(c));
  const std::size_t limit = std::min(k, ranked.size());
  return std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(limit), target) !=
                 ranked.begin() + static_cast<std::ptrdiff_t>(limit)
             ? 1
             : 0;
}

CodebookStats codebook_stats(std::span<const std::size_t> assignments, std::size_t codebook_size) {
  if (assignments.empty()) throw ContractViolation("codebook_stats: no assignments");
  if (codebook_size == 0) throw ContractViolation("codebook_stats: empty codebook");
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t a : assignments) {
    if (a >= codebook_size)
      throw ContractViolation("codebook_stats: code " + std::to_string(a) + " outside codebook of " +
                              std::to_string(codebook_size));
    ++counts[a];
  }
  CodebookStats s;
  s.perplexity = std::exp(entropy(counts, static_cast<double>(assignments.size())));
  s.utilization = static_cast<double>(counts.size()) / static_cast<double>(codebook_size);
  return s;
}

double nmi(std::span<const std::size_t> codes, std::span<const std::size_t> labels) {
  if (codes.size() != labels.size()) throw ContractViolation("nmi: length mismatch");
  if (codes.empty()) throw ContractViolation("nmi: empty input");
  const double n = static_cast<double>(codes.size());
  std::map<std::size_t, std::size_t> ca, cb;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    ++ca[codes[i]];
    ++cb[labels[i]];
    ++joint[{codes[i], labels[i]}];
  }
  const double ha = entropy(ca, n), hb = entropy(cb, n);
  if (ca.size() == 1 && cb.size() == 1) return 1.0;
  if (ca.size() == 1 || cb.size() == 1) return 0.0;
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double pab = static_cast<double>(c) / n;
    const double pa = static_cast<double>(ca[key.first]) / n;
    const double pb = static_cast<double>(cb[key.second]) / n;
    mi += pab * std::log(pab / (pa * pb));
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double collision_rate(const SidTable& sids) {
  if (sids.empty()) return 0.0;
  std::set<SemanticId> distinct;
  for (const auto& e : sids) distinct.insert(e.codes);
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(sids.size());
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (auc) j["auc"] = *auc;
  if (f1) j["f1"] = *f1;
  if (!hit_at_k.empty()) {
    nlohmann::json h = nlohmann::json::object();
    for (const auto& [k, v] : hit_at_k) h[std::to_string(k)] = v;
    j["hit_at_k"] = h;
  }
  if (!layers.empty()) {
    j["codebooks"] = nlohmann::json::array();
    for (const auto& s : layers) j["codebooks"].push_back({{"perplexity", s.perplexity}, {"utilization", s.utilization}});
  }
  if (!nmi.empty()) j["nmi"] = nmi;
  if (collision_rate) j["collision_rate"] = *collision_rate;
  if (!metadata.empty()) j["metadata"] = metadata;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    if (j.contains("auc")) r.auc = j.at("auc").get<double>();
    if (j.contains("f1")) r.f1 = j.at("f1").get<double>();
    if (j.contains("hit_at_k"))
      for (const auto& [k, v] : j.at("hit_at_k").items()) r.hit_at_k[std::stoul(k)] = v.get<double>();
    if (j.contains("codebooks"))
      for (const auto& c : j.at("codebooks"))
        r.layers.push_back({c.at("perplexity").get<double>(), c.at("utilization").get<double>()});
    if (j.contains("nmi")) r.nmi = j.at("nmi").get<std::vector<double>>();
    if (j.contains("collision_rate")) r.collision_rate = j.at("collision_rate").get<double>();
    if (j.contains("metadata")) r.metadata = j.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  return r;
}

MetricReport sid_report(const SidTable& sids, std::size_t codebook_size, const std::vector<HierarchyLabels>* labels) {
  if (sids.empty()) throw ContractViolation("sid_report: no SIDs");
  const std::size_t depth = sids.front().codes.size();
  if (labels && labels->size() != sids.size())
    throw ContractViolation("sid_report: " + std::to_string(labels->size()) + " hierarchy rows for " +
                            std::to_string(sids.size()) + " SIDs");
  MetricReport r;
  for (std::size_t l = 0; l < depth; ++l) {
    std::vector<std::size_t> level;
    level.reserve(sids.size());
    for (const auto& e : sids) level.push_back(e.codes.at(l));
    r.layers.push_back(codebook_stats(level, codebook_size));
    if (labels && l < 3) {
      std::vector<std::size_t> truth;
      truth.reserve(labels->size());
      for (const auto& h : *labels) truth.push_back(static_cast<std::size_t>(l == 0 ? h.l1 : l == 1 ? h.l2 : h.l3));
      r.nmi.push_back(nmi(level, truth));
    }
  }
  r.collision_rate = collision_rate(sids);
  return r;
}

std::string format_reports(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::set<std::size_t> ks;
  std::size_t levels = 0, name_w = 6;
  for (const auto& [name, r] : rows) {
    for (const auto& [k, v] : r.hit_at_k) ks.insert(k);
    levels = std::max(levels, r.nmi.size());
    name_w = std::max(name_w, name.size());
  }
  std::vector<std::string> header{"AUC", "F1"};
  for (std::size_t k : ks) header.push_back("Hit@" + std::to_string(k));
  for (std::size_t l = 0; l < levels; ++l) header.push_back("NMI-L" + std::to_string(l + 1));
  header.push_back("Collide");

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w) + 2) << "Method";
  for (const auto& h : header) out << std::right << std::setw(10) << h;
  out << '\n';
  auto cell = [&](std::optional<double> v) {
    if (v) out << std::right << std::setw(10) << std::fixed << std::setprecision(4) << *v;
    else out << std::right << std::setw(10) << "-";
  };
  for (const auto& [name, r] : rows) {
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << name;
    cell(r.auc);
    cell(r.f1);
    for (std::size_t k : ks) cell(r.hit_at_k.count(k) ? std::optional<double>(r.hit_at_k.at(k)) : std::nullopt);
    for (std::size_t l = 0; l < levels; ++l) cell(l < r.nmi.size() ? std::optional<double>(r.nmi[l]) : std::nullopt);
    cell(r.collision_rate);
    out << '\n';
  }
  return out.str();
}

}  // namespace dos
