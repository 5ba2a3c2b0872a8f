// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dos/error.hpp"
#include "dos/random.hpp"

namespace dos {
namespace {

using json = nlohmann::json;

std::string format_amount(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ContractViolation("cannot format amount");
  return std::string(buf, end);
}

void put_f32_le(std::ostream& os, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                         static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
  os.write(bytes, 4);
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

std::string render_prompt(const ItemMeta& meta) {
  if (meta.item_id.empty()) throw ContractViolation("render_prompt: empty item_id");
  if (meta.min_price < 0.0 || meta.min_shipping_fee < 0.0) throw ContractViolation("render_prompt: negative price");
  std::string out = meta.name + " is a " + meta.second_category + " restaurant specializing in " +
                    meta.third_category + ". Reservations " +
                    (meta.accepts_reservations ? "are accepted." : "are not accepted.") +
                    " The minimum order amount is " + format_amount(meta.min_price) +
                    " yuan, and the minimum delivery fee is " + format_amount(meta.min_shipping_fee) + " yuan.";
  if (!meta.dishes.empty()) {
    out += " Featured dishes include ";
    for (std::size_t i = 0; i < meta.dishes.size(); ++i) {
      if (i > 0) out += ", ";
      out += meta.dishes[i];
    }
    out += ".";
  }
  return out;
}

SemanticEmbeddingTable::SemanticEmbeddingTable(std::vector<std::string> ids, Tensor vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (vectors_.rows() != ids_.size())
    throw FormatError("embedding table: " + std::to_string(ids_.size()) + " ids for " +
                      std::to_string(vectors_.rows()) + " rows");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i].empty()) throw FormatError("embedding table: empty item id at row " + std::to_string(i));
    if (!index_.emplace(ids_[i], i).second) throw FormatError("embedding table: duplicate item id '" + ids_[i] + "'");
  }
}

std::size_t SemanticEmbeddingTable::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw FormatError("unknown item id '" + id + "'");
  return it->second;
}

std::filesystem::path manifest_path(const std::filesystem::path& table_path) {
  std::filesystem::path p = table_path;
  p += ".json";
  return p;
}

void save_table(const SemanticEmbeddingTable& table, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    for (double v : table.vectors().data()) put_f32_le(out, static_cast<float>(v));
    if (!out) throw FormatError("write failed for " + path.string());
  }
  json manifest = {{"n", table.n_items()}, {"d", table.dim()}, {"ids", table.ids()}};
  std::ofstream m(manifest_path(path), std::ios::trunc);
  if (!m) throw FormatError("cannot write " + manifest_path(path).string());
  m << manifest.dump() << "\n";
}

SemanticEmbeddingTable load_table(const std::filesystem::path& path) {
  json manifest;
  {
    std::ifstream m(manifest_path(path));
    if (!m) throw FormatError("cannot open manifest " + manifest_path(path).string());
    try {
      m >> manifest;
    } catch (const json::exception& e) {
      throw FormatError("malformed manifest " + manifest_path(path).string() + ": " + e.what());
    }
  }
  if (!manifest.contains("n") || !manifest.contains("d") || !manifest.contains("ids"))
    throw FormatError("manifest must contain n, d and ids");
  const auto n = manifest["n"].get<std::size_t>();
  const auto d = manifest["d"].get<std::size_t>();
  auto ids = manifest["ids"].get<std::vector<std::string>>();
  if (ids.size() != n)
    throw FormatError("manifest lists " + std::to_string(ids.size()) + " ids but n=" + std::to_string(n));

  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = n * d * 4;
  if (bytes.size() != expected) {
    std::ostringstream msg;
    msg << "embedding file " << path.string() << ": expected " << expected << " bytes (n=" << n << ", d=" << d
        << ") but found " << bytes.size();
    throw FormatError(msg.str());
  }
  std::vector<double> values(n * d);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(get_f32_le(bytes.data() + 4 * i));
  return SemanticEmbeddingTable(std::move(ids), Tensor(n, d, std::move(values)));
}

SyntheticData gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  const auto [c1, c2, c3] = cfg.clusters;
  if (c1 == 0 || c2 == 0 || c3 == 0) throw ConfigError("clusters per level must be >= 1");
  if (cfg.seq_len == 0) throw ConfigError("seq_len must be >= 1");
  if (cfg.dim == 0) throw ConfigError("dim must be >= 1");
  if (cfg.n_users == 0) throw ConfigError("n_users must be >= 1");
  const std::size_t n_fine = c1 * c2 * c3;
  if (cfg.n_items < n_fine)
    throw ConfigError("n_items " + std::to_string(cfg.n_items) + " is smaller than the " + std::to_string(n_fine) +
                      " fine clusters");
  if (cfg.positive_ratio < 0.0 || cfg.positive_ratio > 1.0 || cfg.p_coherent < 0.0 || cfg.p_coherent > 1.0)
    throw ConfigError("probabilities must lie in [0, 1]");

  Rng rng = make_stream(seed, "data");
  const std::size_t d = cfg.dim;

  SyntheticHierarchy h;
  h.clusters = cfg.clusters;
  h.noise_sigma = cfg.noise_sigma;
  h.coarse_centroids = normal_tensor(c1, d, cfg.level_scales[0], rng);
  h.mid_offsets = normal_tensor(c1 * c2, d, cfg.level_scales[1], rng);
  h.fine_offsets = normal_tensor(n_fine, d, cfg.level_scales[2], rng);

  // Every fine cluster gets at least one item; the remainder is uniform.
  std::vector<std::size_t> fine_of(cfg.n_items);
  std::uniform_int_distribution<std::size_t> pick_fine(0, n_fine - 1);
  for (std::size_t i = 0; i < cfg.n_items; ++i) fine_of[i] = i < n_fine ? i : pick_fine(rng);
  std::shuffle(fine_of.begin(), fine_of.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> values(cfg.n_items * d);
  std::vector<std::string> ids(cfg.n_items);
  h.labels.resize(cfg.n_items);
  std::vector<std::vector<std::size_t>> items_by_coarse(c1);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::size_t f = fine_of[i];
    const std::size_t m = f / c3;
    const std::size_t c = m / c2;
    h.labels[i] = HierarchyLabels{static_cast<int>(c), static_cast<int>(m), static_cast<int>(f)};
    items_by_coarse[c].push_back(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = h.coarse_centroids(c, j) + h.mid_offsets(m, j) + h.fine_offsets(f, j) +
                       (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(rng) : 0.0);
      // Round through float32 so the table survives the on-disk format bit-exactly.
      values[i * d + j] = static_cast<double>(static_cast<float>(v));
    }
    ids[i] = "itm" + std::to_string(i);
  }

  std::vector<std::size_t> preferred(cfg.n_users);
  std::uniform_int_distribution<std::size_t> pick_coarse(0, c1 - 1);
  for (auto& p : preferred) {
    do {
      p = pick_coarse(rng);
    } while (items_by_coarse[p].empty());
  }

  std::uniform_int_distribution<std::size_t> pick_user(0, cfg.n_users - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, cfg.n_items - 1);
  std::bernoulli_distribution is_positive(cfg.positive_ratio);
  std::bernoulli_distribution coherent(cfg.p_coherent);
  auto draw_from = [&](std::size_t cluster) {
    const auto& pool = items_by_coarse[cluster];
    std::uniform_int_distribution<std::size_t> k(0, pool.size() - 1);
    return pool[k(rng)];
  };

  std::vector<InteractionSample> samples(cfg.n_samples);
  for (auto& s : samples) {
    const std::size_t user = pick_user(rng);
    const std::size_t pref = preferred[user];
    s.label = is_positive(rng) ? 1 : 0;
    s.seq.resize(cfg.seq_len);
    for (auto& item : s.seq) item = coherent(rng) ? draw_from(pref) : pick_item(rng);
    if (s.label == 1)
      s.target = coherent(rng) ? draw_from(pref) : pick_item(rng);
    else
      s.target = pick_item(rng);
  }

  return SyntheticData{SemanticEmbeddingTable(std::move(ids), Tensor(cfg.n_items, d, std::move(values))), std::move(h),
                       std::move(samples)};
}

void save_samples(const std::vector<InteractionSample>& samples, const SemanticEmbeddingTable& table,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& s : samples) {
    std::vector<std::string> seq;
    seq.reserve(s.seq.size());
    for (std::size_t i : s.seq) seq.push_back(table.ids().at(i));
    out << json{{"seq", seq}, {"target", table.ids().at(s.target)}, {"label", s.label}}.dump() << "\n";
  }
}

std::vector<InteractionSample> load_samples(const std::filesystem::path& path, const SemanticEmbeddingTable& table) {
  std::vector<InteractionSample> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    try {
      const json j = json::parse(line);
      InteractionSample s;
      for (const auto& id : j.at("seq")) s.seq.push_back(table.index_of(id.get<std::string>()));
      s.target = table.index_of(j.at("target").get<std::string>());
      s.label = j.at("label").get<int>();
      if (s.label != 0 && s.label != 1) throw FormatError("label must be 0 or 1");
      if (s.seq.empty()) throw FormatError("empty click sequence");
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_hierarchy(const SyntheticHierarchy& h, const SemanticEmbeddingTable& table,
                    const std::filesystem::path& path) {
  if (h.labels.size() != table.n_items()) throw ContractViolation("hierarchy does not cover the table");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t i = 0; i < h.labels.size(); ++i) {
    const auto& l = h.labels[i];
    out << json{{"item_id", table.ids()[i]}, {"l1", l.l1}, {"l2", l.l2}, {"l3", l.l3}}.dump() << "\n";
  }
}

std::vector<HierarchyLabels> load_hierarchy(const std::filesystem::path& path, const SemanticEmbeddingTable& table) {
  std::vector<HierarchyLabels> labels(table.n_items());
  std::vector<bool> seen(table.n_items(), false);
  for (const auto& line : read_lines(path)) {
    try {
      const json j = json::parse(line);
      const std::size_t i = table.index_of(j.at("item_id").get<std::string>());
      labels[i] = HierarchyLabels{j.at("l1").get<int>(), j.at("l2").get<int>(), j.at("l3").get<int>()};
      seen[i] = true;
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw FormatError(path.string() + ": hierarchy labels do not cover every item");
  return labels;
}

}  // namespace dos
