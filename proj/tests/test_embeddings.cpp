// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/embeddings.hpp>
#include <dos/error.hpp>
#include <dos/kmeans.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"

namespace dos {
namespace {

ItemMeta hotpot() {
  ItemMeta m;
  m.item_id = "itm1";
  m.name = "A";
  m.second_category = "hotpot";
  m.third_category = "Sichuan hotpot";
  m.accepts_reservations = false;
  m.min_price = 20;
  m.min_shipping_fee = 3;
  m.dishes = {"x", "y"};
  return m;
}

TEST(RenderPrompt, FullTemplate) {
  EXPECT_EQ(render_prompt(hotpot()),
            "A is a hotpot restaurant specializing in Sichuan hotpot. Reservations are not accepted. The minimum "
            "order amount is 20 yuan, and the minimum delivery fee is 3 yuan. Featured dishes include x, y.");
}

TEST(RenderPrompt, SingleDish) {
  ItemMeta m = hotpot();
  m.dishes = {"x"};
  const std::string p = render_prompt(m);
  EXPECT_TRUE(p.ends_with(" Featured dishes include x.")) << p;
}

TEST(RenderPrompt, NoDishesOmitsSentence) {
  ItemMeta m = hotpot();
  m.dishes.clear();
  const std::string p = render_prompt(m);
  EXPECT_EQ(p.find("Featured"), std::string::npos);
  EXPECT_TRUE(p.ends_with("the minimum delivery fee is 3 yuan.")) << p;
}

TEST(RenderPrompt, ReservationsAccepted) {
  ItemMeta m = hotpot();
  m.accepts_reservations = true;
  EXPECT_NE(render_prompt(m).find("Reservations are accepted."), std::string::npos);
}

TEST(RenderPrompt, DistinctNamesGiveDistinctPrompts) {
  std::set<std::string> seen;
  for (int i = 0; i < 50; ++i) {
    ItemMeta m = hotpot();
    m.name = "Shop " + std::to_string(i);
    seen.insert(render_prompt(m));
  }
  EXPECT_EQ(seen.size(), 50u);
}

SemanticEmbeddingTable small_table() {
  return SemanticEmbeddingTable({"a", "b", "c"}, Tensor::from_rows({{1, 2, 3, 4}, {0.5, -0.25, 0, 8}, {-1, 0, 1, 2}}));
}

TEST(TableFile, RoundTrip) {
  test::TempDir dir;
  const auto table = small_table();
  save_table(table, dir / "t.bin");
  const auto back = load_table(dir / "t.bin");
  EXPECT_EQ(back.ids(), table.ids());
  EXPECT_TRUE(back.vectors().identical(table.vectors()));
  EXPECT_EQ(back.index_of("c"), 2u);
  EXPECT_EQ(std::filesystem::file_size(dir / "t.bin"), 3u * 4u * 4u);
}

TEST(TableFile, TruncatedReportsByteCounts) {
  test::TempDir dir;
  save_table(small_table(), dir / "t.bin");
  std::filesystem::resize_file(dir / "t.bin", 40);
  try {
    load_table(dir / "t.bin");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("48"), std::string::npos) << msg;
    EXPECT_NE(msg.find("40"), std::string::npos) << msg;
  }
}

TEST(TableFile, ManifestWidthMismatch) {
  test::TempDir dir;
  const SemanticEmbeddingTable t({"a", "b"}, Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}));
  save_table(t, dir / "t.bin");
  std::ofstream(manifest_path(dir / "t.bin")) << R"({"n": 2, "d": 4, "ids": ["a", "b"]})";
  EXPECT_THROW(load_table(dir / "t.bin"), FormatError);
}

TEST(TableFile, DuplicateIds) {
  EXPECT_THROW(SemanticEmbeddingTable({"a", "a"}, Tensor::zeros(2, 2)), FormatError);
  test::TempDir dir;
  save_table(SemanticEmbeddingTable({"a", "b"}, Tensor::zeros(2, 2)), dir / "t.bin");
  std::ofstream(manifest_path(dir / "t.bin")) << R"({"n": 2, "d": 2, "ids": ["a", "a"]})";
  EXPECT_THROW(load_table(dir / "t.bin"), FormatError);
}

TEST(TableFile, UnknownId) { EXPECT_THROW(small_table().index_of("zzz"), FormatError); }

TEST(Synthetic, ZeroNoiseFineClustersCollapse) {
  auto cfg = test::small_synthetic();
  cfg.noise_sigma = 0.0;
  const auto data = gen_synthetic(cfg, 3);
  std::map<int, std::size_t> first;
  for (std::size_t i = 0; i < data.table.n_items(); ++i) {
    const int f = data.hierarchy.labels[i].l3;
    auto [it, fresh] = first.emplace(f, i);
    if (fresh) continue;
    const auto a = data.table.row(i);
    const auto b = data.table.row(it->second);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "items " << i << " and " << it->second;
  }
  EXPECT_EQ(first.size(), 64u);
}

TEST(Synthetic, Deterministic) {
  const auto cfg = test::small_synthetic();
  const auto a = gen_synthetic(cfg, 5);
  const auto b = gen_synthetic(cfg, 5);
  EXPECT_TRUE(a.table.vectors().identical(b.table.vectors()));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].seq, b.samples[i].seq);
    EXPECT_EQ(a.samples[i].target, b.samples[i].target);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
  }
  const auto c = gen_synthetic(cfg, 6);
  EXPECT_FALSE(a.table.vectors().identical(c.table.vectors()));
}

TEST(Synthetic, LabelMeanNearPositiveRatio) {
  const auto data = gen_synthetic(test::small_synthetic(256, 1000), 9);
  double mean = 0;
  for (const auto& s : data.samples) mean += s.label;
  mean /= static_cast<double>(data.samples.size());
  EXPECT_GE(mean, 0.45);
  EXPECT_LE(mean, 0.55);
}

TEST(Synthetic, TooFewItemsIsConfigError) {
  auto cfg = test::small_synthetic();
  cfg.n_items = 63;
  EXPECT_THROW(gen_synthetic(cfg, 0), ConfigError);
}

TEST(Synthetic, NearestCoarseCentroidRecoversLabels) {
  SyntheticConfig cfg;  // desk defaults
  const auto data = gen_synthetic(cfg, 1);
  const auto nearest = nearest_rows(data.table.vectors(), data.hierarchy.coarse_centroids);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nearest.size(); ++i)
    correct += nearest[i] == static_cast<std::size_t>(data.hierarchy.labels[i].l1);
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(nearest.size()), 0.99);
}

TEST(Synthetic, SamplesReferenceValidRows) {
  const auto cfg = test::small_synthetic();
  const auto data = gen_synthetic(cfg, 2);
  for (const auto& s : data.samples) {
    EXPECT_EQ(s.seq.size(), cfg.seq_len);
    EXPECT_LT(s.target, cfg.n_items);
    for (auto i : s.seq) EXPECT_LT(i, cfg.n_items);
  }
}

TEST(SampleFiles, RoundTrip) {
  test::TempDir dir;
  const auto data = gen_synthetic(test::small_synthetic(128, 50), 4);
  save_samples(data.samples, data.table, dir / "s.jsonl");
  const auto back = load_samples(dir / "s.jsonl", data.table);
  ASSERT_EQ(back.size(), data.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].seq, data.samples[i].seq);
    EXPECT_EQ(back[i].target, data.samples[i].target);
    EXPECT_EQ(back[i].label, data.samples[i].label);
  }
  save_hierarchy(data.hierarchy, data.table, dir / "h.jsonl");
  const auto labels = load_hierarchy(dir / "h.jsonl", data.table);
  ASSERT_EQ(labels.size(), data.hierarchy.labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(labels[i].l1, data.hierarchy.labels[i].l1);
    EXPECT_EQ(labels[i].l3, data.hierarchy.labels[i].l3);
  }
}

TEST(SampleFiles, BadLabelIsFormatError) {
  test::TempDir dir;
  const auto table = small_table();
  std::ofstream(dir / "s.jsonl") << R"({"seq": ["a"], "target": "b", "label": 2})" << "\n";
  EXPECT_THROW(load_samples(dir / "s.jsonl", table), FormatError);
  std::ofstream(dir / "u.jsonl") << R"({"seq": ["q"], "target": "b", "label": 1})" << "\n";
  EXPECT_THROW(load_samples(dir / "u.jsonl", table), FormatError);
}

}  // namespace
}  // namespace dos
