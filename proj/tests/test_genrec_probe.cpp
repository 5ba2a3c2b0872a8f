// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/baselines.hpp>
#include <dos/error.hpp>
#include <dos/genrec_probe.hpp>
#include <dos/sid.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "support.hpp"

namespace dos {
namespace {

SidTable fixed_sids(const std::vector<SemanticId>& codes) {
  SidTable t;
  for (std::size_t i = 0; i < codes.size(); ++i) t.push_back({"itm" + std::to_string(i), codes[i]});
  return t;
}

ProbeConfig tiny_probe() {
  ProbeConfig cfg;
  cfg.dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.batch_size = 16;
  return cfg;
}

TEST(SidTokens, LevelOffsets) {
  EXPECT_EQ(sid_token(0, 3, 8), 3u);
  EXPECT_EQ(sid_token(2, 3, 8), 19u);
  EXPECT_THROW(sid_token(0, 8, 8), ContractViolation);
}

TEST(SidDataset, ShapeAndPositivesOnly) {
  const auto sids = fixed_sids({{0, 1}, {1, 0}, {2, 2}});
  const std::vector<InteractionSample> samples{{{0, 1}, 2, 1}, {{1, 1}, 0, 0}, {{2, 0}, 1, 1}};
  const auto ds = build_sid_dataset(samples, sids, 3);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.depth, 2u);
  EXPECT_EQ(ds.history_len, 2u);
  EXPECT_EQ(ds.vocab(), 6u);
  EXPECT_EQ(ds.streams[0], (std::vector<std::size_t>{0, 4, 1, 3, 2, 5}));
  EXPECT_EQ(ds.targets, (std::vector<std::size_t>{2, 1}));
  const std::vector<InteractionSample> ragged{{{0, 1}, 2, 1}, {{1}, 0, 1}};
  EXPECT_THROW(build_sid_dataset(ragged, sids, 3), ContractViolation);
}

SidSequenceDataset repeating_item(std::size_t n) {
  const auto sids = fixed_sids({{2, 1}, {0, 3}});
  std::vector<InteractionSample> samples(n, InteractionSample{{0, 0, 0}, 0, 1});
  return build_sid_dataset(samples, sids, 4);
}

TEST(Probe, LearnsARepeatingItem) {
  const auto ds = repeating_item(32);
  auto cfg = tiny_probe();
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  const auto res = probe_train(ds, ds, cfg);
  EXPECT_DOUBLE_EQ(next_token_accuracy(res.model, ds), 1.0);
  EXPECT_LT(res.val_loss.back(), 0.05);
}

TEST(Probe, ZeroLearningRateKeepsLossFlat) {
  const auto ds = repeating_item(16);
  auto cfg = tiny_probe();
  cfg.lr = 0.0;
  cfg.epochs = 3;
  const auto res = probe_train(ds, ds, cfg);
  for (double v : res.val_loss) EXPECT_NEAR(v, res.val_loss.front(), 1e-12);
}

TEST(Probe, ValidationLossDropsOnClusteredSequences) {
  const auto data = gen_synthetic(test::small_synthetic(256, 3000), 3);
  const auto fit = rq_kmeans_fit(data.table, 2, 8, 50, 0);
  const auto all = build_sid_dataset(data.samples, fit.sids, 8);
  SidSequenceDataset train = all, val = all;
  const std::size_t cut = all.size() * 9 / 10;
  train.streams.resize(cut);
  train.targets.resize(cut);
  val.streams.erase(val.streams.begin(), val.streams.begin() + static_cast<std::ptrdiff_t>(cut));
  val.targets.erase(val.targets.begin(), val.targets.begin() + static_cast<std::ptrdiff_t>(cut));
  auto cfg = tiny_probe();
  cfg.epochs = 10;
  cfg.lr = 3e-3;
  const auto res = probe_train(train, val, cfg);
  EXPECT_LE(res.val_loss.back(), 0.8 * res.val_loss.front())
      << res.val_loss.front() << " -> " << res.val_loss.back();
}

TEST(Probe, HiddenStatesAreCausal) {
  const auto m = make_probe(2, 4, 8, tiny_probe());
  std::vector<std::size_t> a{0, 4, 1, 5, 2, 6}, b = a;
  b[4] = 3;
  b[5] = 7;
  Graph g;
  const Tensor ha = probe_hidden(g, m, {a}).value();
  const Tensor hb = probe_hidden(g, m, {b}).value();
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < ha.cols(); ++c) EXPECT_EQ(ha(t, c), hb(t, c));
  bool changed = false;
  for (std::size_t c = 0; c < ha.cols(); ++c) changed |= ha(4, c) != hb(4, c);
  EXPECT_TRUE(changed);
}

// log-probabilities that depend on the whole prefix
std::vector<double> fake_step(const std::vector<std::size_t>& prefix, std::size_t k) {
  std::vector<double> logits(k);
  for (std::size_t c = 0; c < k; ++c) {
    double h = 0.37 * static_cast<double>(c + 1);
    for (std::size_t p : prefix) h = std::sin(h * 12.9898 + static_cast<double>(p) * 78.233) * 3.0;
    logits[c] = h;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double v : logits) z += std::exp(v - mx);
  for (double& v : logits) v = v - mx - std::log(z);
  return logits;
}

TEST(BeamSearch, MatchesEnumerationWhenFirstLevelIsKept) {
  for (std::size_t k = 1; k <= 8; ++k) {
    const BeamStep step = [k](const std::vector<std::vector<std::size_t>>& prefixes) {
      std::vector<std::vector<double>> out;
      for (const auto& p : prefixes) out.push_back(fake_step(p, k));
      return out;
    };
    std::vector<Beam> all;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) all.push_back({{a, b}, fake_step({}, k)[a] + fake_step({a}, k)[b]});
    std::stable_sort(all.begin(), all.end(), [](const Beam& x, const Beam& y) { return x.log_prob > y.log_prob; });
    const auto beams = beam_search(step, 2, k);
    ASSERT_EQ(beams.size(), k);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_EQ(beams[i].codes, all[i].codes) << "k=" << k << " rank " << i;
      EXPECT_NEAR(beams[i].log_prob, all[i].log_prob, 1e-12);
    }
  }
}

TEST(BeamSearch, TiesPreferSmallerSequence) {
  const BeamStep flat = [](const std::vector<std::vector<std::size_t>>& prefixes) {
    return std::vector<std::vector<double>>(prefixes.size(), std::vector<double>(3, -std::log(3.0)));
  };
  const auto beams = beam_search(flat, 2, 4);
  ASSERT_EQ(beams.size(), 4u);
  EXPECT_EQ(beams[0].codes, (SemanticId{0, 0}));
  EXPECT_EQ(beams[1].codes, (SemanticId{0, 1}));
  EXPECT_EQ(beams[3].codes, (SemanticId{1, 0}));
  EXPECT_THROW(beam_search(flat, 2, 0), ContractViolation);
}

TEST(ProbeEval, SingleCodeAlwaysHits) {
  const auto sids = fixed_sids({{0, 0}, {0, 0}, {0, 0}});
  const std::vector<InteractionSample> samples{{{0, 1}, 2, 1}, {{2, 2}, 1, 1}};
  const auto ds = build_sid_dataset(samples, sids, 1);
  auto cfg = tiny_probe();
  const auto m = make_probe(2, 1, ds.stream_len(), cfg);
  EXPECT_DOUBLE_EQ(probe_eval(m, ds, sids, cfg), 1.0);
}

TEST(ProbeEval, CollidingItemsShareCredit) {
  // every item carries the same SID, so any target is hit
  const auto sids = fixed_sids(std::vector<SemanticId>(12, SemanticId{0, 0}));
  const std::vector<InteractionSample> early{{{0, 1}, 3, 1}}, late{{{0, 1}, 11, 1}};
  auto cfg = tiny_probe();
  cfg.k = 10;
  const auto m = make_probe(2, 1, 6, cfg);
  EXPECT_DOUBLE_EQ(probe_eval(m, build_sid_dataset(early, sids, 1), sids, cfg), 1.0);
  EXPECT_DOUBLE_EQ(probe_eval(m, build_sid_dataset(late, sids, 1), sids, cfg), 1.0);
}

TEST(ProbeEval, TrainedOnRepeatingItemHits) {
  const auto ds = repeating_item(32);
  auto cfg = tiny_probe();
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  cfg.beam = 1;
  cfg.k = 1;
  const auto res = probe_train(ds, ds, cfg);
  EXPECT_DOUBLE_EQ(probe_eval(res.model, ds, fixed_sids({{2, 1}, {0, 3}}), cfg), 1.0);
}

TEST(SidFiles, TsvRoundTrip) {
  test::TempDir dir;
  const auto sids = fixed_sids({{7, 130, 955}, {0, 0, 1}});
  write_sids_tsv(sids, dir / "s.tsv");
  EXPECT_EQ(test::read_file(dir / "s.tsv"), "itm0\t7,130,955\nitm1\t0,0,1\n");
  const auto back = read_sids_tsv(dir / "s.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].item_id, "itm0");
  EXPECT_EQ(back[1].codes, (SemanticId{0, 0, 1}));
  EXPECT_EQ(format_sid(sids[0].codes), "7,130,955");
}

TEST(ProbeReport, SchemesAsKeys) {
  const auto j = probe_report({{"dos", 0.25}, {"random", 0.125}});
  EXPECT_DOUBLE_EQ(j.at("dos").get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j.at("random").get<double>(), 0.125);
}

}  // namespace
}  // namespace dos
