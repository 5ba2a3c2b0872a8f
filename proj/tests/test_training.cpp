// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/dfi.hpp>
#include <dos/error.hpp>
#include <dos/ops.hpp>
#include <dos/training.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"

namespace dos {
namespace {

struct SmallRun {
  SyntheticData data;
  DataSplits splits;
  TrainConfig cfg;
};

SmallRun small_run(std::uint64_t seed = 0) {
  SmallRun r{gen_synthetic(test::small_synthetic(256, 1500), seed), {}, desk_profile()};
  r.splits = split_dataset(r.data.samples, seed);
  r.cfg.model.dim = 16;
  r.cfg.model.codebook_size = 16;
  r.cfg.model.seq_len = 4;
  r.cfg.batch_size = 64;
  r.cfg.max_epochs = 3;
  r.cfg.seed = seed;
  return r;
}

TEST(EarlyStopping, HandTracedSequence) {
  EarlyStopping es(5);
  const double curve[] = {.6, .7, .7, .69, .7, .7, .7, .7};
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < std::size(curve); ++i) {
    if (es.update(curve[i])) {
      stopped = i + 1;
      break;
    }
  }
  EXPECT_EQ(stopped, 7u);
  EXPECT_EQ(es.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(es.best(), 0.7);
}

TEST(EarlyStopping, NeverPastBestPlusPatience) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.5, 0.9);
  for (std::size_t patience = 1; patience <= 6; ++patience) {
    for (int trial = 0; trial < 50; ++trial) {
      EarlyStopping es(patience);
      std::size_t epoch = 0;
      while (!es.update(u(rng))) ++epoch;
      ++epoch;
      EXPECT_EQ(epoch, es.best_epoch() + patience);
    }
  }
  EXPECT_THROW(EarlyStopping(0), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = make_parameter("p", Tensor::row({1.0, -2.0, 0.5}));
  Adam opt({p}, 0.1);
  Graph g;
  opt.step(g.backward(sum(mul(g.param(p), g.constant(Tensor::row({3, -0.5, 0}))))));
  // Bias-corrected first step is lr * g / (|g| + eps); zero gradients stay put.
  EXPECT_NEAR(p->value(0, 0), 0.9, 1e-8);
  EXPECT_NEAR(p->value(0, 1), -1.9, 1e-8);
  EXPECT_EQ(p->value(0, 2), 0.5);
  EXPECT_EQ(opt.state().step, 1u);
}

TEST(Adam, NonFiniteUpdateNamesParameter) {
  auto p = make_parameter("exploding.weight", Tensor::scalar(1.0));
  Adam opt({p}, 1e308);
  Graph g;
  Var v = g.param(p);
  try {
    opt.step(g.backward(scale(v, 1e300)));
    opt.step(g.backward(scale(v, 1e300)));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exploding.weight"), std::string::npos) << e.what();
  }
}

TEST(DeadCodeReset, Counting) {
  Rng rng(2);
  Codebook book;
  book.vectors = make_parameter("cb", normal_tensor(64, 4, 1.0, rng));
  book.reset_usage();
  const Tensor recent = normal_tensor(10, 4, 1.0, rng);

  std::vector<std::size_t> all(64);
  std::iota(all.begin(), all.end(), std::size_t{0});
  book.record_usage(all);
  const Tensor before = book.vectors->value;
  EXPECT_EQ(dead_code_reset(book, recent, rng), 0u);
  EXPECT_TRUE(book.vectors->value.identical(before));

  const std::size_t two[] = {3, 3, 17};
  book.record_usage(two);
  EXPECT_EQ(dead_code_reset(book, recent, rng), 62u);
  EXPECT_EQ(book.vectors->value(3, 0), before(3, 0));
  EXPECT_NE(book.vectors->value(4, 0), before(4, 0));
  for (auto u : book.usage) EXPECT_EQ(u, 0u);

  // Reset codes land within a few noise widths of some recent row.
  for (std::size_t c = 0; c < 64; ++c) {
    if (c == 3 || c == 17) continue;
    double best = 1e9;
    for (std::size_t r = 0; r < recent.rows(); ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += std::pow(book.vectors->value(c, j) - recent(r, j), 2);
      best = std::min(best, s);
    }
    EXPECT_LT(std::sqrt(best), 0.1);
  }
}

TEST(Split, DisjointEightOneOne) {
  std::vector<InteractionSample> samples(1000);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].target = i;
  const auto s = split_dataset(samples, 3);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& x : *part) EXPECT_TRUE(seen.insert(x.target).second);
  EXPECT_EQ(seen.size(), 1000u);
  const auto again = split_dataset(samples, 3);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(again.test[i].target, s.test[i].target);
}

TEST(Config, ProfilesAndRoundTrip) {
  const auto desk = desk_profile();
  EXPECT_EQ(desk.model.dim, 32u);
  EXPECT_EQ(desk.model.codebook_size, 64u);
  EXPECT_EQ(desk.model.seq_len, 10u);
  EXPECT_EQ(desk.batch_size, 128u);
  const auto paper = paper_profile();
  EXPECT_EQ(paper.model.dim, 1024u);
  EXPECT_EQ(paper.model.codebook_size, 1024u);
  EXPECT_EQ(paper.model.depth, 3u);
  EXPECT_EQ(paper.batch_size, 1024u);
  EXPECT_EQ(paper.patience, 5u);
  EXPECT_DOUBLE_EQ(paper.alpha, 0.1);
  EXPECT_DOUBLE_EQ(paper.beta, 0.25);
  EXPECT_THROW(profile_config("laptop"), ConfigError);

  TrainConfig c = desk;
  c.model.unshared_codebook = true;
  c.model.primary_dims = {16, 8, 4};
  c.lr = 5e-4;
  c.seed = 42;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, RejectsUnknownAndInvalid) {
  auto j = desk_profile().to_json();
  j["learning_rate"] = 0.1;
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"patience", 0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"alpha", -1}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"dim", "wide"}}), ConfigError);
  const auto partial = TrainConfig::from_json(nlohmann::json{{"profile", "paper"}, {"seed", 9}});
  EXPECT_EQ(partial.model.dim, 1024u);
  EXPECT_EQ(partial.seed, 9u);
}

TEST(Config, ShippedFilesMatchProfiles) {
  for (const std::string name : {"desk", "paper"}) {
    std::ifstream in(std::string(DOS_SOURCE_DIR) + "/configs/" + name + ".json");
    ASSERT_TRUE(in) << name;
    EXPECT_EQ(TrainConfig::from_json(nlohmann::json::parse(in)).to_json(), profile_config(name).to_json()) << name;
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto r = small_run();
  r.cfg.lr = 0.0;
  r.cfg.kmeans_init = false;
  r.cfg.dead_code_reset = false;
  r.cfg.max_epochs = 2;
  r.cfg.patience = 5;
  const auto result = train(r.cfg, r.data.table, r.splits);
  const DfiModel fresh(r.cfg.model, r.cfg.seed);
  const auto params = fresh.parameters();
  ASSERT_EQ(params.size(), result.best.params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_TRUE(params[i]->value.identical(result.best.params[i].value)) << params[i]->name;
  ASSERT_EQ(result.history.size(), 2u);
  EXPECT_EQ(result.history[0].val_auc, result.history[1].val_auc);
  // Batches are reshuffled, so only the summation order differs.
  EXPECT_NEAR(result.history[0].train.total, result.history[1].train.total, 1e-12 * result.history[0].train.total);
}

TEST(Train, SameSeedSameHistory) {
  auto r = small_run(1);
  r.cfg.max_epochs = 2;
  const auto a = train(r.cfg, r.data.table, r.splits);
  const auto b = train(r.cfg, r.data.table, r.splits);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train.total, b.history[i].train.total);
    EXPECT_EQ(a.history[i].val_auc, b.history[i].val_auc);
    EXPECT_EQ(a.history[i].usage, b.history[i].usage);
  }
  for (std::size_t i = 0; i < a.best.params.size(); ++i)
    EXPECT_TRUE(a.best.params[i].value.identical(b.best.params[i].value));
}

TEST(Train, LoggedComponentsRecombine) {
  auto r = small_run(2);
  r.cfg.max_epochs = 1;
  const auto res = train(r.cfg, r.data.table, r.splits);
  const auto& v = res.history[0].train;
  EXPECT_NEAR(v.total, v.bce + r.cfg.alpha * (v.orth + v.mutual) + v.recon + v.vq, 1e-9 * std::abs(v.total));
}

TEST(Train, DeadCodesComeBackToUse) {
  auto r = small_run(3);
  r.cfg.max_epochs = 8;
  r.cfg.patience = 100;
  const auto res = train(r.cfg, r.data.table, r.splits);
  ASSERT_EQ(res.history.size(), 8u);
  std::size_t reset = 0, revived = 0;
  for (std::size_t e = 0; e + 3 < res.history.size(); ++e) {
    for (std::size_t b = 0; b < res.history[e].reset_codes.size(); ++b) {
      for (std::size_t c : res.history[e].reset_codes[b]) {
        ++reset;
        bool used = false;
        for (std::size_t later = e + 1; later <= e + 3; ++later) used = used || res.history[later].usage[b][c] > 0;
        revived += used;
      }
    }
  }
  ASSERT_GT(reset, 0u);
  EXPECT_EQ(revived, reset);
}

TEST(Train, EarlyStoppingReturnsBestEpoch) {
  auto r = small_run(4);
  r.cfg.max_epochs = 6;
  r.cfg.patience = 1;
  const auto res = train(r.cfg, r.data.table, r.splits);
  EXPECT_LE(res.stopped_epoch, res.best_epoch + 1);
  EXPECT_EQ(res.best.epoch, res.best_epoch);
  double best = 0;
  for (const auto& h : res.history) best = std::max(best, h.val_auc);
  EXPECT_EQ(res.history[res.best_epoch - 1].val_auc, best);
}

TEST(Train, DivergenceKeepsLastFiniteCheckpoint) {
  auto r = small_run(5);
  r.cfg.lr = 1e306;
  r.cfg.max_epochs = 2;
  try {
    train(r.cfg, r.data.table, r.splits);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    EXPECT_FALSE(e.last_finite().params.empty());
    for (const auto& p : e.last_finite().params)
      for (double v : p.value.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Train, TableWidthMismatch) {
  auto r = small_run();
  r.cfg.model.dim = 8;
  EXPECT_THROW(train(r.cfg, r.data.table, r.splits), ConfigMismatch);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    r_ = small_run(6);
    r_.cfg.max_epochs = 1;
    result_ = train(r_.cfg, r_.data.table, r_.splits);
  }
  SmallRun r_;
  TrainResult result_;
  test::TempDir dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  save_checkpoint(result_.best, dir_ / "c.bin");
  const auto back = load_checkpoint(dir_ / "c.bin");
  EXPECT_EQ(back.epoch, result_.best.epoch);
  EXPECT_EQ(back.config.to_json(), result_.best.config.to_json());
  ASSERT_EQ(back.params.size(), result_.best.params.size());
  for (std::size_t i = 0; i < back.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, result_.best.params[i].name);
    EXPECT_TRUE(back.params[i].value.identical(result_.best.params[i].value));
  }
  EXPECT_EQ(back.optimizer.step, result_.best.optimizer.step);
  ASSERT_EQ(back.history.size(), 1u);
  EXPECT_EQ(back.history[0].val_auc, result_.best.history[0].val_auc);
  EXPECT_EQ(back.history[0].usage, result_.best.history[0].usage);

  const auto a = predict_scores(restore_model(result_.best), r_.data.table, r_.splits.test);
  const auto b = predict_scores(restore_model(back), r_.data.table, r_.splits.test);
  EXPECT_EQ(a, b);
}

TEST_F(CheckpointTest, ConfigMismatch) {
  save_checkpoint(result_.best, dir_ / "c.bin");
  TrainConfig other = r_.cfg;
  other.model.dim = 32;
  EXPECT_THROW(load_checkpoint(dir_ / "c.bin", other), ConfigMismatch);
  EXPECT_NO_THROW(load_checkpoint(dir_ / "c.bin", r_.cfg));
}

TEST_F(CheckpointTest, TruncatedIsCorrupt) {
  save_checkpoint(result_.best, dir_ / "c.bin");
  const auto size = std::filesystem::file_size(dir_ / "c.bin");
  std::filesystem::resize_file(dir_ / "c.bin", size / 2);
  EXPECT_THROW(load_checkpoint(dir_ / "c.bin"), CorruptCheckpoint);
}

TEST_F(CheckpointTest, FlippedByteIsCorrupt) {
  save_checkpoint(result_.best, dir_ / "c.bin");
  std::string bytes = test::read_file(dir_ / "c.bin");
  bytes[bytes.size() - 100] ^= 0x40;
  std::ofstream(dir_ / "c.bin", std::ios::binary) << bytes;
  EXPECT_THROW(load_checkpoint(dir_ / "c.bin"), CorruptCheckpoint);
}

TEST_F(CheckpointTest, UnknownVersionIsFormatError) {
  save_checkpoint(result_.best, dir_ / "c.bin");
  std::string bytes = test::read_file(dir_ / "c.bin");
  bytes[8] = 99;  // version follows the 8-byte magic
  std::ofstream(dir_ / "c.bin", std::ios::binary) << bytes;
  try {
    load_checkpoint(dir_ / "c.bin");
    FAIL() << "expected FormatError";
  } catch (const CorruptCheckpoint&) {
    FAIL() << "version mismatch reported as corruption";
  } catch (const FormatError&) {
  }
}

TEST_F(CheckpointTest, NotACheckpoint) {
  std::ofstream(dir_ / "junk.bin") << "hello";
  EXPECT_THROW(load_checkpoint(dir_ / "junk.bin"), CorruptCheckpoint);
}

TEST_F(CheckpointTest, MetricsCsv) {
  write_metrics_csv(result_.history, dir_ / "m.csv");
  std::ifstream in(dir_ / "m.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,train_loss,bce,orth,mutual,recon,vq,val_auc,val_f1");
  EXPECT_EQ(row.substr(0, 2), "1,");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
}

}  // namespace
}  // namespace dos
