// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/dfi.hpp>
#include <dos/embeddings.hpp>
#include <dos/ops.hpp>
#include <dos/orq.hpp>
#include <dos/training.hpp>

#include <benchmark/benchmark.h>

#include <span>

namespace {

using namespace dos;

void BM_OrqForwardBackward(benchmark::State& state) {
  Rng rng(1);
  OrqStackConfig cfg;  // d 32, L 3, K 64
  const auto stack = make_orq_stack("b", cfg, rng);
  auto x = make_parameter("x", normal_tensor(1280, cfg.dim, 1.0, rng));
  for (auto _ : state) {
    Graph g;
    const Var in = g.param(x);
    const auto trace = orq_forward(g, stack, in);
    const Var loss = vq_loss(g, trace, 0.25) + sum_squares(in - decoder_free_reconstruct(g, stack, trace));
    benchmark::DoNotOptimize(g.backward(loss));
  }
}
BENCHMARK(BM_OrqForwardBackward)->Unit(benchmark::kMillisecond);

// One optimizer step of the desk profile on a 128-sample batch.
void BM_DeskTrainStep(benchmark::State& state) {
  const TrainConfig cfg = desk_profile();
  SyntheticConfig scfg;
  scfg.n_samples = cfg.batch_size;
  const auto data = gen_synthetic(scfg, 0);
  DfiModel model(cfg.model, 0);
  Adam adam(model.parameters(), cfg.lr);
  const Batch batch = make_batch(data.table, data.samples, cfg.model);
  for (auto _ : state) {
    Graph g;
    const auto out = total_loss(g, model, batch, cfg.alpha, cfg.beta);
    adam.step(g.backward(out.terms.total));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size));
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

void BM_ExportSids(benchmark::State& state) {
  const auto data = gen_synthetic(SyntheticConfig{}, 0);
  const DfiModel model(desk_profile().model, 0);
  for (auto _ : state) benchmark::DoNotOptimize(export_item_sids(model, data.table));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.table.n_items()));
}
BENCHMARK(BM_ExportSids)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
