// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#include <dos/graph.hpp>
#include <dos/kmeans.hpp>
#include <dos/ops.hpp>
#include <dos/random.hpp>

#include <benchmark/benchmark.h>

namespace {

using namespace dos;

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto a = make_parameter("a", normal_tensor(n, n, 1.0, rng));
  auto b = make_parameter("b", normal_tensor(n, n, 1.0, rng));
  for (auto _ : state) {
    Graph g;
    const Var loss = sum_squares(matmul(g.param(a), g.param(b)));
    benchmark::DoNotOptimize(g.backward(loss));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_Attention(benchmark::State& state) {
  const std::size_t batch = 128, seq = 10, d = 32;
  Rng rng(2);
  auto x = make_parameter("x", normal_tensor(batch * seq, d, 1.0, rng));
  const bool causal = state.range(0) != 0;
  for (auto _ : state) {
    Graph g;
    const Var h = g.param(x);
    const Var loss = sum_squares(attention(h, h, h, seq, 1, causal));
    benchmark::DoNotOptimize(g.backward(loss));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(1);

void BM_NearestRows(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor points = normal_tensor(1280, 32, 1.0, rng);
  const Tensor codes = normal_tensor(k, 32, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_rows(points, codes));
  state.SetItemsProcessed(state.iterations() * 1280);
}
BENCHMARK(BM_NearestRows)->Arg(64)->Arg(256)->Arg(1024);

void BM_KMeans(benchmark::State& state) {
  Rng data_rng(4);
  const Tensor points = normal_tensor(2000, 32, 1.0, data_rng);
  for (auto _ : state) {
    Rng rng(5);
    benchmark::DoNotOptimize(kmeans(points, static_cast<std::size_t>(state.range(0)), rng));
  }
}
BENCHMARK(BM_KMeans)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
