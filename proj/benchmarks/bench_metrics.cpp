#include <benchmark/benchmark.h>

#include "morelab/metrics.hpp"
#include "morelab/rng.hpp"

using namespace morelab;

static void BM_Ece(benchmark::State& state) {
  Rng rng(9);
  std::vector<PairPrediction> preds(static_cast<std::size_t>(state.range(0)));
  for (auto& p : preds) {
    p.confidence = rng.uniform();
    p.predicted = static_cast<int>(rng.uniform_below(2));
    p.truth = 1;
  }
  for (auto _ : state) {
    auto report = ece(preds, 10);
    benchmark::DoNotOptimize(report.ece);
  }
}
BENCHMARK(BM_Ece)->Arg(2000)->Arg(20000);

static void BM_RewardDiffStats(benchmark::State& state) {
  Rng rng(13);
  std::vector<double> diffs(static_cast<std::size_t>(state.range(0)));
  for (auto& d : diffs) d = rng.normal();
  for (auto _ : state) {
    auto stats = reward_diff_stats(diffs);
    benchmark::DoNotOptimize(stats.median);
  }
}
BENCHMARK(BM_RewardDiffStats)->Arg(2000)->Arg(20000);

static void BM_Spearman(benchmark::State& state) {
  Rng rng(17);
  std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = rng.normal();
    ys[i] = rng.normal();
  }
  for (auto _ : state) {
    auto rho = spearman(xs, ys);
    benchmark::DoNotOptimize(rho);
  }
}
BENCHMARK(BM_Spearman)->Arg(100)->Arg(10000);
