#include <benchmark/benchmark.h>

#include "morelab/moosolver.hpp"
#include "morelab/rng.hpp"

using namespace morelab;

namespace {

GradientSet random_set(int k, int p, std::uint64_t seed) {
  Rng rng(seed);
  GradientSet set;
  for (int i = 0; i < k; ++i) {
    std::vector<double> row(static_cast<std::size_t>(p));
    for (auto& v : row) v = rng.normal();
    set.rows.push_back(std::move(row));
  }
  return set;
}

}  // namespace

static void BM_MinNormWeights(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const auto set = random_set(k, p, 42);
  for (auto _ : state) {
    auto res = min_norm_weights(set);
    benchmark::DoNotOptimize(res.norm_sq);
  }
}
BENCHMARK(BM_MinNormWeights)->Args({2, 17})->Args({5, 17})->Args({8, 65});

static void BM_MinNormPair(benchmark::State& state) {
  const auto set = random_set(2, static_cast<int>(state.range(0)), 7);
  for (auto _ : state) {
    auto ls = min_norm_pair(set.rows[0], set.rows[1]);
    benchmark::DoNotOptimize(ls.min_norm_sq);
  }
}
BENCHMARK(BM_MinNormPair)->Arg(17)->Arg(1024);
