#include <benchmark/benchmark.h>

#include "morelab/prefdata.hpp"
#include "morelab/rewardnet.hpp"
#include "morelab/rng.hpp"
#include "morelab/trainer.hpp"

using namespace morelab;

namespace {

std::vector<PreferencePair> random_pairs(int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PreferencePair> pairs(static_cast<std::size_t>(n));
  for (auto& pair : pairs) {
    pair.winner = rng.normal_vector(static_cast<std::size_t>(dim));
    pair.loser = rng.normal_vector(static_cast<std::size_t>(dim));
  }
  return pairs;
}

RewardModel random_model(Arch arch, int dim, int hidden, std::uint64_t seed) {
  Rng rng(seed);
  RewardModel m = init_model(arch, dim, hidden, seed);
  auto params = parameters(m, GradScope::kFull);
  for (auto& p : params) p = rng.normal();
  set_parameters(m, params, GradScope::kFull);
  return m;
}

}  // namespace

static void BM_RankingLossGradientLinear(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto model = random_model(Arch::kLinear, dim, 0, 1);
  const auto pairs = random_pairs(64, dim, 2);
  for (auto _ : state) {
    auto g = ranking_loss_gradient(model, pairs, GradScope::kFull);
    benchmark::DoNotOptimize(g.values.data());
  }
}
BENCHMARK(BM_RankingLossGradientLinear)->Arg(16)->Arg(64);

static void BM_RankingLossGradientMlp(benchmark::State& state) {
  const auto model = random_model(Arch::kMlp, 16, static_cast<int>(state.range(0)), 3);
  const auto pairs = random_pairs(64, 16, 4);
  for (auto _ : state) {
    auto g = ranking_loss_gradient(model, pairs, GradScope::kFull);
    benchmark::DoNotOptimize(g.values.data());
  }
}
BENCHMARK(BM_RankingLossGradientMlp)->Arg(16)->Arg(64);

static void BM_TrainEpochMore(benchmark::State& state) {
  auto spec = make_random_spec(16, 4, {2.0, 2.0, 2.0, 2.0}, LabelNoiseMode::kBradleyTerry,
                               2.0, true, 11);
  spec.n_per_source = 512;
  const auto data = synthesize(spec);
  TrainConfig cfg;
  cfg.scheme = Scheme::kMore;
  cfg.seed = 5;
  for (auto _ : state) {
    auto rm = train(data, cfg);
    benchmark::DoNotOptimize(rm.model.head_weights.data());
  }
}
BENCHMARK(BM_TrainEpochMore)->Unit(benchmark::kMillisecond);
