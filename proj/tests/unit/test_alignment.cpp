#include <doctest.h>

#include <cmath>

#include "morelab/alignment.hpp"
#include "morelab/error.hpp"
#include "morelab/numeric.hpp"
#include "morelab/rng.hpp"

using namespace morelab;

namespace {

SynthesisSpec study_spec(std::uint64_t seed, int k = 3) {
  auto spec = make_random_spec(8, k, std::vector<double>(static_cast<std::size_t>(k), 1.5),
                               LabelNoiseMode::kBradleyTerry, 2.0, true, seed);
  spec.n_per_source = 128;
  return spec;
}

RewardModel linear_model(const FeatureVector& weights, double bias = 0.0) {
  RewardModel m = init_model(Arch::kLinear, static_cast<int>(weights.size()), 0, 0);
  m.head_weights = weights;
  m.head_bias = bias;
  return m;
}

}  // namespace

TEST_SUITE("alignment") {

TEST_CASE("generate_candidates: shape, determinism, attached true rewards") {
  const auto spec = study_spec(1);
  const auto pool = generate_candidates(spec, 50, 4, 9);
  CHECK(pool.num_prompts() == 50);
  CHECK(pool.candidates_per_prompt == 4);
  for (std::size_t p = 0; p < pool.num_prompts(); ++p) {
    REQUIRE(pool.candidates[p].size() == 4);
    for (std::size_t s = 0; s < 4; ++s)
      CHECK(pool.true_rewards[p][s] ==
            doctest::Approx(dot(spec.shared_weight, pool.candidates[p][s])).epsilon(1e-15));
  }

  const auto again = generate_candidates(spec, 50, 4, 9);
  CHECK(pool.candidates == again.candidates);

  const auto empty = generate_candidates(spec, 0, 4, 9);
  CHECK(empty.num_prompts() == 0);
  CHECK_THROWS_AS(generate_candidates(spec, 10, 1, 9), Error);
}

TEST_CASE("reject_sample: ground-truth model matches the oracle argmax") {
  const auto spec = study_spec(2);
  const auto pool = generate_candidates(spec, 200, 4, 5);
  const auto truth = linear_model(spec.shared_weight);
  const auto selections = reject_sample(truth, pool);
  for (std::size_t p = 0; p < pool.num_prompts(); ++p) {
    int oracle = 0;
    for (std::size_t s = 1; s < pool.true_rewards[p].size(); ++s)
      if (pool.true_rewards[p][s] > pool.true_rewards[p][static_cast<std::size_t>(oracle)])
        oracle = static_cast<int>(s);
    CHECK(selections[p] == oracle);
  }
}

TEST_CASE("reject_sample: zero model ties to index 0") {
  const auto spec = study_spec(3);
  const auto pool = generate_candidates(spec, 20, 3, 7);
  const auto zero = linear_model(FeatureVector(8, 0.0));
  for (int sel : reject_sample(zero, pool)) CHECK(sel == 0);
}

TEST_CASE("reject_sample: invariant under positive affine reward transforms") {
  const auto spec = study_spec(4);
  const auto pool = generate_candidates(spec, 100, 4, 11);
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureVector w = rng.normal_vector(8);
    const auto base = reject_sample(linear_model(w), pool);
    const double scale = 0.01 + 10.0 * rng.uniform();
    const double bias = rng.normal() * 5.0;
    FeatureVector scaled = w;
    for (auto& v : scaled) v *= scale;
    const auto transformed = reject_sample(linear_model(scaled, bias), pool);
    CHECK(base == transformed);
  }
}

TEST_CASE("alignment_score: oracle selections give zero regret exactly") {
  const auto spec = study_spec(5);
  const auto pool = generate_candidates(spec, 300, 4, 17);
  const auto truth = linear_model(spec.shared_weight);
  const auto score = alignment_score(reject_sample(truth, pool), pool);
  CHECK(score.selected_mean == score.oracle_mean);  // exact, same doubles
  CHECK(score.random_mean <= score.oracle_mean);
}

TEST_CASE("alignment_score: two-candidate arithmetic") {
  CandidatePool pool;
  pool.dim = 1;
  pool.candidates_per_prompt = 2;
  pool.candidates = {{FeatureVector{0.0}, FeatureVector{1.0}}};
  pool.true_rewards = {{0.0, 1.0}};
  const auto score = alignment_score(std::vector<int>{1}, pool);
  CHECK(score.selected_mean == 1.0);
  CHECK(score.oracle_mean == 1.0);
  CHECK(score.random_mean == 0.5);

  CHECK_THROWS_AS(alignment_score(std::vector<int>{}, pool), Error);
  CHECK_THROWS_AS(alignment_score(std::vector<int>{5}, pool), Error);
}

TEST_CASE("alignment_score: random selections approach the random mean") {
  const auto spec = study_spec(6);
  const auto pool = generate_candidates(spec, 4000, 4, 19);
  Rng rng(23);
  std::vector<int> random_sel(pool.num_prompts());
  for (auto& s : random_sel) s = static_cast<int>(rng.uniform_below(4));
  const auto score = alignment_score(random_sel, pool);
  // Monte-Carlo: sd of the mean ~ |w*| sqrt(1/n); 5 sigma margin
  const double sigma = norm(spec.shared_weight) / std::sqrt(4000.0);
  CHECK(std::abs(score.selected_mean - score.random_mean) <= 5.0 * sigma);
}

TEST_CASE("ece_alignment_study: oracle dominance and degenerate duplicates") {
  const auto spec = study_spec(7);
  const auto pool = generate_candidates(spec, 400, 4, 29);
  auto shared_spec = shared_test_spec(spec, 400, 31);
  const auto shared = synthesize(shared_spec);

  auto as_trained = [&](const FeatureVector& w, std::uint64_t seed) {
    TrainedRM rm;
    rm.model = linear_model(w);
    rm.config.scheme = Scheme::kMore;
    rm.config.seed = seed;
    return rm;
  };

  Rng rng(37);
  std::vector<TrainedRM> rms;
  rms.push_back(as_trained(spec.shared_weight, 1));          // ground truth
  rms.push_back(as_trained(FeatureVector(8, 0.0), 2));       // zero model
  rms.push_back(as_trained(rng.normal_vector(8), 3));        // arbitrary

  const auto outcome = ece_alignment_study(rms, pool, shared);
  REQUIRE(outcome.results.size() == 3);
  for (std::size_t i = 1; i < outcome.results.size(); ++i)
    CHECK(outcome.results[0].selected_mean >= outcome.results[i].selected_mean);
  CHECK(outcome.results[0].regret == 0.0);

  // duplicated identical models: zero rank variance, rho unset
  std::vector<TrainedRM> dupes;
  for (std::uint64_t s = 1; s <= 3; ++s) dupes.push_back(as_trained(spec.shared_weight, s));
  const auto degenerate = ece_alignment_study(dupes, pool, shared);
  CHECK_FALSE(degenerate.spearman_rho.has_value());

  CHECK_THROWS_AS(
      ece_alignment_study(std::vector<TrainedRM>(rms.begin(), rms.begin() + 2), pool, shared),
      Error);
}

TEST_CASE("ece_alignment_study: deterministic given fixed inputs") {
  const auto spec = study_spec(8);
  const auto pool = generate_candidates(spec, 100, 4, 41);
  const auto shared = synthesize(shared_test_spec(spec, 200, 43));
  Rng rng(47);
  std::vector<TrainedRM> rms;
  for (std::uint64_t s = 0; s < 4; ++s) {
    TrainedRM rm;
    rm.model = linear_model(rng.normal_vector(8));
    rm.config.seed = s;
    rms.push_back(std::move(rm));
  }
  const auto a = ece_alignment_study(rms, pool, shared);
  const auto b = ece_alignment_study(rms, pool, shared);
  REQUIRE(a.results.size() == b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(a.results[i].ece == b.results[i].ece);
    CHECK(a.results[i].selected_mean == b.results[i].selected_mean);
  }
  CHECK(a.spearman_rho == b.spearman_rho);
}

}  // TEST_SUITE
