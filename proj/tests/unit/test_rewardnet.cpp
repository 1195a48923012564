#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"
#include "morelab/rewardnet.hpp"
#include "morelab/rng.hpp"

using namespace morelab;

namespace {

PreferencePair make_pair(FeatureVector w, FeatureVector l) {
  PreferencePair p;
  p.winner = std::move(w);
  p.loser = std::move(l);
  return p;
}

RewardModel random_model(Arch arch, int dim, int hidden, Rng& rng) {
  RewardModel model = init_model(arch, dim, hidden, rng.next_u64());
  auto params = parameters(model, GradScope::kFull);
  for (auto& p : params) p = rng.normal();
  set_parameters(model, params, GradScope::kFull);
  return model;
}

std::vector<PreferencePair> random_pairs(int n, int dim, Rng& rng) {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < n; ++i)
    pairs.push_back(make_pair(rng.normal_vector(static_cast<std::size_t>(dim)),
                              rng.normal_vector(static_cast<std::size_t>(dim))));
  return pairs;
}

// central finite differences over the scoped parameter vector
std::vector<double> fd_gradient(const RewardModel& model,
                                std::span<const PreferencePair> pairs, GradScope scope,
                                double eps = 1e-5) {
  std::vector<double> grad(param_count(model, scope));
  const auto base = parameters(model, scope);
  for (std::size_t i = 0; i < base.size(); ++i) {
    RewardModel m = model;
    auto params = base;
    params[i] = base[i] + eps;
    set_parameters(m, params, scope);
    const double hi = ranking_loss(m, pairs);
    params[i] = base[i] - eps;
    set_parameters(m, params, scope);
    const double lo = ranking_loss(m, pairs);
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

double max_rel_err(std::span<const double> analytic, std::span<const double> fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1.0, std::abs(fd[i]));
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_SUITE("rewardnet") {

TEST_CASE("init: linear zeros, mlp zero rewards with nonzero hidden states") {
  const auto linear = init_model(Arch::kLinear, 4, 0, 1);
  FeatureVector phi = {1.0, -2.0, 3.0, 0.5};
  CHECK(reward(linear, phi) == 0.0);

  const auto a = init_model(Arch::kMlp, 4, 3, 42);
  const auto b = init_model(Arch::kMlp, 4, 3, 42);
  CHECK(a.hidden_weights == b.hidden_weights);
  CHECK(reward(a, phi) == 0.0);  // head zeros
  bool nonzero_hidden = false;
  for (double w : a.hidden_weights)
    if (w != 0.0) nonzero_hidden = true;
  CHECK(nonzero_hidden);

  CHECK_THROWS_AS(init_model(Arch::kLinear, 0, 0, 1), Error);
  CHECK_THROWS_AS(init_model(Arch::kMlp, 4, 0, 1), Error);
}

TEST_CASE("reward: linear arithmetic and affine bias shift") {
  RewardModel m = init_model(Arch::kLinear, 2, 0, 0);
  m.head_weights = {1.0, 2.0};
  m.head_bias = 0.5;
  CHECK(reward(m, {1.0, 1.0}) == doctest::Approx(3.5).epsilon(1e-15));

  RewardModel shifted = m;
  shifted.head_bias += 10.0;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto phi = rng.normal_vector(2);
    CHECK(reward(shifted, phi) == doctest::Approx(reward(m, phi) + 10.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(reward(m, {1.0}), Error);
}

TEST_CASE("reward: pure function, repeated calls identical") {
  Rng rng(17);
  const auto m = random_model(Arch::kMlp, 5, 4, rng);
  const auto phi = rng.normal_vector(5);
  const double r1 = reward(m, phi);
  const double r2 = reward(m, phi);
  CHECK(r1 == r2);
}

TEST_CASE("reward_difference: linearity and bias cancellation") {
  RewardModel m = init_model(Arch::kLinear, 3, 0, 0);
  m.head_weights = {2.0, -1.0, 0.5};
  auto pair = make_pair({1.0, 0.0, 2.0}, {0.0, 1.0, 2.0});
  const double expect = dot(m.head_weights, FeatureVector{1.0, -1.0, 0.0});
  CHECK(reward_difference(m, pair) == doctest::Approx(expect).epsilon(1e-15));

  RewardModel shifted = m;
  shifted.head_bias = 123.0;
  CHECK(reward_difference(shifted, pair) == reward_difference(m, pair));

  auto same = make_pair({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0});
  CHECK(reward_difference(m, same) == 0.0);
}

TEST_CASE("ranking_loss: frozen oracle values") {
  // all differences zero -> ln 2
  const auto zero = init_model(Arch::kLinear, 2, 0, 0);
  std::vector<PreferencePair> pairs = {make_pair({1.0, 0.0}, {0.0, 1.0}),
                                       make_pair({0.0, 2.0}, {2.0, 0.0})};
  CHECK(ranking_loss(zero, pairs) == doctest::Approx(0.69314718055994531).epsilon(1e-15));

  // delta = +20 and -20, high-precision softplus references
  RewardModel m = init_model(Arch::kLinear, 1, 0, 0);
  m.head_weights = {20.0};
  std::vector<PreferencePair> plus = {make_pair({1.0}, {0.0})};
  std::vector<PreferencePair> minus = {make_pair({0.0}, {1.0})};
  CHECK(ranking_loss(m, plus) == doctest::Approx(2.0611536203143807e-09).epsilon(1e-12));
  CHECK(ranking_loss(m, minus) == doctest::Approx(20.000000002061153620).epsilon(1e-15));

  CHECK_THROWS_AS(ranking_loss(zero, std::span<const PreferencePair>{}), Error);
}

TEST_CASE("ranking_loss: nonnegative and decreasing in each pair's margin") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    RewardModel m = init_model(Arch::kLinear, 3, 0, 0);
    m.head_weights = rng.normal_vector(3);
    auto pair = make_pair(rng.normal_vector(3), rng.normal_vector(3));
    std::vector<PreferencePair> one = {pair};
    const double loss = ranking_loss(m, one);
    CHECK(loss >= 0.0);

    // scaling the winner along the head direction increases the margin
    auto better = pair;
    for (std::size_t k = 0; k < 3; ++k) better.winner[k] += 0.5 * m.head_weights[k];
    std::vector<PreferencePair> improved = {better};
    CHECK(ranking_loss(m, improved) < loss + 1e-15);
  }
}

TEST_CASE("gradient: zero linear model, single pair closed form") {
  const auto zero = init_model(Arch::kLinear, 3, 0, 0);
  std::vector<PreferencePair> pairs = {make_pair({1.0, 2.0, 3.0}, {0.0, 1.0, 5.0})};
  const auto g = ranking_loss_gradient(zero, pairs, GradScope::kFull);
  // coefficient -sigmoid(0) = -0.5 on (winner - loser); bias gradient 0
  CHECK(g.values[0] == doctest::Approx(-0.5 * 1.0).epsilon(1e-15));
  CHECK(g.values[1] == doctest::Approx(-0.5 * 1.0).epsilon(1e-15));
  CHECK(g.values[2] == doctest::Approx(-0.5 * -2.0).epsilon(1e-15));
  CHECK(g.values[3] == 0.0);
}

TEST_CASE("gradient: linear full equals head_only") {
  Rng rng(7);
  const auto m = random_model(Arch::kLinear, 4, 0, rng);
  const auto pairs = random_pairs(6, 4, rng);
  const auto full = ranking_loss_gradient(m, pairs, GradScope::kFull);
  const auto head = ranking_loss_gradient(m, pairs, GradScope::kHeadOnly);
  CHECK(full.values == head.values);
}

TEST_CASE("gradient: matches central finite differences (both archs, both scopes)") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const bool mlp = trial % 2 == 1;
    const int dim = 2 + static_cast<int>(rng.uniform_below(4));
    const int hidden = 1 + static_cast<int>(rng.uniform_below(3));
    const auto m = random_model(mlp ? Arch::kMlp : Arch::kLinear, dim, hidden, rng);
    const auto pairs = random_pairs(1 + static_cast<int>(rng.uniform_below(4)), dim, rng);
    const GradScope scope = trial % 4 < 2 ? GradScope::kFull : GradScope::kHeadOnly;
    const auto analytic = ranking_loss_gradient(m, pairs, scope);
    const auto fd = fd_gradient(m, pairs, scope);
    CHECK(max_rel_err(analytic.values, fd) <= 1e-6);
  }
}

TEST_CASE("gradient: head block of the mlp full gradient equals head_only") {
  Rng rng(13);
  const auto m = random_model(Arch::kMlp, 5, 3, rng);
  const auto pairs = random_pairs(4, 5, rng);
  const auto full = ranking_loss_gradient(m, pairs, GradScope::kFull);
  const auto head = ranking_loss_gradient(m, pairs, GradScope::kHeadOnly);
  for (std::size_t i = 0; i < head.values.size(); ++i)
    CHECK(full.values[i] == doctest::Approx(head.values[i]).epsilon(1e-15));
}

TEST_CASE("gradient: bias coordinate identically zero, loss bias-invariant") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const bool mlp = trial % 2 == 1;
    const auto m = random_model(mlp ? Arch::kMlp : Arch::kLinear, 3, 2, rng);
    const auto pairs = random_pairs(3, 3, rng);
    const auto g = ranking_loss_gradient(m, pairs, GradScope::kFull);
    const std::size_t bias_idx = m.head_weights.size();
    CHECK(g.values[bias_idx] == 0.0);

    RewardModel shifted = m;
    shifted.head_bias += rng.normal();
    CHECK(ranking_loss(shifted, pairs) == doctest::Approx(ranking_loss(m, pairs)).epsilon(1e-15));
  }
}

TEST_CASE("parameters/set_parameters round trip") {
  Rng rng(23);
  for (Arch arch : {Arch::kLinear, Arch::kMlp}) {
    const auto m = random_model(arch, 4, 3, rng);
    for (GradScope scope : {GradScope::kFull, GradScope::kHeadOnly}) {
      const auto params = parameters(m, scope);
      CHECK(params.size() == param_count(m, scope));
      RewardModel copy = m;
      set_parameters(copy, params, scope);
      CHECK(parameters(copy, GradScope::kFull) == parameters(m, GradScope::kFull));
    }
  }
  auto m = init_model(Arch::kLinear, 2, 0, 0);
  CHECK_THROWS_AS(set_parameters(m, std::vector<double>{1.0}, GradScope::kFull), Error);
}

TEST_CASE("checkpoint: save/load round trip for both archs") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "morelab_rewardnet_tests";
  fs::create_directories(dir);
  Rng rng(29);
  for (Arch arch : {Arch::kLinear, Arch::kMlp}) {
    const auto m = random_model(arch, 3, 2, rng);
    const auto path = (dir / (to_string(arch) + ".json")).string();
    save_checkpoint(m, path, "0123456789abcdef", 77);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.model.arch == m.arch);
    CHECK(loaded.model.dim == m.dim);
    CHECK(loaded.model.head_weights == m.head_weights);
    CHECK(loaded.model.head_bias == m.head_bias);
    CHECK(loaded.model.hidden_weights == m.hidden_weights);
    CHECK(loaded.model.hidden_bias == m.hidden_bias);
    CHECK(loaded.config_digest == "0123456789abcdef");
    CHECK(loaded.seed == 77);
    // scoring agrees exactly
    const auto phi = rng.normal_vector(3);
    CHECK(reward(loaded.model, phi) == reward(m, phi));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.json").string()), Error);
}

}  // TEST_SUITE
