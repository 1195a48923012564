#pragma once

#include <optional>
#include <span>
#include <vector>

#include "morelab/rewardnet.hpp"

namespace morelab {

// K gradient rows of equal length, one per preference source.
struct GradientSet {
  std::vector<std::vector<double>> rows;
  GradScope scope = GradScope::kHeadOnly;

  int num_sources() const { return static_cast<int>(rows.size()); }
  std::size_t length() const { return rows.empty() ? 0 : rows[0].size(); }
};

GradientSet make_gradient_set(std::span<const Gradient> grads);

// Point on the probability simplex: values >= 0, sum == 1 (within 1e-9).
struct SimplexWeights {
  std::vector<double> values;
};

SimplexWeights uniform_weights(int k);
bool is_simplex_point(const SimplexWeights& weights, double tol = 1e-9);

struct SolverOptions {
  int max_iters = 256;
  double tol = 1e-10;  // certified duality-gap bound on norm_sq suboptimality
};

struct PairLineSearch {
  double gamma;        // weight on g_a, clipped to [0, 1]
  double min_norm_sq;  // ||gamma g_a + (1 - gamma) g_b||^2 at the minimizer
};

// Closed-form minimizer of ||gamma g_a + (1 - gamma) g_b||^2 over [0, 1].
// Equal inputs return gamma = 0.5 and ||g_a||^2.
PairLineSearch min_norm_pair(std::span<const double> g_a, std::span<const double> g_b);

struct MinNormResult {
  SimplexWeights weights;
  double norm_sq = 0.0;
  int iterations = 0;
};

// Minimum-norm point of the convex hull of the gradient rows, parameterized
// by simplex weights: argmin over the simplex of ||sum_i w_i g_i||^2.
// K=1 is trivial, K=2 uses the closed form, K>=3 runs Frank-Wolfe with away
// steps and exact line search from a uniform start (or `warm_start`).
// Direction ties break toward the lowest source index. An all-zero gradient
// set yields uniform weights and norm 0.
MinNormResult min_norm_weights(const GradientSet& grads,
                               const SolverOptions& options = {},
                               const std::optional<SimplexWeights>& warm_start = std::nullopt);

// ||sum_i weights_i g_i||^2, exactly as accumulated.
double combined_norm_sq(const GradientSet& grads, const SimplexWeights& weights);

// sum_i weights_i g_i as a vector (used to reweight full gradients).
std::vector<double> combine(const GradientSet& grads, const SimplexWeights& weights);

}  // namespace morelab
