#include "morelab/moosolver.hpp"

#include <algorithm>
#include <cmath>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"

namespace morelab {

namespace {

void validate(const GradientSet& grads) {
  if (grads.rows.empty()) throw Error("data", "min_norm_weights: empty gradient set");
  const std::size_t p = grads.rows[0].size();
  for (const auto& row : grads.rows) {
    if (row.size() != p)
      throw Error("data", "min_norm_weights: gradient rows differ in length");
    if (!all_finite(row))
      throw Error("numeric", "min_norm_weights: non-finite gradient");
  }
}

std::vector<double> combine_rows(const GradientSet& grads,
                                 std::span<const double> weights) {
  std::vector<double> v(grads.length(), 0.0);
  for (std::size_t i = 0; i < grads.rows.size(); ++i) {
    const double wi = weights[i];
    const auto& row = grads.rows[i];
    for (std::size_t k = 0; k < row.size(); ++k) v[k] += wi * row[k];
  }
  return v;
}

}  // namespace

GradientSet make_gradient_set(std::span<const Gradient> grads) {
  GradientSet set;
  set.rows.reserve(grads.size());
  for (const auto& g : grads) {
    if (set.rows.empty()) {
      set.scope = g.scope;
    } else if (g.scope != set.scope) {
      throw Error("data", "make_gradient_set: mixed gradient scopes");
    }
    set.rows.push_back(g.values);
  }
  validate(set);
  return set;
}

SimplexWeights uniform_weights(int k) {
  if (k < 1) throw Error("data", "uniform_weights: k must be >= 1");
  return SimplexWeights{std::vector<double>(static_cast<std::size_t>(k),
                                            1.0 / static_cast<double>(k))};
}

bool is_simplex_point(const SimplexWeights& weights, double tol) {
  if (weights.values.empty()) return false;
  double sum = 0.0;
  for (double v : weights.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

PairLineSearch min_norm_pair(std::span<const double> g_a, std::span<const double> g_b) {
  if (g_a.size() != g_b.size())
    throw Error("data", "min_norm_pair: length mismatch");
  double diff_sq = 0.0;
  double num = 0.0;  // (g_b - g_a) . g_b
  for (std::size_t k = 0; k < g_a.size(); ++k) {
    const double d = g_a[k] - g_b[k];
    diff_sq += d * d;
    num -= d * g_b[k];
  }
  if (diff_sq == 0.0) return {0.5, norm_sq(g_a)};
  const double gamma = std::clamp(num / diff_sq, 0.0, 1.0);
  double n2 = 0.0;
  for (std::size_t k = 0; k < g_a.size(); ++k) {
    const double v = gamma * g_a[k] + (1.0 - gamma) * g_b[k];
    n2 += v * v;
  }
  return {gamma, n2};
}

MinNormResult min_norm_weights(const GradientSet& grads, const SolverOptions& options,
                               const std::optional<SimplexWeights>& warm_start) {
  validate(grads);
  if (options.max_iters < 1) throw Error("config", "solver: max_iters must be >= 1");
  if (!(options.tol > 0.0)) throw Error("config", "solver: tol must be positive");

  const int k = grads.num_sources();
  if (k == 1) {
    MinNormResult res;
    res.weights.values = {1.0};
    res.norm_sq = norm_sq(grads.rows[0]);
    return res;
  }

  bool all_zero = true;
  for (const auto& row : grads.rows) {
    if (norm_sq(row) != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (all_zero) return {uniform_weights(k), 0.0, 0};

  if (k == 2) {
    const auto ls = min_norm_pair(grads.rows[0], grads.rows[1]);
    MinNormResult res;
    res.weights.values = {ls.gamma, 1.0 - ls.gamma};
    res.norm_sq = ls.min_norm_sq;
    return res;
  }

  std::vector<double> lam;
  if (warm_start) {
    if (static_cast<int>(warm_start->values.size()) != k || !is_simplex_point(*warm_start))
      throw Error("data", "solver: warm start is not a valid simplex point");
    lam = warm_start->values;
  } else {
    lam = uniform_weights(k).values;
  }

  std::vector<double> v = combine_rows(grads, lam);
  MinNormResult res;
  std::vector<double> scores(static_cast<std::size_t>(k));
  std::vector<double> direction(v.size());

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double v_sq = norm_sq(v);
    for (int i = 0; i < k; ++i) scores[static_cast<std::size_t>(i)] = dot(grads.rows[static_cast<std::size_t>(i)], v);

    int fw = 0;
    for (int i = 1; i < k; ++i)
      if (scores[static_cast<std::size_t>(i)] < scores[static_cast<std::size_t>(fw)]) fw = i;
    const double gap_fw = v_sq - scores[static_cast<std::size_t>(fw)];
    // f(x) - f* <= 2 v.(v - g_fw) for f = ||.||^2 over the hull
    if (2.0 * gap_fw <= options.tol) break;

    int away = -1;
    for (int i = 0; i < k; ++i) {
      if (lam[static_cast<std::size_t>(i)] > 0.0 &&
          (away < 0 || scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(away)]))
        away = i;
    }
    const double gap_away = away >= 0 ? scores[static_cast<std::size_t>(away)] - v_sq : 0.0;

    double gamma_max = 1.0;
    int vertex = fw;
    bool is_away = false;
    if (away >= 0 && gap_away > gap_fw && lam[static_cast<std::size_t>(away)] < 1.0) {
      is_away = true;
      vertex = away;
      gamma_max = lam[static_cast<std::size_t>(away)] / (1.0 - lam[static_cast<std::size_t>(away)]);
    }

    const auto& g = grads.rows[static_cast<std::size_t>(vertex)];
    double d_sq = 0.0;
    double vd = 0.0;
    for (std::size_t idx = 0; idx < v.size(); ++idx) {
      const double d = is_away ? v[idx] - g[idx] : g[idx] - v[idx];
      direction[idx] = d;
      d_sq += d * d;
      vd += v[idx] * d;
    }
    if (d_sq == 0.0) break;
    const double gamma = std::clamp(-vd / d_sq, 0.0, gamma_max);
    if (gamma == 0.0) break;

    if (is_away) {
      for (auto& l : lam) l *= 1.0 + gamma;
      lam[static_cast<std::size_t>(vertex)] -= gamma;
      if (lam[static_cast<std::size_t>(vertex)] < 0.0) lam[static_cast<std::size_t>(vertex)] = 0.0;
    } else {
      for (auto& l : lam) l *= 1.0 - gamma;
      lam[static_cast<std::size_t>(vertex)] += gamma;
    }
    v = combine_rows(grads, lam);
    res.iterations = iter + 1;
  }

  double sum = 0.0;
  for (auto& l : lam) {
    if (l < 0.0) l = 0.0;
    sum += l;
  }
  for (auto& l : lam) l /= sum;

  res.weights.values = std::move(lam);
  res.norm_sq = norm_sq(combine_rows(grads, res.weights.values));
  return res;
}

double combined_norm_sq(const GradientSet& grads, const SimplexWeights& weights) {
  validate(grads);
  if (static_cast<int>(weights.values.size()) != grads.num_sources())
    throw Error("data", "combined_norm_sq: weight count mismatch");
  if (!is_simplex_point(weights))
    throw Error("data", "combined_norm_sq: weights are not a simplex point");
  return norm_sq(combine_rows(grads, weights.values));
}

std::vector<double> combine(const GradientSet& grads, const SimplexWeights& weights) {
  if (static_cast<int>(weights.values.size()) != grads.num_sources())
    throw Error("data", "combine: weight count mismatch");
  return combine_rows(grads, weights.values);
}

}  // namespace morelab
