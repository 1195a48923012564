#include "morelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"

namespace morelab {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 0-based bin of the interval rule; arithmetic guess corrected against the
// exact comparisons so boundary values land per the ((m-1)/M, m/M] contract.
int bin_index(double p, int num_bins) {
  int idx = static_cast<int>(std::ceil(p * num_bins)) - 1;
  idx = std::clamp(idx, 0, num_bins - 1);
  while (idx > 0 && p <= static_cast<double>(idx) / num_bins) --idx;
  while (idx < num_bins - 1 && p > static_cast<double>(idx + 1) / num_bins) ++idx;
  return idx;
}

}  // namespace

PairPrediction predict(double reward_diff, bool folded_confidence) {
  if (!std::isfinite(reward_diff))
    throw Error("numeric", "predict: non-finite reward difference");
  PairPrediction pred;
  const double p = sigmoid(reward_diff);
  pred.confidence = folded_confidence ? std::max(p, 1.0 - p) : p;
  pred.predicted = reward_diff > 0.0 ? 1 : 0;
  pred.truth = 1;
  return pred;
}

CalibrationReport ece(std::span<const PairPrediction> predictions, int num_bins) {
  if (predictions.empty()) throw Error("data", "ece: empty prediction list");
  if (num_bins < 1) throw Error("data", "ece: num_bins must be >= 1");

  CalibrationReport report;
  report.num_bins = num_bins;
  report.total = static_cast<int>(predictions.size());
  report.bins.assign(static_cast<std::size_t>(num_bins), BinStat{});

  std::vector<int> correct(static_cast<std::size_t>(num_bins), 0);
  std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
  for (const auto& pred : predictions) {
    if (!(pred.confidence >= 0.0 && pred.confidence <= 1.0))
      throw Error("data", "ece: confidence outside [0, 1]");
    const auto b = static_cast<std::size_t>(bin_index(pred.confidence, num_bins));
    report.bins[b].count += 1;
    if (pred.predicted == pred.truth) correct[b] += 1;
    conf_sum[b] += pred.confidence;
  }

  double e = 0.0;
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    bin.accuracy = static_cast<double>(correct[b]) / bin.count;
    bin.confidence = conf_sum[b] / bin.count;
    e += (static_cast<double>(bin.count) / report.total) *
         std::abs(bin.accuracy - bin.confidence);
  }
  report.ece = e;
  return report;
}

void write_reliability_csv(const CalibrationReport& report, std::ostream& out,
                           const std::vector<std::string>& header_comments) {
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "bin_low,bin_high,count,acc,conf\n";
  for (int m = 0; m < report.num_bins; ++m) {
    const auto& bin = report.bins[static_cast<std::size_t>(m)];
    out << fmt17(static_cast<double>(m) / report.num_bins) << ","
        << fmt17(static_cast<double>(m + 1) / report.num_bins) << "," << bin.count << ",";
    if (bin.count > 0) {
      out << fmt17(bin.accuracy) << "," << fmt17(bin.confidence);
    } else {
      out << ",";
    }
    out << "\n";
  }
}

AccuracyReport preference_accuracy(const RewardModel& model,
                                   const DiversifiedDataset& testset) {
  if (testset.total_pairs() == 0) throw Error("data", "preference_accuracy: empty testset");
  AccuracyReport report;
  std::size_t correct_total = 0;
  for (const auto& group : testset.groups) {
    std::size_t correct = 0;
    for (const auto& pair : group) {
      if (reward_difference(model, pair) > 0.0) ++correct;
    }
    correct_total += correct;
    report.per_source_count.push_back(static_cast<int>(group.size()));
    report.per_source.push_back(
        group.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(group.size()));
  }
  report.overall = static_cast<double>(correct_total) /
                   static_cast<double>(testset.total_pairs());
  return report;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("data", "quantile of empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

RewardDiffStats reward_diff_stats(std::span<const double> diffs, double fence) {
  if (diffs.empty()) throw Error("data", "reward_diff_stats: empty sample");
  if (!(fence >= 0.0)) throw Error("data", "reward_diff_stats: fence must be >= 0");
  RewardDiffStats stats;
  stats.n = static_cast<int>(diffs.size());

  double sum = 0.0;
  for (double d : diffs) sum += d;
  stats.mean = sum / static_cast<double>(diffs.size());

  std::vector<double> sorted(diffs.begin(), diffs.end());
  std::sort(sorted.begin(), sorted.end());
  stats.q1 = quantile_sorted(sorted, 0.25);
  stats.median = quantile_sorted(sorted, 0.5);
  stats.q3 = quantile_sorted(sorted, 0.75);

  const double iqr = stats.q3 - stats.q1;
  const double hi = stats.q3 + fence * iqr;
  const double lo = stats.q1 - fence * iqr;
  double pos_sum = 0.0, neg_sum = 0.0;
  for (double d : diffs) {
    if (d > hi) {
      stats.positive.count += 1;
      pos_sum += d;
    } else if (d < lo) {
      stats.negative.count += 1;
      neg_sum += d;
    }
  }
  if (stats.positive.count > 0) stats.positive.mean = pos_sum / stats.positive.count;
  if (stats.negative.count > 0) stats.negative.mean = neg_sum / stats.negative.count;
  return stats;
}

RewardDiffStats reward_diff_stats(const RewardModel& model,
                                  const DiversifiedDataset& testset, double fence) {
  if (testset.total_pairs() == 0) throw Error("data", "reward_diff_stats: empty testset");
  std::vector<double> diffs;
  diffs.reserve(testset.total_pairs());
  for (const auto& group : testset.groups)
    for (const auto& pair : group) diffs.push_back(reward_difference(model, pair));
  return reward_diff_stats(diffs, fence);
}

double drift_error(const RewardModel& model, const SynthesisSpec& spec) {
  if (model.arch != Arch::kLinear)
    throw Error("data", "drift_error is defined for linear models only");
  if (static_cast<int>(spec.shared_weight.size()) != model.dim)
    throw Error("data", "drift_error: dimension mismatch");
  const double wn = norm(model.head_weights);
  const double sn = norm(spec.shared_weight);
  if (wn == 0.0) return 1.0;
  return 1.0 - dot(model.head_weights, spec.shared_weight) / (wn * sn);
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("data", "spearman: length mismatch");
  if (xs.size() < 2) throw Error("data", "spearman: need at least 2 points");

  auto ranks = [](std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };

  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out,
                       const std::vector<std::string>& header_comments) {
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "scheme,seed,source,n,accuracy,ece,mean_diff,q1,q2,q3,"
         "pos_outlier_count,pos_outlier_mean,neg_outlier_count,neg_outlier_mean\n";
  for (const auto& row : rows) {
    out << row.scheme << "," << row.seed << "," << row.source << "," << row.n << ","
        << fmt17(row.accuracy) << "," << fmt17(row.ece) << ","
        << fmt17(row.diff_stats.mean) << "," << fmt17(row.diff_stats.q1) << ","
        << fmt17(row.diff_stats.median) << "," << fmt17(row.diff_stats.q3) << ","
        << row.diff_stats.positive.count << ",";
    if (row.diff_stats.positive.mean) out << fmt17(*row.diff_stats.positive.mean);
    out << "," << row.diff_stats.negative.count << ",";
    if (row.diff_stats.negative.mean) out << fmt17(*row.diff_stats.negative.mean);
    out << "\n";
  }
}

}  // namespace morelab
