#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morelab/prefdata.hpp"
#include "morelab/rewardnet.hpp"

namespace morelab {

// The ground truth is always y = 1 (the recorded winner is preferred), so a
// pair is predicted correctly exactly when the reward difference is positive.
struct PairPrediction {
  double confidence = 0.5;  // sigmoid(delta), or max(p, 1-p) when folded
  int predicted = 0;
  int truth = 1;
};

// Exact ties (delta == 0) count as incorrect.
PairPrediction predict(double reward_diff, bool folded_confidence = false);

struct BinStat {
  int count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

struct CalibrationReport {
  int num_bins = 0;
  int total = 0;
  std::vector<BinStat> bins;
  double ece = 0.0;
};

// Equal-width binning of [0,1]: bin m (1-based) holds confidence in
// ((m-1)/M, m/M]; confidence 0 goes to bin 1. Empty bins contribute 0.
CalibrationReport ece(std::span<const PairPrediction> predictions, int num_bins = 10);

void write_reliability_csv(const CalibrationReport& report, std::ostream& out,
                           const std::vector<std::string>& header_comments = {});

struct AccuracyReport {
  double overall = 0.0;
  std::vector<double> per_source;
  std::vector<int> per_source_count;
};

AccuracyReport preference_accuracy(const RewardModel& model,
                                   const DiversifiedDataset& testset);

struct OutlierStats {
  int count = 0;
  std::optional<double> mean;  // absent when there are no outliers
};

struct RewardDiffStats {
  int n = 0;
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  OutlierStats positive;  // delta > q3 + 1.5 iqr
  OutlierStats negative;  // delta < q1 - 1.5 iqr
};

// Quartiles by linear interpolation between order statistics; Tukey fences
// at fence * IQR (1.5 by default) over the pooled reward differences.
RewardDiffStats reward_diff_stats(std::span<const double> diffs, double fence = 1.5);
RewardDiffStats reward_diff_stats(const RewardModel& model,
                                  const DiversifiedDataset& testset,
                                  double fence = 1.5);

// Linear interpolation quantile of a sorted sample at q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// Cosine distance between the learned linear head and the generating shared
// weight; a zero head is defined as distance 1. Linear models only.
double drift_error(const RewardModel& model, const SynthesisSpec& spec);

// Spearman rank correlation with average ranks for ties; nullopt when either
// side has zero rank variance.
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

// One row of the evaluation report (per source, plus a pooled row).
struct MetricsRow {
  std::string scheme;
  std::uint64_t seed = 0;
  std::string source;
  int n = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  RewardDiffStats diff_stats;
};

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out,
                       const std::vector<std::string>& header_comments = {});

}  // namespace morelab
