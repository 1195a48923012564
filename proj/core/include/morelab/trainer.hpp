#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "morelab/moosolver.hpp"
#include "morelab/prefdata.hpp"
#include "morelab/rewardnet.hpp"

namespace morelab {

enum class Scheme { kSingle, kMultiTask, kMore };

std::string to_string(Scheme scheme);

// Parses "single:<i>" | "multitask" | "more"; returns the scheme and, for
// single, the source index.
std::pair<Scheme, int> parse_scheme(const std::string& text);

// Filesystem-safe label, e.g. "single0", "multitask", "more".
std::string scheme_label(Scheme scheme, int single_source);

enum class LambdaMode { kSolve, kFixed };

struct TrainConfig {
  Scheme scheme = Scheme::kMore;
  int single_source = 0;
  int per_source_batch = 16;
  int epochs = 1;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  Arch arch = Arch::kLinear;
  int hidden = 16;  // mlp only
  LambdaMode lambda_mode = LambdaMode::kSolve;
  std::vector<double> fixed_lambda;  // kFixed only; simplex point of size K
  SolverOptions solver;
  bool warm_start_lambda = false;
};

struct LambdaStep {
  int step = 0;
  std::vector<double> lambda;
  double norm_sq = 0.0;
  std::vector<double> per_source_loss;
};

struct LambdaTrace {
  std::vector<LambdaStep> steps;
};

// CSV with columns step, lambda_0..lambda_{K-1}, norm_sq, loss_0..loss_{K-1}.
void write_trace_csv(const LambdaTrace& trace, int num_sources, std::ostream& out,
                     const std::vector<std::string>& header_comments = {});

struct TrainedRM {
  RewardModel model;
  TrainConfig config;
  LambdaTrace trace;  // empty for non-more schemes
  std::vector<double> step_losses;  // batch loss at the pre-update model
};

struct StepInfo {
  int step = 0;   // global step, 0-based
  int epoch = 0;  // 0-based
  double loss = 0.0;
  const RewardModel& model;  // pre-update parameters
};

using StepObserver = std::function<void(const StepInfo&)>;

// Epoch SGD from a zero-reward init, deterministic given (dataset, config).
//   single:    batches from one source only, loss as in ranking_loss
//   multitask: diverse batches, loss = mean over the batch union
//   more:      diverse batches; per-source losses combined with simplex
//              weights chosen per step to minimize the norm of the combined
//              head gradient (head-only solve, full-gradient update)
TrainedRM train(const DiversifiedDataset& dataset, const TrainConfig& config,
                const StepObserver& observer = {});

// One plain SGD update over the full parameter vector.
RewardModel sgd_step(const RewardModel& model, const Gradient& grad,
                     double learning_rate);

// Averaging baseline: arithmetic mean of the models' reward differences.
double ensemble_average_reward(std::span<const RewardModel> models,
                               const PreferencePair& pair);

}  // namespace morelab
