#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morelab/metrics.hpp"
#include "morelab/prefdata.hpp"
#include "morelab/trainer.hpp"

namespace morelab {

// Best-of-S candidate features per prompt, with the generating shared reward
// of every candidate attached (synthetic pools only).
struct CandidatePool {
  int dim = 0;
  int candidates_per_prompt = 0;  // S
  std::vector<std::vector<FeatureVector>> candidates;  // [prompt][s]
  std::vector<std::vector<double>> true_rewards;       // shared reward per candidate

  std::size_t num_prompts() const { return candidates.size(); }
};

// S i.i.d. standard-normal candidates per prompt; true reward is the spec's
// shared weight dotted with the candidate.
CandidatePool generate_candidates(const SynthesisSpec& spec, int num_prompts,
                                  int candidates_per_prompt, std::uint64_t seed);

// Per prompt, the index of the highest-reward candidate under the model;
// ties break to the lowest index.
std::vector<int> reject_sample(const RewardModel& model, const CandidatePool& pool);

struct AlignmentScore {
  double selected_mean = 0.0;  // mean true reward of the chosen candidates
  double oracle_mean = 0.0;    // mean of per-prompt best true reward
  double random_mean = 0.0;    // mean of per-prompt average true reward
};

AlignmentScore alignment_score(std::span<const int> selections,
                               const CandidatePool& pool);

struct AlignmentResult {
  std::string rm_id;
  std::string scheme;
  std::uint64_t seed = 0;
  double ece = 0.0;
  double selected_mean = 0.0;
  double oracle_mean = 0.0;
  double random_mean = 0.0;
  double regret = 0.0;  // oracle_mean - selected_mean
};

struct StudyOutcome {
  std::vector<AlignmentResult> results;
  std::optional<double> spearman_rho;  // rank correlation of (ece, selected_mean)
};

// Per RM: calibration error on the shared testset and best-of-S selection
// quality on the pool, plus the rank correlation across RMs. Requires at
// least 3 RMs; identical RMs leave the correlation unset (zero rank variance).
StudyOutcome ece_alignment_study(std::span<const TrainedRM> rms,
                                 const CandidatePool& pool,
                                 const DiversifiedDataset& shared_testset,
                                 int num_bins = 10, bool folded_confidence = false);

}  // namespace morelab
