#include "morelab/alignment.hpp"

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"
#include "morelab/rng.hpp"

namespace morelab {

CandidatePool generate_candidates(const SynthesisSpec& spec, int num_prompts,
                                  int candidates_per_prompt, std::uint64_t seed) {
  if (candidates_per_prompt < 2)
    throw Error("data", "generate_candidates: need at least 2 candidates per prompt");
  if (num_prompts < 0) throw Error("data", "generate_candidates: negative prompt count");

  CandidatePool pool;
  pool.dim = spec.dim;
  pool.candidates_per_prompt = candidates_per_prompt;
  Rng rng(seed);
  pool.candidates.reserve(static_cast<std::size_t>(num_prompts));
  pool.true_rewards.reserve(static_cast<std::size_t>(num_prompts));
  for (int p = 0; p < num_prompts; ++p) {
    std::vector<FeatureVector> cands;
    std::vector<double> rewards;
    cands.reserve(static_cast<std::size_t>(candidates_per_prompt));
    rewards.reserve(static_cast<std::size_t>(candidates_per_prompt));
    for (int s = 0; s < candidates_per_prompt; ++s) {
      FeatureVector phi = rng.normal_vector(static_cast<std::size_t>(spec.dim));
      rewards.push_back(dot(spec.shared_weight, phi));
      cands.push_back(std::move(phi));
    }
    pool.candidates.push_back(std::move(cands));
    pool.true_rewards.push_back(std::move(rewards));
  }
  return pool;
}

std::vector<int> reject_sample(const RewardModel& model, const CandidatePool& pool) {
  if (pool.num_prompts() == 0) throw Error("data", "reject_sample: empty pool");
  std::vector<int> selections;
  selections.reserve(pool.num_prompts());
  for (const auto& cands : pool.candidates) {
    int best = 0;
    double best_reward = reward(model, cands[0]);
    for (std::size_t s = 1; s < cands.size(); ++s) {
      const double r = reward(model, cands[s]);
      if (r > best_reward) {
        best_reward = r;
        best = static_cast<int>(s);
      }
    }
    selections.push_back(best);
  }
  return selections;
}

AlignmentScore alignment_score(std::span<const int> selections,
                               const CandidatePool& pool) {
  if (pool.num_prompts() == 0) throw Error("data", "alignment_score: empty pool");
  if (selections.size() != pool.num_prompts())
    throw Error("data", "alignment_score: selections do not cover the pool");
  if (pool.true_rewards.size() != pool.num_prompts())
    throw Error("data", "alignment_score: pool has no true rewards");

  AlignmentScore score;
  for (std::size_t p = 0; p < pool.num_prompts(); ++p) {
    const auto& rewards = pool.true_rewards[p];
    const int sel = selections[p];
    if (sel < 0 || static_cast<std::size_t>(sel) >= rewards.size())
      throw Error("data", "alignment_score: selection index out of range");
    score.selected_mean += rewards[static_cast<std::size_t>(sel)];
    double best = rewards[0];
    double sum = 0.0;
    for (double r : rewards) {
      if (r > best) best = r;
      sum += r;
    }
    score.oracle_mean += best;
    score.random_mean += sum / static_cast<double>(rewards.size());
  }
  const double n = static_cast<double>(pool.num_prompts());
  score.selected_mean /= n;
  score.oracle_mean /= n;
  score.random_mean /= n;
  return score;
}

StudyOutcome ece_alignment_study(std::span<const TrainedRM> rms,
                                 const CandidatePool& pool,
                                 const DiversifiedDataset& shared_testset,
                                 int num_bins, bool folded_confidence) {
  if (rms.size() < 3)
    throw Error("data", "ece_alignment_study: need at least 3 reward models");

  StudyOutcome outcome;
  std::vector<double> eces, scores;
  for (const auto& rm : rms) {
    std::vector<PairPrediction> preds;
    preds.reserve(shared_testset.total_pairs());
    for (const auto& group : shared_testset.groups)
      for (const auto& pair : group)
        preds.push_back(predict(reward_difference(rm.model, pair), folded_confidence));
    const auto calibration = ece(preds, num_bins);
    const auto score = alignment_score(reject_sample(rm.model, pool), pool);

    AlignmentResult result;
    result.scheme = scheme_label(rm.config.scheme, rm.config.single_source);
    result.seed = rm.config.seed;
    result.rm_id = result.scheme + "_s" + std::to_string(rm.config.seed);
    result.ece = calibration.ece;
    result.selected_mean = score.selected_mean;
    result.oracle_mean = score.oracle_mean;
    result.random_mean = score.random_mean;
    result.regret = score.oracle_mean - score.selected_mean;
    eces.push_back(result.ece);
    scores.push_back(result.selected_mean);
    outcome.results.push_back(std::move(result));
  }
  outcome.spearman_rho = spearman(eces, scores);
  return outcome;
}

}  // namespace morelab
