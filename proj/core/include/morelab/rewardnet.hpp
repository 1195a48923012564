#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morelab/prefdata.hpp"

namespace morelab {

enum class Arch { kLinear, kMlp };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

// Scalar reward scorer. Linear: w.phi + b. Mlp: head.tanh(W phi + c) + b
// (one hidden tanh layer). The reward is affine in the head either way.
struct RewardModel {
  Arch arch = Arch::kLinear;
  int dim = 0;
  int hidden = 0;  // mlp only
  std::vector<double> head_weights;  // size dim (linear) or hidden (mlp)
  double head_bias = 0.0;
  std::vector<double> hidden_weights;  // hidden x dim, row-major (mlp only)
  std::vector<double> hidden_bias;     // size hidden (mlp only)
};

enum class GradScope { kFull, kHeadOnly };

// Flat parameter-aligned gradient. Layout:
//   linear, any scope:  [head_weights..., head_bias]
//   mlp, kFull:         [head_weights..., head_bias, hidden_weights..., hidden_bias...]
//   mlp, kHeadOnly:     [head_weights..., head_bias]  (hidden activations
//                        treated as constants)
struct Gradient {
  Arch arch = Arch::kLinear;
  GradScope scope = GradScope::kFull;
  std::vector<double> values;
};

// Linear: head zeroed. Mlp: hidden weights ~ N(0, 0.01^2) from the seed,
// biases and head zeroed, so every model starts at reward == 0.
RewardModel init_model(Arch arch, int dim, int hidden, std::uint64_t seed);

double reward(const RewardModel& model, const FeatureVector& features);

// reward(winner) - reward(loser); invariant to head_bias.
double reward_difference(const RewardModel& model, const PreferencePair& pair);

// Mean over pairs of -log sigmoid(reward_difference), computed as
// softplus(-delta) so large |delta| cannot overflow.
double ranking_loss(const RewardModel& model, std::span<const PreferencePair> pairs);
double ranking_loss(const RewardModel& model,
                    std::span<const PreferencePair* const> pairs);

Gradient ranking_loss_gradient(const RewardModel& model,
                               std::span<const PreferencePair> pairs,
                               GradScope scope);
Gradient ranking_loss_gradient(const RewardModel& model,
                               std::span<const PreferencePair* const> pairs,
                               GradScope scope);

std::size_t param_count(const RewardModel& model, GradScope scope);
std::vector<double> parameters(const RewardModel& model, GradScope scope);
void set_parameters(RewardModel& model, std::span<const double> values,
                    GradScope scope);

void save_checkpoint(const RewardModel& model, const std::string& path,
                     const std::string& config_digest, std::uint64_t seed);

struct Checkpoint {
  RewardModel model;
  std::string config_digest;
  std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace morelab
