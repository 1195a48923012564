#include "morelab/rewardnet.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"
#include "morelab/rng.hpp"

namespace morelab {

using json = nlohmann::json;

namespace {

void check_dims(const RewardModel& model, const FeatureVector& features) {
  if (static_cast<int>(features.size()) != model.dim)
    throw Error("data", "feature dimension " + std::to_string(features.size()) +
                            " does not match model dim " + std::to_string(model.dim));
}

// tanh(W phi + c)
std::vector<double> hidden_activations(const RewardModel& model,
                                       const FeatureVector& features) {
  std::vector<double> z(static_cast<std::size_t>(model.hidden));
  for (int j = 0; j < model.hidden; ++j) {
    const double* row =
        model.hidden_weights.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(model.dim);
    double a = model.hidden_bias[static_cast<std::size_t>(j)];
    for (int k = 0; k < model.dim; ++k) a += row[k] * features[static_cast<std::size_t>(k)];
    z[static_cast<std::size_t>(j)] = std::tanh(a);
  }
  return z;
}

// Shared accumulation over any pair range; Deref maps an element to a
// const PreferencePair&.
template <typename Range, typename Deref>
double loss_impl(const RewardModel& model, const Range& pairs, Deref deref) {
  if (pairs.empty()) throw Error("data", "ranking_loss: empty pair list");
  double total = 0.0;
  for (const auto& item : pairs) {
    const PreferencePair& pair = deref(item);
    total += softplus(-reward_difference(model, pair));
  }
  return total / static_cast<double>(pairs.size());
}

template <typename Range, typename Deref>
Gradient gradient_impl(const RewardModel& model, const Range& pairs,
                       GradScope scope, Deref deref) {
  if (pairs.empty()) throw Error("data", "ranking_loss_gradient: empty pair list");
  Gradient grad;
  grad.arch = model.arch;
  grad.scope = scope;
  grad.values.assign(param_count(model, scope), 0.0);

  const std::size_t head_n = model.head_weights.size();
  for (const auto& item : pairs) {
    const PreferencePair& pair = deref(item);
    check_dims(model, pair.winner);
    check_dims(model, pair.loser);
    const double delta = reward_difference(model, pair);
    const double coeff = -sigmoid(-delta);  // d/d(delta) of softplus(-delta)

    if (model.arch == Arch::kLinear) {
      for (std::size_t k = 0; k < head_n; ++k)
        grad.values[k] += coeff * (pair.winner[k] - pair.loser[k]);
      // head bias cancels in the difference; gradient stays 0
    } else {
      const auto z_w = hidden_activations(model, pair.winner);
      const auto z_l = hidden_activations(model, pair.loser);
      for (std::size_t j = 0; j < head_n; ++j)
        grad.values[j] += coeff * (z_w[j] - z_l[j]);
      if (scope == GradScope::kFull) {
        const std::size_t w_off = head_n + 1;
        const std::size_t c_off = w_off + model.hidden_weights.size();
        for (int j = 0; j < model.hidden; ++j) {
          const double hj = model.head_weights[static_cast<std::size_t>(j)];
          const double dw = hj * (1.0 - z_w[static_cast<std::size_t>(j)] * z_w[static_cast<std::size_t>(j)]);
          const double dl = hj * (1.0 - z_l[static_cast<std::size_t>(j)] * z_l[static_cast<std::size_t>(j)]);
          double* wrow = grad.values.data() + w_off +
                         static_cast<std::size_t>(j) * static_cast<std::size_t>(model.dim);
          for (int k = 0; k < model.dim; ++k)
            wrow[k] += coeff * (dw * pair.winner[static_cast<std::size_t>(k)] -
                                dl * pair.loser[static_cast<std::size_t>(k)]);
          grad.values[c_off + static_cast<std::size_t>(j)] += coeff * (dw - dl);
        }
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (auto& v : grad.values) v *= inv_n;
  return grad;
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::kLinear ? "linear" : "mlp"; }

Arch arch_from_string(const std::string& name) {
  if (name == "linear") return Arch::kLinear;
  if (name == "mlp") return Arch::kMlp;
  throw Error("config", "unknown arch '" + name + "'");
}

RewardModel init_model(Arch arch, int dim, int hidden, std::uint64_t seed) {
  if (dim < 1) throw Error("data", "init_model: dim must be >= 1");
  RewardModel model;
  model.arch = arch;
  model.dim = dim;
  if (arch == Arch::kLinear) {
    model.head_weights.assign(static_cast<std::size_t>(dim), 0.0);
  } else {
    if (hidden < 1) throw Error("data", "init_model: hidden must be >= 1 for mlp");
    model.hidden = hidden;
    model.head_weights.assign(static_cast<std::size_t>(hidden), 0.0);
    Rng rng(seed);
    model.hidden_weights.resize(static_cast<std::size_t>(hidden) * static_cast<std::size_t>(dim));
    for (auto& w : model.hidden_weights) w = 0.01 * rng.normal();
    model.hidden_bias.assign(static_cast<std::size_t>(hidden), 0.0);
  }
  return model;
}

double reward(const RewardModel& model, const FeatureVector& features) {
  check_dims(model, features);
  if (model.arch == Arch::kLinear) return dot(model.head_weights, features) + model.head_bias;
  const auto z = hidden_activations(model, features);
  return dot(model.head_weights, z) + model.head_bias;
}

double reward_difference(const RewardModel& model, const PreferencePair& pair) {
  return reward(model, pair.winner) - reward(model, pair.loser);
}

double ranking_loss(const RewardModel& model, std::span<const PreferencePair> pairs) {
  return loss_impl(model, pairs, [](const PreferencePair& p) -> const PreferencePair& { return p; });
}

double ranking_loss(const RewardModel& model,
                    std::span<const PreferencePair* const> pairs) {
  return loss_impl(model, pairs, [](const PreferencePair* p) -> const PreferencePair& { return *p; });
}

Gradient ranking_loss_gradient(const RewardModel& model,
                               std::span<const PreferencePair> pairs, GradScope scope) {
  return gradient_impl(model, pairs, scope,
                       [](const PreferencePair& p) -> const PreferencePair& { return p; });
}

Gradient ranking_loss_gradient(const RewardModel& model,
                               std::span<const PreferencePair* const> pairs,
                               GradScope scope) {
  return gradient_impl(model, pairs, scope,
                       [](const PreferencePair* p) -> const PreferencePair& { return *p; });
}

std::size_t param_count(const RewardModel& model, GradScope scope) {
  std::size_t head = model.head_weights.size() + 1;
  if (model.arch == Arch::kLinear || scope == GradScope::kHeadOnly) return head;
  return head + model.hidden_weights.size() + model.hidden_bias.size();
}

std::vector<double> parameters(const RewardModel& model, GradScope scope) {
  std::vector<double> out;
  out.reserve(param_count(model, scope));
  out.insert(out.end(), model.head_weights.begin(), model.head_weights.end());
  out.push_back(model.head_bias);
  if (model.arch == Arch::kMlp && scope == GradScope::kFull) {
    out.insert(out.end(), model.hidden_weights.begin(), model.hidden_weights.end());
    out.insert(out.end(), model.hidden_bias.begin(), model.hidden_bias.end());
  }
  return out;
}

void set_parameters(RewardModel& model, std::span<const double> values, GradScope scope) {
  if (values.size() != param_count(model, scope))
    throw Error("data", "set_parameters: expected " +
                            std::to_string(param_count(model, scope)) + " values, got " +
                            std::to_string(values.size()));
  std::size_t pos = 0;
  for (auto& w : model.head_weights) w = values[pos++];
  model.head_bias = values[pos++];
  if (model.arch == Arch::kMlp && scope == GradScope::kFull) {
    for (auto& w : model.hidden_weights) w = values[pos++];
    for (auto& b : model.hidden_bias) b = values[pos++];
  }
}

void save_checkpoint(const RewardModel& model, const std::string& path,
                     const std::string& config_digest, std::uint64_t seed) {
  json j;
  j["arch"] = to_string(model.arch);
  j["d"] = model.dim;
  if (model.arch == Arch::kMlp) j["h"] = model.hidden;
  j["head_weights"] = model.head_weights;
  j["head_bias"] = model.head_bias;
  if (model.arch == Arch::kMlp) {
    j["hidden_weights"] = model.hidden_weights;
    j["hidden_bias"] = model.hidden_bias;
  }
  j["train_config_digest"] = config_digest;
  j["seed"] = seed;
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw Error("io", "write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("data", path + ": malformed checkpoint: " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.model.arch = arch_from_string(j.at("arch").get<std::string>());
    ckpt.model.dim = j.at("d").get<int>();
    ckpt.model.head_weights = j.at("head_weights").get<std::vector<double>>();
    ckpt.model.head_bias = j.at("head_bias").get<double>();
    if (ckpt.model.arch == Arch::kMlp) {
      ckpt.model.hidden = j.at("h").get<int>();
      ckpt.model.hidden_weights = j.at("hidden_weights").get<std::vector<double>>();
      ckpt.model.hidden_bias = j.at("hidden_bias").get<std::vector<double>>();
    }
    ckpt.config_digest = j.value("train_config_digest", "");
    ckpt.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error("data", path + ": bad checkpoint field: " + e.what());
  }
  const auto expect_head =
      ckpt.model.arch == Arch::kLinear ? ckpt.model.dim : ckpt.model.hidden;
  if (static_cast<int>(ckpt.model.head_weights.size()) != expect_head)
    throw Error("data", path + ": head size does not match arch");
  if (ckpt.model.arch == Arch::kMlp &&
      (static_cast<int>(ckpt.model.hidden_weights.size()) !=
           ckpt.model.hidden * ckpt.model.dim ||
       static_cast<int>(ckpt.model.hidden_bias.size()) != ckpt.model.hidden))
    throw Error("data", path + ": hidden layer sizes do not match arch");
  return ckpt;
}

}  // namespace morelab
