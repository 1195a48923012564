#include "morelab/trainer.hpp"

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

void validate(const DiversifiedDataset& dataset, const TrainConfig& config) {
  if (dataset.total_pairs() == 0) throw Error("data", "train: empty dataset");
  if (!(config.learning_rate > 0.0))
    throw Error("config", "train: learning_rate must be positive");
  if (config.epochs < 1) throw Error("config", "train: epochs must be >= 1");
  if (config.per_source_batch < 1)
    throw Error("config", "train: per_source_batch must be >= 1");
  if (config.scheme == Scheme::kSingle &&
      (config.single_source < 0 || config.single_source >= dataset.num_sources()))
    throw Error("config", "train: single-source index " +
                              std::to_string(config.single_source) + " out of range");
  if (config.lambda_mode == LambdaMode::kFixed) {
    if (static_cast<int>(config.fixed_lambda.size()) != dataset.num_sources())
      throw Error("config", "train: fixed lambda length must equal the source count");
    if (!is_simplex_point(SimplexWeights{config.fixed_lambda}))
      throw Error("config", "train: fixed lambda is not a simplex point");
  }
}

Gradient weighted_full_gradient(std::span<const Gradient> full_grads,
                                std::span<const double> lambda) {
  Gradient out;
  out.arch = full_grads[0].arch;
  out.scope = GradScope::kFull;
  out.values.assign(full_grads[0].values.size(), 0.0);
  for (std::size_t i = 0; i < full_grads.size(); ++i) {
    const double li = lambda[i];
    const auto& vals = full_grads[i].values;
    for (std::size_t k = 0; k < vals.size(); ++k) out.values[k] += li * vals[k];
  }
  return out;
}

}  // namespace

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kSingle: return "single";
    case Scheme::kMultiTask: return "multitask";
    case Scheme::kMore: return "more";
  }
  return "?";
}

std::pair<Scheme, int> parse_scheme(const std::string& text) {
  if (text == "multitask") return {Scheme::kMultiTask, 0};
  if (text == "more") return {Scheme::kMore, 0};
  if (text.rfind("single:", 0) == 0) {
    try {
      return {Scheme::kSingle, std::stoi(text.substr(7))};
    } catch (const std::exception&) {
      throw Error("usage", "bad scheme '" + text + "': expected single:<index>");
    }
  }
  throw Error("usage", "unknown scheme '" + text + "' (single:<i>|multitask|more)");
}

std::string scheme_label(Scheme scheme, int single_source) {
  if (scheme == Scheme::kSingle) return "single" + std::to_string(single_source);
  return to_string(scheme);
}

void write_trace_csv(const LambdaTrace& trace, int num_sources, std::ostream& out,
                     const std::vector<std::string>& header_comments) {
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "step";
  for (int i = 0; i < num_sources; ++i) out << ",lambda_" << i;
  out << ",norm_sq";
  for (int i = 0; i < num_sources; ++i) out << ",loss_" << i;
  out << "\n";
  for (const auto& step : trace.steps) {
    out << step.step;
    for (double l : step.lambda) out << "," << fmt17(l);
    out << "," << fmt17(step.norm_sq);
    for (double l : step.per_source_loss) out << "," << fmt17(l);
    out << "\n";
  }
}

TrainedRM train(const DiversifiedDataset& dataset, const TrainConfig& config,
                const StepObserver& observer) {
  validate(dataset, config);

  // Single-scheme training reuses the diverse sampler over a one-source view.
  const DiversifiedDataset* data = &dataset;
  DiversifiedDataset single_view;
  if (config.scheme == Scheme::kSingle) {
    single_view = single_source_view(dataset, config.single_source);
    data = &single_view;
  }
  const int num_sources = data->num_sources();

  TrainedRM out;
  out.config = config;
  out.model = init_model(config.arch, data->dim, config.hidden,
                         derive_seed(config.seed, "init"));

  DiverseBatchSampler sampler(*data, config.per_source_batch,
                              derive_seed(config.seed, "batch"));
  const int steps_per_epoch = sampler.steps_per_epoch();
  const std::size_t head_len = param_count(out.model, GradScope::kHeadOnly);

  SimplexWeights prev_lambda = uniform_weights(num_sources);
  int global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
      const DiverseBatch batch = sampler.next();
      double loss = 0.0;
      Gradient grad;

      if (config.scheme == Scheme::kMore) {
        std::vector<double> losses(static_cast<std::size_t>(num_sources));
        std::vector<Gradient> full_grads;
        full_grads.reserve(static_cast<std::size_t>(num_sources));
        GradientSet heads;
        heads.scope = GradScope::kHeadOnly;
        for (int i = 0; i < num_sources; ++i) {
          const auto& sub = batch.sub_batches[static_cast<std::size_t>(i)];
          losses[static_cast<std::size_t>(i)] = ranking_loss(out.model, sub);
          full_grads.push_back(ranking_loss_gradient(out.model, sub, GradScope::kFull));
          // the head block of the full gradient is the head-only gradient
          const auto& vals = full_grads.back().values;
          heads.rows.emplace_back(vals.begin(), vals.begin() + static_cast<long>(head_len));
        }

        SimplexWeights lambda;
        double norm2 = 0.0;
        if (config.lambda_mode == LambdaMode::kFixed) {
          lambda.values = config.fixed_lambda;
          norm2 = combined_norm_sq(heads, lambda);
        } else {
          auto solved = min_norm_weights(
              heads, config.solver,
              config.warm_start_lambda ? std::optional<SimplexWeights>(prev_lambda)
                                       : std::nullopt);
          lambda = std::move(solved.weights);
          norm2 = solved.norm_sq;
        }
        prev_lambda = lambda;

        for (int i = 0; i < num_sources; ++i)
          loss += lambda.values[static_cast<std::size_t>(i)] * losses[static_cast<std::size_t>(i)];
        grad = weighted_full_gradient(full_grads, lambda.values);
        out.trace.steps.push_back({global_step, lambda.values, norm2, std::move(losses)});
      } else {
        std::vector<const PreferencePair*> pooled;
        pooled.reserve(batch.size());
        for (const auto& sub : batch.sub_batches)
          pooled.insert(pooled.end(), sub.begin(), sub.end());
        loss = ranking_loss(out.model, pooled);
        grad = ranking_loss_gradient(out.model, pooled, GradScope::kFull);
      }

      if (!std::isfinite(loss) || !all_finite(grad.values))
        throw Error("numeric", "train: non-finite loss at step " +
                                   std::to_string(global_step));
      if (observer) observer(StepInfo{global_step, epoch, loss, out.model});
      out.step_losses.push_back(loss);
      out.model = sgd_step(out.model, grad, config.learning_rate);
    }
  }
  return out;
}

RewardModel sgd_step(const RewardModel& model, const Gradient& grad,
                     double learning_rate) {
  if (grad.scope != GradScope::kFull)
    throw Error("data", "sgd_step: need a full-scope gradient");
  if (grad.values.size() != param_count(model, GradScope::kFull))
    throw Error("data", "sgd_step: gradient length does not match model");
  if (!all_finite(grad.values)) throw Error("numeric", "sgd_step: non-finite gradient");
  RewardModel out = model;
  std::vector<double> params = parameters(model, GradScope::kFull);
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] -= learning_rate * grad.values[i];
  set_parameters(out, params, GradScope::kFull);
  return out;
}

double ensemble_average_reward(std::span<const RewardModel> models,
                               const PreferencePair& pair) {
  if (models.empty()) throw Error("data", "ensemble_average_reward: no models");
  double sum = 0.0;
  for (const auto& m : models) sum += reward_difference(m, pair);
  return sum / static_cast<double>(models.size());
}

}  // namespace morelab
