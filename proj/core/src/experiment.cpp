#include "morelab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"

namespace morelab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("config", "bad numeric value for '" + key + "': '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("config", "bad integer value for '" + key + "': '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("config", "bad unsigned value for '" + key + "': '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("config", "bad boolean value for '" + key + "': '" + value + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_csv(value)) {
    const auto t = trim(item);
    if (t.empty()) throw Error("config", "empty list element for '" + key + "'");
    out.push_back(parse(key, t));
  }
  if (out.empty()) throw Error("config", "empty list for '" + key + "'");
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += fmt17(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::uint64_t fnv1a64_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> digest_comments(const ExperimentConfig& config) {
  return {"config_digest=" + config.digest(), "seed=" + std::to_string(config.seed)};
}

std::vector<PairPrediction> predictions_for(const RewardModel& model,
                                            const DiversifiedDataset& testset,
                                            bool folded) {
  std::vector<PairPrediction> preds;
  preds.reserve(testset.total_pairs());
  for (const auto& group : testset.groups)
    for (const auto& pair : group)
      preds.push_back(predict(reward_difference(model, pair), folded));
  return preds;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str());
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config", "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty())
      throw Error("config", "line " + std::to_string(line_no) + ": empty value for '" + key + "'");

    if (key == "d") cfg.d = static_cast<int>(parse_int(key, value));
    else if (key == "k") cfg.k = static_cast<int>(parse_int(key, value));
    else if (key == "n_per_source") cfg.n_per_source = static_cast<int>(parse_int(key, value));
    else if (key == "alpha") cfg.alpha = parse_list<double>(key, value, parse_double);
    else if (key == "w_star_norm") cfg.w_star_norm = parse_double(key, value);
    else if (key == "orthogonal_drift") cfg.orthogonal_drift = parse_bool(key, value);
    else if (key == "label_noise_mode") cfg.label_noise_mode = label_noise_mode_from_string(value);
    else if (key == "test_fraction") cfg.test_fraction = parse_double(key, value);
    else if (key == "shared_test_size") cfg.shared_test_size = static_cast<int>(parse_int(key, value));
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "featurizer_dim") cfg.featurizer_dim = static_cast<int>(parse_int(key, value));
    else if (key == "scheme") std::tie(cfg.scheme, cfg.single_source) = parse_scheme(value);
    else if (key == "per_source_batch") cfg.per_source_batch = static_cast<int>(parse_int(key, value));
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "arch") cfg.arch = arch_from_string(value);
    else if (key == "hidden") cfg.hidden = static_cast<int>(parse_int(key, value));
    else if (key == "lambda_mode") {
      if (value == "solve") cfg.lambda_mode = LambdaMode::kSolve;
      else if (value == "fixed") cfg.lambda_mode = LambdaMode::kFixed;
      else throw Error("config", "lambda_mode must be solve or fixed, got '" + value + "'");
    } else if (key == "fixed_lambda") cfg.fixed_lambda = parse_list<double>(key, value, parse_double);
    else if (key == "warm_start_lambda") cfg.warm_start_lambda = parse_bool(key, value);
    else if (key == "solver_max_iters") cfg.solver_max_iters = static_cast<int>(parse_int(key, value));
    else if (key == "solver_tol") cfg.solver_tol = parse_double(key, value);
    else if (key == "bins") cfg.bins = static_cast<int>(parse_int(key, value));
    else if (key == "folded_confidence") cfg.folded_confidence = parse_bool(key, value);
    else if (key == "outlier_fence") cfg.outlier_fence = parse_double(key, value);
    else if (key == "study_candidates") cfg.study_candidates = static_cast<int>(parse_int(key, value));
    else if (key == "study_prompts") cfg.study_prompts = static_cast<int>(parse_int(key, value));
    else if (key == "seeds") cfg.seeds = parse_list<std::uint64_t>(key, value, parse_u64);
    else if (key == "k_values")
      cfg.k_values = parse_list<int>(key, value, [](const std::string& k2, const std::string& v2) {
        return static_cast<int>(parse_int(k2, v2));
      });
    else throw Error("config", "unknown config key '" + key + "'");
  }

  if (cfg.d < 1) throw Error("config", "d must be >= 1");
  if (cfg.k < 1) throw Error("config", "k must be >= 1");
  if (cfg.n_per_source < 1) throw Error("config", "n_per_source must be >= 1");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw Error("config", "test_fraction must be in (0, 1)");
  if (cfg.alpha.size() != 1 && static_cast<int>(cfg.alpha.size()) != cfg.k)
    throw Error("config", "alpha list length " + std::to_string(cfg.alpha.size()) +
                              " does not match k=" + std::to_string(cfg.k));
  for (double a : cfg.alpha)
    if (a < 0.0) throw Error("config", "alpha must be >= 0");
  return cfg;
}

std::vector<double> ExperimentConfig::alphas_for(int num_sources) const {
  if (alpha.size() == 1) return std::vector<double>(static_cast<std::size_t>(num_sources), alpha[0]);
  if (static_cast<int>(alpha.size()) < num_sources)
    throw Error("config", "alpha list shorter than source count");
  return std::vector<double>(alpha.begin(), alpha.begin() + num_sources);
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["alpha"] = join_list(alpha);
  kv["arch"] = to_string(arch);
  kv["bins"] = std::to_string(bins);
  kv["d"] = std::to_string(d);
  kv["epochs"] = std::to_string(epochs);
  kv["featurizer_dim"] = std::to_string(featurizer_dim);
  kv["fixed_lambda"] = fixed_lambda.empty() ? "none" : join_list(fixed_lambda);
  kv["folded_confidence"] = folded_confidence ? "true" : "false";
  kv["hidden"] = std::to_string(hidden);
  kv["k"] = std::to_string(k);
  kv["k_values"] = join_list(k_values);
  kv["label_noise_mode"] = to_string(label_noise_mode);
  kv["lambda_mode"] = lambda_mode == LambdaMode::kSolve ? "solve" : "fixed";
  kv["learning_rate"] = fmt17(learning_rate);
  kv["n_per_source"] = std::to_string(n_per_source);
  kv["orthogonal_drift"] = orthogonal_drift ? "true" : "false";
  kv["outlier_fence"] = fmt17(outlier_fence);
  kv["per_source_batch"] = std::to_string(per_source_batch);
  kv["scheme"] = scheme == Scheme::kSingle
                     ? "single:" + std::to_string(single_source)
                     : to_string(scheme);
  kv["seed"] = std::to_string(seed);
  kv["seeds"] = join_list(seeds);
  kv["shared_test_size"] = std::to_string(shared_test_size);
  kv["solver_max_iters"] = std::to_string(solver_max_iters);
  kv["solver_tol"] = fmt17(solver_tol);
  kv["study_candidates"] = std::to_string(study_candidates);
  kv["study_prompts"] = std::to_string(study_prompts);
  kv["test_fraction"] = fmt17(test_fraction);
  kv["w_star_norm"] = fmt17(w_star_norm);
  kv["warm_start_lambda"] = warm_start_lambda ? "true" : "false";

  std::string out;
  for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
  return out;
}

std::string ExperimentConfig::digest() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64_str(canonical())));
  return buf;
}

TrainConfig ExperimentConfig::train_config(Scheme train_scheme, int source,
                                           std::uint64_t train_seed) const {
  TrainConfig tc;
  tc.scheme = train_scheme;
  tc.single_source = source;
  tc.per_source_batch = per_source_batch;
  tc.epochs = epochs;
  tc.learning_rate = learning_rate;
  tc.seed = train_seed;
  tc.arch = arch;
  tc.hidden = hidden;
  tc.lambda_mode = lambda_mode;
  tc.fixed_lambda = fixed_lambda;
  tc.warm_start_lambda = warm_start_lambda;
  tc.solver.max_iters = solver_max_iters;
  tc.solver.tol = solver_tol;
  return tc;
}

SynthesisSpec synthesis_spec_from(const ExperimentConfig& config) {
  SynthesisSpec spec =
      make_random_spec(config.d, config.k, config.alphas_for(config.k),
                       config.label_noise_mode, config.w_star_norm,
                       config.orthogonal_drift, config.seed);
  spec.n_per_source = config.n_per_source;
  return spec;
}

DiversifiedDataset replicate_dataset(const ExperimentConfig& config,
                                     const SynthesisSpec& world, std::uint64_t seed) {
  SynthesisSpec spec = world;
  spec.seed = derive_seed(config.seed, "pairs", seed);
  return synthesize(spec);
}

DiversifiedDataset make_shared_testset(const ExperimentConfig& config,
                                       const SynthesisSpec& world) {
  return synthesize(shared_test_spec(world, config.shared_test_size,
                                     derive_seed(config.seed, "shared-test")));
}

void save_spec_json(const SynthesisSpec& spec, const fs::path& path,
                    const std::string& config_digest) {
  json j;
  j["d"] = spec.dim;
  j["k"] = spec.num_sources();
  j["n_per_source"] = spec.n_per_source;
  j["seed"] = spec.seed;
  j["shared_weight"] = spec.shared_weight;
  j["config_digest"] = config_digest;
  json sources = json::array();
  for (const auto& src : spec.sources) {
    json s;
    s["source_id"] = src.source_id;
    s["name"] = src.name;
    s["alpha"] = src.drift_magnitude;
    s["direction"] = src.drift_direction;
    s["label_noise_mode"] = to_string(src.label_noise);
    sources.push_back(std::move(s));
  }
  j["sources"] = std::move(sources);
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

SynthesisSpec load_spec_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("data", path.string() + ": malformed spec: " + e.what());
  }
  SynthesisSpec spec;
  try {
    spec.dim = j.at("d").get<int>();
    spec.n_per_source = j.at("n_per_source").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.shared_weight = j.at("shared_weight").get<FeatureVector>();
    for (const auto& s : j.at("sources")) {
      SourceSpec src;
      src.source_id = s.at("source_id").get<int>();
      src.name = s.at("name").get<std::string>();
      src.drift_magnitude = s.at("alpha").get<double>();
      src.drift_direction = s.at("direction").get<FeatureVector>();
      src.label_noise = label_noise_mode_from_string(s.at("label_noise_mode").get<std::string>());
      spec.sources.push_back(std::move(src));
    }
  } catch (const json::exception& e) {
    throw Error("data", path.string() + ": bad spec field: " + e.what());
  }
  return spec;
}

SynthPaths cmd_synth(const ExperimentConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const SynthesisSpec world = synthesis_spec_from(config);
  const DiversifiedDataset dataset = replicate_dataset(config, world, 0);
  auto [train_set, test_set] = split(dataset, config.test_fraction,
                                     derive_seed(config.seed, "split"));
  const DiversifiedDataset shared = make_shared_testset(config, world);

  SynthPaths paths;
  paths.train = out_dir / "train.jsonl";
  paths.test = out_dir / "test.jsonl";
  paths.shared_test = out_dir / "shared_test.jsonl";
  paths.spec = out_dir / "spec.json";
  const auto comments = digest_comments(config);
  save_jsonl(train_set, paths.train.string(), comments);
  save_jsonl(test_set, paths.test.string(), comments);
  save_jsonl(shared, paths.shared_test.string(), comments);
  save_spec_json(world, paths.spec, config.digest());
  return paths;
}

TrainPaths cmd_train(const ExperimentConfig& config, const fs::path& data_dir,
                     Scheme scheme, int single_source, std::uint64_t seed,
                     const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto train_path = data_dir / "train.jsonl";
  if (!fs::exists(train_path))
    throw Error("io", "missing dataset '" + train_path.string() + "' (run synth first)");
  const DiversifiedDataset dataset = load_jsonl(train_path.string());

  const TrainConfig tc = config.train_config(scheme, single_source, seed);
  const TrainedRM trained = train(dataset, tc);

  const std::string label = scheme_label(scheme, single_source);
  const std::string stem = label + "_seed" + std::to_string(seed);
  TrainPaths paths;
  paths.checkpoint = out_dir / ("checkpoint_" + stem + ".json");
  paths.trace = out_dir / ("trace_" + stem + ".csv");
  paths.log = out_dir / ("train_log_" + stem + ".json");

  save_checkpoint(trained.model, paths.checkpoint.string(), config.digest(), seed);

  auto trace_out = open_out(paths.trace);
  write_trace_csv(trained.trace, dataset.num_sources(), trace_out,
                  {"config_digest=" + config.digest(), "seed=" + std::to_string(seed),
                   "scheme=" + label});

  const int steps_per_epoch =
      static_cast<int>(trained.step_losses.size()) / std::max(1, tc.epochs);
  double final_loss = 0.0;
  if (!trained.step_losses.empty()) {
    const auto begin = trained.step_losses.end() - steps_per_epoch;
    for (auto it = begin; it != trained.step_losses.end(); ++it) final_loss += *it;
    final_loss /= steps_per_epoch;
  }
  paths.final_train_loss = final_loss;

  json log;
  log["scheme"] = label;
  log["seed"] = seed;
  log["steps"] = trained.step_losses.size();
  log["final_train_loss"] = final_loss;
  log["config_digest"] = config.digest();
  auto log_out = open_out(paths.log);
  log_out << log.dump(2) << "\n";
  return paths;
}

EvalPaths cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint_path,
                   const fs::path& testset_path, const std::string& scheme_name,
                   std::uint64_t seed, const fs::path& out_dir, bool emit_json) {
  fs::create_directories(out_dir);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path.string());
  const int fdim = config.featurizer_dim;
  const DiversifiedDataset testset =
      load_jsonl(testset_path.string(), [fdim](const std::string& p, const std::string& r) {
        return hash_featurize(p, r, fdim);
      });
  if (testset.dim != ckpt.model.dim)
    throw Error("data", "testset dimension " + std::to_string(testset.dim) +
                            " does not match checkpoint dim " + std::to_string(ckpt.model.dim));

  const auto accuracy = preference_accuracy(ckpt.model, testset);
  std::vector<MetricsRow> rows;
  for (int s = 0; s < testset.num_sources(); ++s) {
    const auto& group = testset.groups[static_cast<std::size_t>(s)];
    if (group.empty()) continue;
    std::vector<double> diffs;
    std::vector<PairPrediction> preds;
    diffs.reserve(group.size());
    preds.reserve(group.size());
    for (const auto& pair : group) {
      diffs.push_back(reward_difference(ckpt.model, pair));
      preds.push_back(predict(diffs.back(), config.folded_confidence));
    }
    MetricsRow row;
    row.scheme = scheme_name;
    row.seed = seed;
    row.source = testset.source_names[static_cast<std::size_t>(s)];
    row.n = static_cast<int>(group.size());
    row.accuracy = accuracy.per_source[static_cast<std::size_t>(s)];
    row.ece = ece(preds, config.bins).ece;
    row.diff_stats = reward_diff_stats(diffs, config.outlier_fence);
    rows.push_back(std::move(row));
  }

  const auto pooled_preds = predictions_for(ckpt.model, testset, config.folded_confidence);
  const auto pooled_report = ece(pooled_preds, config.bins);
  MetricsRow pooled;
  pooled.scheme = scheme_name;
  pooled.seed = seed;
  pooled.source = "pooled";
  pooled.n = static_cast<int>(testset.total_pairs());
  pooled.accuracy = accuracy.overall;
  pooled.ece = pooled_report.ece;
  pooled.diff_stats = reward_diff_stats(ckpt.model, testset, config.outlier_fence);
  rows.push_back(pooled);

  const std::string stem = scheme_name + "_seed" + std::to_string(seed);
  EvalPaths paths;
  paths.metrics = out_dir / ("metrics_" + stem + ".csv");
  paths.reliability = out_dir / ("reliability_" + stem + ".csv");
  const auto comments = digest_comments(config);
  {
    auto out = open_out(paths.metrics);
    write_metrics_csv(rows, out, comments);
  }
  {
    auto out = open_out(paths.reliability);
    write_reliability_csv(pooled_report, out, comments);
  }
  if (emit_json) {
    json jrows = json::array();
    for (const auto& row : rows) {
      json r;
      r["scheme"] = row.scheme;
      r["seed"] = row.seed;
      r["source"] = row.source;
      r["n"] = row.n;
      r["accuracy"] = row.accuracy;
      r["ece"] = row.ece;
      r["mean_diff"] = row.diff_stats.mean;
      r["q1"] = row.diff_stats.q1;
      r["q2"] = row.diff_stats.median;
      r["q3"] = row.diff_stats.q3;
      r["pos_outlier_count"] = row.diff_stats.positive.count;
      if (row.diff_stats.positive.mean) r["pos_outlier_mean"] = *row.diff_stats.positive.mean;
      r["neg_outlier_count"] = row.diff_stats.negative.count;
      if (row.diff_stats.negative.mean) r["neg_outlier_mean"] = *row.diff_stats.negative.mean;
      jrows.push_back(std::move(r));
    }
    json wrapper;
    wrapper["config_digest"] = config.digest();
    wrapper["seed"] = seed;
    wrapper["rows"] = std::move(jrows);
    auto out = open_out(out_dir / ("metrics_" + stem + ".json"));
    out << wrapper.dump(2) << "\n";
  }
  return paths;
}

SweepOutcome cmd_sweep_k(const ExperimentConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir / "traces");
  for (int kv : config.k_values) {
    if (kv < 2 || kv > config.k)
      throw Error("config", "k_values entry " + std::to_string(kv) +
                                " outside [2, k=" + std::to_string(config.k) + "]");
  }

  const SynthesisSpec world = synthesis_spec_from(config);
  const DiversifiedDataset shared = make_shared_testset(config, world);

  SweepOutcome outcome;
  std::vector<int> sorted_k = config.k_values;
  std::sort(sorted_k.begin(), sorted_k.end());

  for (std::uint64_t seed : config.seeds) {
    const DiversifiedDataset full = replicate_dataset(config, world, seed);
    std::vector<double> more_eces;
    for (int kv : sorted_k) {
      const DiversifiedDataset restricted = restrict_sources(full, kv);
      for (Scheme scheme : {Scheme::kMore, Scheme::kMultiTask}) {
        const TrainConfig tc = config.train_config(scheme, 0, seed);
        const TrainedRM trained = train(restricted, tc);
        const auto preds = predictions_for(trained.model, shared, config.folded_confidence);
        SweepRow row;
        row.k = kv;
        row.seed = seed;
        row.scheme = to_string(scheme);
        row.accuracy = preference_accuracy(trained.model, shared).overall;
        row.ece = ece(preds, config.bins).ece;
        outcome.rows.push_back(row);
        if (scheme == Scheme::kMore) {
          more_eces.push_back(row.ece);
          auto trace_out = open_out(out_dir / "traces" /
                                    ("trace_more_k" + std::to_string(kv) + "_seed" +
                                     std::to_string(seed) + ".csv"));
          write_trace_csv(trained.trace, kv, trace_out,
                          {"config_digest=" + config.digest(),
                           "seed=" + std::to_string(seed), "k=" + std::to_string(kv)});
        }
      }
    }
    std::vector<double> ks(sorted_k.begin(), sorted_k.end());
    const auto rho = spearman(ks, more_eces);
    if (rho) outcome.rho_per_seed.emplace_back(seed, *rho);
  }

  std::sort(outcome.rows.begin(), outcome.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.k, a.seed, a.scheme) < std::tie(b.k, b.seed, b.scheme);
  });

  double rho_sum = 0.0;
  for (const auto& [seed, rho] : outcome.rho_per_seed) rho_sum += rho;
  outcome.mean_rho =
      outcome.rho_per_seed.empty() ? 0.0 : rho_sum / static_cast<double>(outcome.rho_per_seed.size());

  outcome.csv = out_dir / "sweep.csv";
  {
    auto out = open_out(outcome.csv);
    for (const auto& c : digest_comments(config)) out << "# " << c << "\n";
    out << "k,seed,scheme,accuracy,ece\n";
    for (const auto& row : outcome.rows)
      out << row.k << "," << row.seed << "," << row.scheme << "," << fmt17(row.accuracy)
          << "," << fmt17(row.ece) << "\n";
  }
  outcome.rho_csv = out_dir / "sweep_rho.csv";
  {
    auto out = open_out(outcome.rho_csv);
    for (const auto& c : digest_comments(config)) out << "# " << c << "\n";
    out << "seed,spearman_k_vs_more_ece\n";
    for (const auto& [seed, rho] : outcome.rho_per_seed)
      out << seed << "," << fmt17(rho) << "\n";
    out << "mean," << fmt17(outcome.mean_rho) << "\n";
  }
  return outcome;
}

StudyPaths cmd_study(const ExperimentConfig& config,
                     const std::vector<std::pair<Scheme, int>>& schemes,
                     const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (schemes.empty()) throw Error("usage", "study: no schemes given");
  if (seeds.empty()) throw Error("usage", "study: no seeds given");

  const SynthesisSpec world = synthesis_spec_from(config);
  const DiversifiedDataset shared = make_shared_testset(config, world);
  const CandidatePool pool =
      generate_candidates(world, config.study_prompts, config.study_candidates,
                          derive_seed(config.seed, "pool"));

  std::vector<TrainedRM> rms;
  for (std::uint64_t seed : seeds) {
    const DiversifiedDataset dataset = replicate_dataset(config, world, seed);
    for (const auto& [scheme, source] : schemes) {
      const TrainConfig tc = config.train_config(scheme, source, seed);
      rms.push_back(train(dataset, tc));
    }
  }

  StudyPaths paths;
  paths.outcome = ece_alignment_study(rms, pool, shared, config.bins,
                                      config.folded_confidence);

  // Ground-truth reference: a linear head equal to the shared weight selects
  // exactly the oracle candidate, so its regret is identically zero.
  RewardModel oracle;
  oracle.arch = Arch::kLinear;
  oracle.dim = world.dim;
  oracle.head_weights = world.shared_weight;
  {
    const auto preds = predictions_for(oracle, shared, config.folded_confidence);
    const auto score = alignment_score(reject_sample(oracle, pool), pool);
    paths.oracle_row.rm_id = "oracle";
    paths.oracle_row.scheme = "oracle";
    paths.oracle_row.seed = config.seed;
    paths.oracle_row.ece = ece(preds, config.bins).ece;
    paths.oracle_row.selected_mean = score.selected_mean;
    paths.oracle_row.oracle_mean = score.oracle_mean;
    paths.oracle_row.random_mean = score.random_mean;
    paths.oracle_row.regret = score.oracle_mean - score.selected_mean;
  }

  paths.csv = out_dir / "study.csv";
  {
    auto out = open_out(paths.csv);
    for (const auto& c : digest_comments(config)) out << "# " << c << "\n";
    out << "rm_id,scheme,seed,ece,score,oracle,random,regret\n";
    auto write_row = [&](const AlignmentResult& r) {
      out << r.rm_id << "," << r.scheme << "," << r.seed << "," << fmt17(r.ece) << ","
          << fmt17(r.selected_mean) << "," << fmt17(r.oracle_mean) << ","
          << fmt17(r.random_mean) << "," << fmt17(r.regret) << "\n";
    };
    write_row(paths.oracle_row);
    for (const auto& r : paths.outcome.results) write_row(r);
  }

  paths.summary = out_dir / "study_summary.json";
  {
    json j;
    if (paths.outcome.spearman_rho) j["spearman_rho"] = *paths.outcome.spearman_rho;
    else j["spearman_rho"] = nullptr;
    j["n_rms"] = paths.outcome.results.size();
    j["config_digest"] = config.digest();
    j["seed"] = config.seed;
    auto out = open_out(paths.summary);
    out << j.dump() << "\n";
  }
  return paths;
}

namespace {

struct ParsedMetrics {
  std::string scheme;
  std::string source;
  std::uint64_t seed = 0;
  // metric name -> value; absent optional columns are simply missing
  std::map<std::string, double> values;
};

constexpr const char* kMetricsHeader =
    "scheme,seed,source,n,accuracy,ece,mean_diff,q1,q2,q3,"
    "pos_outlier_count,pos_outlier_mean,neg_outlier_count,neg_outlier_mean";

std::vector<ParsedMetrics> parse_metrics_file(const fs::path& path, std::string* digest) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path.string() + "'");
  std::vector<ParsedMetrics> rows;
  std::string line;
  bool saw_header = false;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string prefix = "# config_digest=";
      if (digest && line.rfind(prefix, 0) == 0) *digest = line.substr(prefix.size());
      continue;
    }
    if (!saw_header) {
      if (trim(line) != kMetricsHeader) return {};  // not a metrics file
      header = split_csv(line);
      saw_header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error("data", path.string() + ": ragged CSV row");
    ParsedMetrics row;
    row.scheme = cells[0];
    row.seed = parse_u64("seed", cells[1]);
    row.source = cells[2];
    for (std::size_t i = 3; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;  // absent optional value
      row.values[header[i]] = parse_double(header[i], cells[i]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Aggregate {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate agg;
  agg.n = static_cast<int>(values.size());
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return agg;
}

}  // namespace

ReportPaths cmd_report(const fs::path& run_dir, const fs::path& out_dir, bool emit_json) {
  if (!fs::is_directory(run_dir))
    throw Error("io", "run dir '" + run_dir.string() + "' does not exist");
  fs::create_directories(out_dir);

  std::vector<fs::path> metric_files, reliability_files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv")
      metric_files.push_back(entry.path());
    if (name.rfind("reliability_", 0) == 0 && entry.path().extension() == ".csv")
      reliability_files.push_back(entry.path());
  }
  std::sort(metric_files.begin(), metric_files.end());
  std::sort(reliability_files.begin(), reliability_files.end());

  std::vector<ParsedMetrics> rows;
  std::set<std::string> digests;
  for (const auto& file : metric_files) {
    std::string digest;
    auto parsed = parse_metrics_file(file, &digest);
    if (!digest.empty()) digests.insert(digest);
    rows.insert(rows.end(), parsed.begin(), parsed.end());
  }
  if (rows.empty())
    throw Error("data", "no metrics CSV rows found under '" + run_dir.string() + "'");
  const std::string digest =
      digests.size() == 1 ? *digests.begin() : (digests.empty() ? "unknown" : "mixed");

  const std::vector<std::string> metric_names = {
      "accuracy", "ece", "mean_diff", "q1", "q2", "q3",
      "pos_outlier_count", "pos_outlier_mean", "neg_outlier_count", "neg_outlier_mean"};

  // summary over pooled rows, grouped by scheme
  std::map<std::string, std::map<std::string, std::vector<double>>> by_scheme;
  for (const auto& row : rows) {
    if (row.source != "pooled") continue;
    for (const auto& name : metric_names) {
      auto it = row.values.find(name);
      if (it != row.values.end()) by_scheme[row.scheme][name].push_back(it->second);
    }
  }
  if (by_scheme.empty())
    throw Error("data", "metrics files contain no pooled rows");

  ReportPaths paths;
  paths.summary = out_dir / "summary.csv";
  {
    auto out = open_out(paths.summary);
    out << "# config_digest=" << digest << "\n";
    out << "scheme,metric,n,mean,sd\n";
    for (const auto& [scheme, metrics] : by_scheme) {
      for (const auto& name : metric_names) {
        auto it = metrics.find(name);
        if (it == metrics.end() || it->second.empty()) {
          out << scheme << "," << name << ",0,absent,absent\n";
          continue;
        }
        const auto agg = aggregate(it->second);
        out << scheme << "," << name << "," << agg.n << "," << fmt17(agg.mean) << ","
            << fmt17(agg.sd) << "\n";
      }
    }
  }
  if (emit_json) {
    json j;
    j["config_digest"] = digest;
    json schemes = json::object();
    for (const auto& [scheme, metrics] : by_scheme) {
      json m = json::object();
      for (const auto& name : metric_names) {
        auto it = metrics.find(name);
        if (it == metrics.end() || it->second.empty()) {
          m[name] = nullptr;
          continue;
        }
        const auto agg = aggregate(it->second);
        m[name] = {{"n", agg.n}, {"mean", agg.mean}, {"sd", agg.sd}};
      }
      schemes[scheme] = std::move(m);
    }
    j["schemes"] = std::move(schemes);
    auto out = open_out(out_dir / "summary.json");
    out << j.dump(2) << "\n";
  }

  // reliability bins averaged over seeds per scheme (scheme from filename:
  // reliability_<scheme>_seed<seed>.csv)
  struct BinAgg {
    std::vector<double> counts, accs, confs;
  };
  std::map<std::string, std::map<std::pair<double, double>, BinAgg>> rel;
  for (const auto& file : reliability_files) {
    auto stem = file.stem().string();  // reliability_<scheme>_seed<N>
    stem = stem.substr(std::string("reliability_").size());
    const auto seed_pos = stem.rfind("_seed");
    const std::string scheme = seed_pos == std::string::npos ? stem : stem.substr(0, seed_pos);
    std::ifstream in(file);
    if (!in) throw Error("io", "cannot open '" + file.string() + "'");
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (!saw_header) {
        saw_header = true;
        continue;
      }
      const auto cells = split_csv(line);
      if (cells.size() < 5) continue;
      const double lo = parse_double("bin_low", cells[0]);
      const double hi = parse_double("bin_high", cells[1]);
      auto& agg = rel[scheme][{lo, hi}];
      agg.counts.push_back(parse_double("count", cells[2]));
      if (!cells[3].empty()) agg.accs.push_back(parse_double("acc", cells[3]));
      if (!cells[4].empty()) agg.confs.push_back(parse_double("conf", cells[4]));
    }
  }
  paths.reliability = out_dir / "reliability_diagram.csv";
  {
    auto out = open_out(paths.reliability);
    out << "# config_digest=" << digest << "\n";
    out << "scheme,bin_low,bin_high,mean_count,acc,conf\n";
    for (const auto& [scheme, bins] : rel) {
      for (const auto& [range, agg] : bins) {
        out << scheme << "," << fmt17(range.first) << "," << fmt17(range.second) << ","
            << fmt17(aggregate(agg.counts).mean) << ",";
        if (!agg.accs.empty()) out << fmt17(aggregate(agg.accs).mean);
        else out << "absent";
        out << ",";
        if (!agg.confs.empty()) out << fmt17(aggregate(agg.confs).mean);
        else out << "absent";
        out << "\n";
      }
    }
  }

  // box-plot data per (scheme, source) from the quartile columns
  std::map<std::pair<std::string, std::string>,
           std::map<std::string, std::vector<double>>> box;
  for (const auto& row : rows) {
    for (const auto& name : {"q1", "q2", "q3", "pos_outlier_count", "neg_outlier_count"}) {
      auto it = row.values.find(name);
      if (it != row.values.end()) box[{row.scheme, row.source}][name].push_back(it->second);
    }
  }
  paths.boxplot = out_dir / "boxplot.csv";
  {
    auto out = open_out(paths.boxplot);
    out << "# config_digest=" << digest << "\n";
    out << "scheme,source,q1,q2,q3,lo_fence,hi_fence,pos_outlier_count,neg_outlier_count\n";
    for (const auto& [key, metrics] : box) {
      auto value = [&](const char* name) -> std::optional<double> {
        auto it = metrics.find(name);
        if (it == metrics.end() || it->second.empty()) return std::nullopt;
        return aggregate(it->second).mean;
      };
      const auto q1 = value("q1"), q2 = value("q2"), q3 = value("q3");
      out << key.first << "," << key.second << ",";
      auto emit = [&](std::optional<double> v) {
        if (v) out << fmt17(*v);
        else out << "absent";
      };
      emit(q1);
      out << ",";
      emit(q2);
      out << ",";
      emit(q3);
      out << ",";
      if (q1 && q3) out << fmt17(*q1 - 1.5 * (*q3 - *q1)) << "," << fmt17(*q3 + 1.5 * (*q3 - *q1));
      else out << "absent,absent";
      out << ",";
      emit(value("pos_outlier_count"));
      out << ",";
      emit(value("neg_outlier_count"));
      out << "\n";
    }
  }
  return paths;
}

}  // namespace morelab
