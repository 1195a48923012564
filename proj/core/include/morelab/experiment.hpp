#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "morelab/alignment.hpp"
#include "morelab/metrics.hpp"
#include "morelab/prefdata.hpp"
#include "morelab/trainer.hpp"

namespace morelab {

// Flat key = value experiment configuration ('#' comments, lists
// comma-separated). Every field has a default; unknown keys are rejected.
struct ExperimentConfig {
  // synthesis
  int d = 16;
  int k = 5;
  int n_per_source = 4000;
  std::vector<double> alpha = {2.0};  // scalar broadcasts to all sources
  double w_star_norm = 2.0;
  bool orthogonal_drift = true;
  LabelNoiseMode label_noise_mode = LabelNoiseMode::kBradleyTerry;
  double test_fraction = 0.2;
  int shared_test_size = 2000;
  std::uint64_t seed = 1;
  int featurizer_dim = 64;  // text-form JSONL ingestion

  // train
  Scheme scheme = Scheme::kMore;
  int single_source = 0;
  int per_source_batch = 16;
  int epochs = 1;
  double learning_rate = 0.05;
  Arch arch = Arch::kLinear;
  int hidden = 16;
  LambdaMode lambda_mode = LambdaMode::kSolve;
  std::vector<double> fixed_lambda;
  bool warm_start_lambda = false;
  int solver_max_iters = 256;
  double solver_tol = 1e-10;

  // eval
  int bins = 10;
  bool folded_confidence = false;
  double outlier_fence = 1.5;  // Tukey fence multiplier

  // study / sweep
  int study_candidates = 4;  // S
  int study_prompts = 2000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> k_values = {2, 3, 4, 5};

  static ExperimentConfig from_file(const std::filesystem::path& path);
  static ExperimentConfig from_string(const std::string& text);

  // Sorted key=value lines with every default resolved.
  std::string canonical() const;
  // FNV-1a 64 of canonical(), 16 hex digits; embedded in every output file.
  std::string digest() const;

  std::vector<double> alphas_for(int num_sources) const;
  TrainConfig train_config(Scheme scheme, int single_source, std::uint64_t seed) const;
};

// Generating world implied by the config (shared weight, drift directions).
SynthesisSpec synthesis_spec_from(const ExperimentConfig& config);

// Replicated training data: same world, fresh pair/label draws per seed.
DiversifiedDataset replicate_dataset(const ExperimentConfig& config,
                                     const SynthesisSpec& world, std::uint64_t seed);

// Drift-free testset labelled by the shared weight only.
DiversifiedDataset make_shared_testset(const ExperimentConfig& config,
                                       const SynthesisSpec& world);

struct SynthPaths {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path shared_test;
  std::filesystem::path spec;
};

// Writes train/test/shared_test JSONL plus the generating-spec sidecar.
SynthPaths cmd_synth(const ExperimentConfig& config, const std::filesystem::path& out_dir);

void save_spec_json(const SynthesisSpec& spec, const std::filesystem::path& path,
                    const std::string& config_digest);
SynthesisSpec load_spec_json(const std::filesystem::path& path);

struct TrainPaths {
  std::filesystem::path checkpoint;
  std::filesystem::path trace;
  std::filesystem::path log;
  double final_train_loss = 0.0;
};

// Trains on <data_dir>/train.jsonl; emits checkpoint, lambda trace and a
// one-record JSON train log.
TrainPaths cmd_train(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                     Scheme scheme, int single_source, std::uint64_t seed,
                     const std::filesystem::path& out_dir);

struct EvalPaths {
  std::filesystem::path metrics;
  std::filesystem::path reliability;
};

// Per-source plus pooled accuracy/ECE/reward-difference stats.
EvalPaths cmd_eval(const ExperimentConfig& config,
                   const std::filesystem::path& checkpoint_path,
                   const std::filesystem::path& testset_path,
                   const std::string& scheme_name, std::uint64_t seed,
                   const std::filesystem::path& out_dir, bool emit_json = false);

struct SweepRow {
  int k = 0;
  std::uint64_t seed = 0;
  std::string scheme;
  double accuracy = 0.0;
  double ece = 0.0;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::vector<std::pair<std::uint64_t, double>> rho_per_seed;  // (seed, spearman)
  double mean_rho = 0.0;
  std::filesystem::path csv;
  std::filesystem::path rho_csv;
};

// Trains more + multitask on the first K sources for every (K, seed) cell and
// evaluates on the shared testset; reports the per-seed rank correlation of
// (K, more-scheme ECE).
SweepOutcome cmd_sweep_k(const ExperimentConfig& config,
                         const std::filesystem::path& out_dir);

struct StudyPaths {
  StudyOutcome outcome;
  AlignmentResult oracle_row;  // ground-truth shared-weight reference
  std::filesystem::path csv;
  std::filesystem::path summary;
};

// Trains the given (scheme, single_source) cells for every seed, then runs
// the calibration-vs-selection study against a fixed candidate pool.
StudyPaths cmd_study(const ExperimentConfig& config,
                     const std::vector<std::pair<Scheme, int>>& schemes,
                     const std::vector<std::uint64_t>& seeds,
                     const std::filesystem::path& out_dir);

struct ReportPaths {
  std::filesystem::path summary;
  std::filesystem::path reliability;
  std::filesystem::path boxplot;
};

// Aggregates metrics_*.csv / reliability_*.csv found in run_dir: mean and sd
// over seeds per (scheme, metric), pooled reliability bins, and box-plot data.
ReportPaths cmd_report(const std::filesystem::path& run_dir,
                       const std::filesystem::path& out_dir, bool emit_json = false);

}  // namespace morelab
