#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "morelab/error.hpp"
#include "morelab/experiment.hpp"

using namespace morelab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "morelab_experiment_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config() {
  return ExperimentConfig::from_string(
      "d = 6\n"
      "k = 3\n"
      "n_per_source = 60\n"
      "alpha = 1.0\n"
      "seed = 11\n"
      "shared_test_size = 120\n"
      "per_source_batch = 8\n"
      "study_prompts = 80\n"
      "seeds = 1,2\n"
      "k_values = 2,3\n");
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config: defaults, parsing, validation") {
  const auto cfg = ExperimentConfig::from_string("");
  CHECK(cfg.d == 16);
  CHECK(cfg.k == 5);
  CHECK(cfg.n_per_source == 4000);
  CHECK(cfg.per_source_batch == 16);
  CHECK(cfg.epochs == 1);
  CHECK(cfg.learning_rate == 0.05);
  CHECK(cfg.bins == 10);
  CHECK(cfg.study_candidates == 4);

  const auto parsed = ExperimentConfig::from_string(
      "d = 8        # inline comment\n"
      "alpha = 0.5, 1.5, 2.5, 1.0, 0.0\n"
      "scheme = single:3\n"
      "label_noise_mode = deterministic\n"
      "seeds = 4,5,6\n");
  CHECK(parsed.d == 8);
  CHECK(parsed.alpha.size() == 5);
  CHECK(parsed.scheme == Scheme::kSingle);
  CHECK(parsed.single_source == 3);
  CHECK(parsed.label_noise_mode == LabelNoiseMode::kDeterministic);
  CHECK(parsed.seeds == std::vector<std::uint64_t>{4, 5, 6});

  CHECK_THROWS_AS(ExperimentConfig::from_string("unknown_key = 1\n"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_string("d\n"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_string("d = abc\n"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_string("alpha = 1,2\nk = 3\n"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_string("test_fraction = 1.5\n"), Error);
}

TEST_CASE("config: digest is stable, order-insensitive, value-sensitive") {
  const auto a = ExperimentConfig::from_string("d = 8\nk = 2\nalpha = 1.0\n");
  const auto b = ExperimentConfig::from_string("k = 2\nalpha = 1.0\nd = 8\n");
  CHECK(a.digest() == b.digest());
  CHECK(a.digest().size() == 16);

  const auto c = ExperimentConfig::from_string("d = 9\nk = 2\nalpha = 1.0\n");
  CHECK(a.digest() != c.digest());
}

TEST_CASE("synthesis_spec_from: config echo") {
  const auto cfg = tiny_config();
  const auto world = synthesis_spec_from(cfg);
  CHECK(world.num_sources() == 3);
  CHECK(world.dim == 6);
  CHECK(world.n_per_source == 60);
  for (const auto& src : world.sources) CHECK(src.drift_magnitude == 1.0);
}

TEST_CASE("cmd_synth: files exist, counts echo the config, reruns byte-identical") {
  const auto cfg = tiny_config();
  const auto dir = fresh_dir("synth");
  const auto paths = cmd_synth(cfg, dir);

  const auto train_set = load_jsonl(paths.train.string());
  const auto test_set = load_jsonl(paths.test.string());
  CHECK(train_set.num_sources() == 3);
  CHECK(test_set.num_sources() == 3);
  for (int s = 0; s < 3; ++s) {
    const auto total = train_set.groups[static_cast<std::size_t>(s)].size() +
                       test_set.groups[static_cast<std::size_t>(s)].size();
    CHECK(total == 60);  // n_per_source echo across the split
  }
  const auto shared = load_jsonl(paths.shared_test.string());
  CHECK(shared.total_pairs() == 120);

  const auto spec = load_spec_json(paths.spec);
  CHECK(spec.num_sources() == 3);

  // digest embedded in every output
  CHECK(read_file(paths.train).find("# config_digest=" + cfg.digest()) != std::string::npos);

  const auto first = read_file(paths.train);
  const auto dir2 = fresh_dir("synth2");
  const auto paths2 = cmd_synth(cfg, dir2);
  CHECK(read_file(paths2.train) == first);
}

TEST_CASE("cmd_synth: alpha list length mismatch is a config error") {
  CHECK_THROWS_AS(ExperimentConfig::from_string("k = 3\nalpha = 1.0, 2.0\n"), Error);
}

TEST_CASE("cmd_train: checkpoint + trace + log, determinism across reruns") {
  const auto cfg = tiny_config();
  const auto data_dir = fresh_dir("train_data");
  cmd_synth(cfg, data_dir);

  const auto out1 = fresh_dir("train_out1");
  const auto paths = cmd_train(cfg, data_dir, Scheme::kMore, 0, 5, out1);
  CHECK(fs::exists(paths.checkpoint));
  CHECK(fs::exists(paths.trace));
  CHECK(fs::exists(paths.log));

  const auto ckpt = load_checkpoint(paths.checkpoint.string());
  CHECK(ckpt.model.dim == 6);
  CHECK(ckpt.config_digest == cfg.digest());
  CHECK(ckpt.seed == 5);

  // more-scheme trace has K lambda columns; multitask trace is empty
  const auto trace_text = read_file(paths.trace);
  CHECK(trace_text.find("lambda_0,lambda_1,lambda_2") != std::string::npos);

  const auto out_mt = fresh_dir("train_out_mt");
  const auto mt = cmd_train(cfg, data_dir, Scheme::kMultiTask, 0, 5, out_mt);
  std::istringstream mt_trace(read_file(mt.trace));
  int content_lines = 0;
  std::string line;
  while (std::getline(mt_trace, line))
    if (!line.empty() && line[0] != '#') ++content_lines;
  CHECK(content_lines == 1);  // header only

  const auto out2 = fresh_dir("train_out2");
  const auto paths2 = cmd_train(cfg, data_dir, Scheme::kMore, 0, 5, out2);
  CHECK(read_file(paths2.checkpoint) == read_file(paths.checkpoint));
  CHECK(read_file(paths2.trace) == read_file(paths.trace));

  CHECK_THROWS_AS(cmd_train(cfg, fresh_dir("nodata"), Scheme::kMore, 0, 1, out1), Error);
}

TEST_CASE("cmd_eval: metrics rows, reliability bins, round trip through report") {
  const auto cfg = tiny_config();
  const auto data_dir = fresh_dir("eval_data");
  const auto synth_paths = cmd_synth(cfg, data_dir);
  const auto run_dir = fresh_dir("eval_run");
  const auto train_paths = cmd_train(cfg, data_dir, Scheme::kMore, 0, 5, run_dir);

  const auto eval_paths = cmd_eval(cfg, train_paths.checkpoint, synth_paths.shared_test,
                                   "more", 5, run_dir);
  const auto metrics_text = read_file(eval_paths.metrics);
  CHECK(metrics_text.find("scheme,seed,source,n,accuracy,ece,") != std::string::npos);
  CHECK(metrics_text.find("more,5,pooled,120,") != std::string::npos);
  CHECK(metrics_text.find("# config_digest=" + cfg.digest()) != std::string::npos);

  const auto rel_text = read_file(eval_paths.reliability);
  CHECK(rel_text.find("bin_low,bin_high,count,acc,conf") != std::string::npos);

  const auto report_dir = fresh_dir("eval_report");
  const auto report_paths = cmd_report(run_dir, report_dir);
  const auto summary = read_file(report_paths.summary);
  CHECK(summary.find("scheme,metric,n,mean,sd") != std::string::npos);
  CHECK(summary.find("more,accuracy,1,") != std::string::npos);
  CHECK(fs::exists(report_paths.reliability));
  CHECK(fs::exists(report_paths.boxplot));
}

TEST_CASE("cmd_eval: ground-truth checkpoint on deterministic drift-free test scores 1.0") {
  auto cfg = ExperimentConfig::from_string(
      "d = 6\nk = 2\nn_per_source = 40\nalpha = 0.0\nseed = 3\n"
      "label_noise_mode = deterministic\nshared_test_size = 80\n");
  const auto dir = fresh_dir("truth");
  const auto synth_paths = cmd_synth(cfg, dir);

  const auto world = synthesis_spec_from(cfg);
  RewardModel truth = init_model(Arch::kLinear, world.dim, 0, 0);
  truth.head_weights = world.shared_weight;
  const auto ckpt_path = dir / "truth.json";
  save_checkpoint(truth, ckpt_path.string(), cfg.digest(), 0);

  const auto eval_paths = cmd_eval(cfg, ckpt_path, synth_paths.shared_test, "oracle", 0, dir);
  const auto text = read_file(eval_paths.metrics);
  CHECK(text.find("oracle,0,pooled,80,1,") != std::string::npos);

  // zero checkpoint: accuracy 0 under the positive-difference convention
  const RewardModel zero = init_model(Arch::kLinear, world.dim, 0, 0);
  const auto zero_path = dir / "zero.json";
  save_checkpoint(zero, zero_path.string(), cfg.digest(), 0);
  const auto zero_eval = cmd_eval(cfg, zero_path, synth_paths.shared_test, "zero", 0, dir);
  CHECK(read_file(zero_eval.metrics).find("zero,0,pooled,80,0,") != std::string::npos);

  // every zero-model confidence is exactly 0.5, which the bin rule puts in
  // bin 5 = (0.4, 0.5]
  std::istringstream rel(read_file(zero_eval.reliability));
  std::string line;
  int row = 0;
  while (std::getline(rel, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("bin_low", 0) == 0) continue;
    ++row;
    const auto cells = [&] {
      std::vector<std::string> out;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) out.push_back(cell);
      return out;
    }();
    if (row == 5) CHECK(cells[2] == "80");
    else CHECK(cells[2] == "0");
  }
  CHECK(row == 10);
}

TEST_CASE("cmd_sweep_k: row counts, trace widths, per-seed trend statistic") {
  auto cfg = tiny_config();
  const auto dir = fresh_dir("sweep");
  const auto outcome = cmd_sweep_k(cfg, dir);
  CHECK(outcome.rows.size() == 2 * 2 * 2);  // |k_values| * |seeds| * 2 schemes
  CHECK(outcome.rho_per_seed.size() == 2);
  CHECK(fs::exists(outcome.csv));
  CHECK(fs::exists(outcome.rho_csv));

  // trace of the K=2 cell has exactly 2 lambda columns
  const auto trace2 = read_file(dir / "traces" / "trace_more_k2_seed1.csv");
  CHECK(trace2.find("step,lambda_0,lambda_1,norm_sq,loss_0,loss_1") != std::string::npos);
  const auto trace3 = read_file(dir / "traces" / "trace_more_k3_seed1.csv");
  CHECK(trace3.find("lambda_2") != std::string::npos);

  auto bad = cfg;
  bad.k_values = {2, 9};
  CHECK_THROWS_AS(cmd_sweep_k(bad, fresh_dir("sweep_bad")), Error);
}

TEST_CASE("cmd_study: reference row present, rho bounded, deterministic") {
  auto cfg = tiny_config();
  const auto dir = fresh_dir("study");
  const std::vector<std::pair<Scheme, int>> schemes = {
      {Scheme::kSingle, 0}, {Scheme::kMultiTask, 0}, {Scheme::kMore, 0}};
  const auto paths = cmd_study(cfg, schemes, {1, 2}, dir);

  CHECK(paths.outcome.results.size() == 6);
  CHECK(paths.oracle_row.rm_id == "oracle");
  CHECK(paths.oracle_row.regret == 0.0);
  if (paths.outcome.spearman_rho) {
    CHECK(*paths.outcome.spearman_rho >= -1.0);
    CHECK(*paths.outcome.spearman_rho <= 1.0);
  }
  const auto text = read_file(paths.csv);
  CHECK(text.find("rm_id,scheme,seed,ece,score,oracle,random,regret") != std::string::npos);
  CHECK(text.find("oracle,oracle,") != std::string::npos);
  CHECK(read_file(paths.summary).find("config_digest") != std::string::npos);

  const auto again = cmd_study(cfg, schemes, {1, 2}, fresh_dir("study2"));
  CHECK(read_file(again.csv) == text);

  CHECK_THROWS_AS(cmd_study(cfg, {{Scheme::kMore, 0}}, {1}, fresh_dir("study3")), Error);
}

TEST_CASE("cmd_report: single-seed aggregate equals the raw row; absent stays absent") {
  const auto run_dir = fresh_dir("report_run");
  {
    std::ofstream out(run_dir / "metrics_more_seed1.csv");
    out << "# config_digest=feedface\n# seed=1\n";
    out << "scheme,seed,source,n,accuracy,ece,mean_diff,q1,q2,q3,"
           "pos_outlier_count,pos_outlier_mean,neg_outlier_count,neg_outlier_mean\n";
    out << "more,1,pooled,10,0.75,0.125,0.5,0.1,0.4,0.9,0,,0,\n";
  }
  {
    std::ofstream out(run_dir / "metrics_more_seed2.csv");
    out << "# config_digest=feedface\n# seed=2\n";
    out << "scheme,seed,source,n,accuracy,ece,mean_diff,q1,q2,q3,"
           "pos_outlier_count,pos_outlier_mean,neg_outlier_count,neg_outlier_mean\n";
    out << "more,2,pooled,10,0.85,0.075,0.5,0.1,0.4,0.9,0,,0,\n";
  }
  const auto paths = cmd_report(run_dir, fresh_dir("report_out"));
  const auto summary = read_file(paths.summary);
  CHECK(summary.find("more,accuracy,2,0.80000000000000004") != std::string::npos);
  CHECK(summary.find("more,ece,2,0.10000000000000001") != std::string::npos);
  CHECK(summary.find("more,pos_outlier_mean,0,absent,absent") != std::string::npos);

  CHECK_THROWS_AS(cmd_report(fresh_dir("report_empty"), fresh_dir("report_empty_out")), Error);
}

}  // TEST_SUITE
