#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morelab/error.hpp"
#include "morelab/experiment.hpp"

namespace fs = std::filesystem;
using namespace morelab;

namespace {

ExperimentConfig load_config(const std::string& config_path,
                             std::uint64_t* seed_override) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{}
                                             : ExperimentConfig::from_file(config_path);
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

std::vector<std::pair<Scheme, int>> parse_scheme_list(const std::string& text,
                                                      int num_sources) {
  std::vector<std::pair<Scheme, int>> out;
  if (text == "all") {
    for (int i = 0; i < num_sources; ++i) out.emplace_back(Scheme::kSingle, i);
    out.emplace_back(Scheme::kMultiTask, 0);
    out.emplace_back(Scheme::kMore, 0);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_scheme(item));
  }
  if (out.empty()) throw Error("usage", "empty scheme list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diversified-preference reward model training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "runs/out";
  std::string data_dir;
  std::string checkpoint_path;
  std::string testset_path;
  std::string scheme_text = "more";
  std::string schemes_text = "all";
  std::string format = "csv";
  std::string run_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::uint64_t> seeds;

  auto add_common = [&](CLI::App* cmd, bool with_scheme) {
    cmd->add_option("--config", config_path, "experiment config file (key = value)");
    cmd->add_option("--out", out_dir, "output directory");
    auto* s = cmd->add_option("--seed", seed, "seed override");
    s->each([&](const std::string&) { seed_given = true; });
    if (with_scheme)
      cmd->add_option("--scheme", scheme_text, "single:<i>|multitask|more");
  };

  auto* synth = app.add_subcommand("synth", "synthesize train/test/shared-test datasets");
  add_common(synth, false);

  auto* train_cmd = app.add_subcommand("train", "train a reward model on synthesized data");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", data_dir, "directory holding train.jsonl")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a testset");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval_cmd->add_option("--testset", testset_path, "testset JSONL")->required();
  eval_cmd->add_option("--format", format, "csv|json output format");

  auto* sweep = app.add_subcommand("sweep-k", "source-count sweep of more vs multitask");
  add_common(sweep, false);
  sweep->add_option("--seeds", seeds, "replication seeds (overrides config)");

  auto* study = app.add_subcommand("study", "calibration vs best-of-S selection study");
  add_common(study, false);
  study->add_option("--schemes", schemes_text, "comma list of schemes, or 'all'");
  study->add_option("--seeds", seeds, "replication seeds (overrides config)");

  auto* report = app.add_subcommand("report", "aggregate metrics CSVs in a run directory");
  report->add_option("--run", run_dir, "directory with metrics_*.csv")->required();
  report->add_option("--out", out_dir, "output directory");
  report->add_option("--format", format, "csv|json output format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error:usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (format != "csv" && format != "json")
      throw Error("usage", "--format must be csv or json");
    const bool emit_json = format == "json";

    if (synth->parsed()) {
      const auto cfg = load_config(config_path, seed_given ? &seed : nullptr);
      const auto paths = cmd_synth(cfg, out_dir);
      std::cout << "wrote " << paths.train.string() << ", " << paths.test.string() << ", "
                << paths.shared_test.string() << ", " << paths.spec.string() << "\n";
    } else if (train_cmd->parsed()) {
      const auto cfg = load_config(config_path, nullptr);
      const auto [scheme, source] = parse_scheme(scheme_text);
      const std::uint64_t train_seed = seed_given ? seed : cfg.seed;
      const auto paths = cmd_train(cfg, data_dir, scheme, source, train_seed, out_dir);
      std::cout << "wrote " << paths.checkpoint.string() << " (final train loss "
                << paths.final_train_loss << ")\n";
    } else if (eval_cmd->parsed()) {
      const auto cfg = load_config(config_path, nullptr);
      const std::uint64_t label_seed = seed_given ? seed : cfg.seed;
      const auto [scheme, source] = parse_scheme(scheme_text);
      const auto paths = cmd_eval(cfg, checkpoint_path, testset_path,
                                  scheme_label(scheme, source), label_seed, out_dir,
                                  emit_json);
      std::cout << "wrote " << paths.metrics.string() << " and "
                << paths.reliability.string() << "\n";
    } else if (sweep->parsed()) {
      auto cfg = load_config(config_path, seed_given ? &seed : nullptr);
      if (!seeds.empty()) cfg.seeds = seeds;
      const auto outcome = cmd_sweep_k(cfg, out_dir);
      std::cout << "wrote " << outcome.csv.string() << " (mean spearman "
                << outcome.mean_rho << ")\n";
    } else if (study->parsed()) {
      auto cfg = load_config(config_path, seed_given ? &seed : nullptr);
      const auto scheme_list = parse_scheme_list(schemes_text, cfg.k);
      const auto study_seeds = seeds.empty() ? cfg.seeds : seeds;
      const auto paths = cmd_study(cfg, scheme_list, study_seeds, out_dir);
      std::cout << "wrote " << paths.csv.string() << " and " << paths.summary.string()
                << "\n";
    } else if (report->parsed()) {
      const auto paths = cmd_report(run_dir, out_dir, emit_json);
      std::cout << "wrote " << paths.summary.string() << ", " << paths.reliability.string()
                << ", " << paths.boxplot.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error:" << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
