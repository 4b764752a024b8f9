#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "simgen/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"simgen: surrogate-guided generation of simulation parameters"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string workspace;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "Run-config file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed (overrides the config)");
  app.add_option("--workspace", workspace, "Workspace directory (overrides the config)");
  app.add_option("--set", sets, "Config override section.key=value (repeatable)");

  std::string kind;
  long sim_n = 0;
  long gen_n = 0;
  int trials = 0;
  simgen::StageOptions options;

  auto* simulate = app.add_subcommand("simulate", "Write an oracle dataset to dataset.csv");
  simulate->add_option("--kind", kind, "Oracle kind")->check(CLI::IsMember({"rupture", "material"}));
  simulate->add_option("--n", sim_n, "Number of rows")->check(CLI::PositiveNumber);
  app.add_subcommand("train-surrogate", "Split the dataset and fit the surrogate");
  auto* eval = app.add_subcommand("eval", "Evaluate the surrogate on a split");
  eval->add_option("--split", options.eval_split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  app.add_subcommand("train-agent", "Train the PPO generator against the surrogate");
  auto* generate = app.add_subcommand("generate", "Sample parameter sets from the trained policy");
  generate->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  auto* optimize = app.add_subcommand("optimize", "Bayesian optimization over the generated ranges");
  optimize->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  app.add_subcommand("report", "Write plot-ready report files");
  app.add_subcommand("pipeline", "Run every stage in order");

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::string> overrides = sets;
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (!workspace.empty()) overrides.push_back("workspace=" + nlohmann::json(workspace).dump());
    if (!kind.empty()) overrides.push_back("data.kind=\"" + kind + "\"");
    if (sim_n > 0) overrides.push_back("data.n=" + std::to_string(sim_n));
    if (gen_n > 0) overrides.push_back("generation.n=" + std::to_string(gen_n));
    if (trials > 0) overrides.push_back("bayesopt.trials=" + std::to_string(trials));

    const simgen::RunConfig cfg = simgen::load_run_config(config_path, overrides);
    const auto stage = simgen::stage_from_string(app.get_subcommands().front()->get_name());
    simgen::run_stage(stage, cfg, options);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "simgen: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
