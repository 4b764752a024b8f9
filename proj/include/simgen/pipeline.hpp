#pragma once

// Run-config parsing and the file-based pipeline stages behind the CLI.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simgen/bayesopt.hpp"
#include "simgen/data.hpp"
#include "simgen/gen_env.hpp"
#include "simgen/oracle.hpp"
#include "simgen/ppo.hpp"
#include "simgen/surrogate.hpp"

namespace simgen {

using NamePair = std::pair<std::string, std::string>;

struct DataSection {
  std::string kind = "rupture";  // oracle kind for `simulate`
  long n = 2000;
  std::string space_file;    // empty: the oracle's built-in space
  std::string dataset_file;  // non-empty: ingest this CSV instead of simulating
  std::string task;          // required with dataset_file; otherwise implied by kind
  std::string outcome_column = "outcome";
  SplitFractions split;
};

struct GenerationSection {
  long n = 5000;
  int bins = 10;
};

struct BayesoptSection {
  int trials = 1000;
  BoOptions options;
  NamePair contour{"height", "width"};
  int resolution = 50;
};

struct OutputSection {
  std::vector<NamePair> scatter_pairs;
  std::vector<NamePair> contour_pairs;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path workspace;
  DataSection data;
  GbdtConfig surrogate;
  RewardConfig environment;
  PpoConfig ppo;
  GenerationSection generation;
  BayesoptSection bayesopt;
  OutputSection output;

  // Resolved by load_run_config.
  ParameterSpace space;
  Task task = Task::binary;
};

/// Module seeds: global seed XOR a fixed per-module tag.
enum class SeedTag : std::uint64_t {
  simulate = 0x73696d756c617465ULL,   // "simulate"
  split = 0x73706c6974746167ULL,      // "splittag"
  surrogate = 0x7375727267617465ULL,  // "surrgate"
  environment = 0x656e7669726f6e6dULL,
  ppo = 0x70706f6167656e74ULL,        // "ppoagent"
  generate = 0x67656e6572617465ULL,   // "generate"
  bayesopt = 0x626179736f707473ULL,   // "baysopts"
};
std::uint64_t module_seed(std::uint64_t global, SeedTag tag);

/// Applies `section.key=value` to a parsed config document. The value is
/// read as JSON when it parses, otherwise as a string.
void apply_override(std::string& config_text, const std::string& assignment);

/// Strict parse: unknown keys and missing required keys are errors naming
/// the key. Relative file references resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);

/// Reads the file, applies the overrides in order, parses, and checks that
/// referenced files exist.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

enum class Stage { simulate, train_surrogate, eval, train_agent, generate, optimize, report, pipeline };

Stage stage_from_string(const std::string& name);
std::string to_string(Stage s);

struct StageOptions {
  std::string eval_split = "test";
};

namespace artifact {
inline constexpr const char* dataset = "dataset.csv";
inline constexpr const char* split = "split.csv";
inline constexpr const char* model = "surrogate.model";
inline constexpr const char* metrics = "metrics.json";
inline constexpr const char* policy = "agent.policy";
inline constexpr const char* curve = "curve.csv";
inline constexpr const char* generated = "generated.csv";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* study = "study.json";
inline constexpr const char* grid = "grid.csv";
inline constexpr const char* report = "report.json";
inline constexpr const char* report_dir = "report";
}  // namespace artifact

/// Runs one stage (or all of them for Stage::pipeline), reading its inputs
/// from and writing its outputs to the workspace.
void run_stage(Stage stage, const RunConfig& cfg, const StageOptions& options = {});

/// Writes via a temporary sibling file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Loaded artifacts, shared by the stages and the acceptance checks.
Dataset load_workspace_dataset(const RunConfig& cfg);
SurrogateModel load_workspace_model(const RunConfig& cfg);
GenEnvironment make_environment(const RunConfig& cfg, std::shared_ptr<const SurrogateModel> model);

}  // namespace simgen
