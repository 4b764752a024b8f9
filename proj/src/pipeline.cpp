#include "simgen/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "json_support.hpp"
#include "simgen/generator.hpp"
#include "simgen/metrics.hpp"

namespace simgen {

namespace fs = std::filesystem;
using detail::json;

std::uint64_t module_seed(std::uint64_t global, SeedTag tag) { return global ^ static_cast<std::uint64_t>(tag); }

// ---------------------------------------------------------------- config

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

template <class T>
void read(const json& sec, const std::string& where, const std::string& key, T& out, bool required = false) {
  auto it = sec.find(key);
  if (it == sec.end()) {
    if (required) throw ConfigError("config: missing required key '" + path_of(where, key) + "'");
    return;
  }
  const std::string name = path_of(where, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ConfigError("config: '" + name + "' must be a boolean");
    out = it->get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ConfigError("config: '" + name + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError("config: '" + name + "' must be non-negative");
    }
    out = it->get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw ConfigError("config: '" + name + "' must be a number");
    out = it->get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ConfigError("config: '" + name + "' must be a string");
    out = it->get<std::string>();
  } else {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: '" + name + "' has the wrong type");
    }
  }
}

const json& section(const json& doc, const std::string& key, const std::set<std::string>& allowed) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ConfigError("config: missing required key '" + key + "'");
  if (!it->is_object()) throw ConfigError("config: '" + key + "' must be an object");
  for (const auto& [k, v] : it->items()) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + key + "." + k + "'");
  }
  return *it;
}

NamePair read_pair(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_string()) {
    throw ConfigError("config: '" + name + "' must be a pair of parameter names");
  }
  return {j[0].get<std::string>(), j[1].get<std::string>()};
}

std::vector<NamePair> read_pairs(const json& sec, const std::string& where, const std::string& key) {
  std::vector<NamePair> out;
  auto it = sec.find(key);
  if (it == sec.end()) return out;
  if (!it->is_array()) throw ConfigError("config: '" + where + "." + key + "' must be a list of pairs");
  for (const auto& p : *it) out.push_back(read_pair(p, where + "." + key));
  return out;
}

void check_pair(const ParameterSpace& space, const NamePair& p, const std::string& where) {
  for (const auto& n : {p.first, p.second}) {
    if (!space.find(n)) throw ConfigError("config: " + where + " names unknown parameter '" + n + "'");
  }
  if (p.first == p.second) throw ConfigError("config: " + where + " must name two different parameters");
}

}  // namespace

void apply_override(std::string& config_text, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json doc = parse_json(config_text, "config");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key component");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': '" + key.substr(0, start) + "' is not a section");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
  config_text = doc.dump();
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  const json doc = parse_json(text, "config");
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  const std::set<std::string> top = {"seed",       "workspace", "data",     "surrogate", "environment",
                                     "ppo",        "generation", "bayesopt", "output"};
  for (const auto& [k, v] : doc.items()) {
    if (!top.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
  RunConfig cfg;
  read(doc, "", "seed", cfg.seed, true);
  std::string workspace;
  read(doc, "", "workspace", workspace, true);
  if (workspace.empty()) throw ConfigError("config: 'workspace' must not be empty");
  cfg.workspace = workspace;

  // data
  {
    const auto& s = section(doc, "data", {"kind", "n", "space_file", "dataset_file", "task", "outcome_column", "split"});
    read(s, "data", "kind", cfg.data.kind, true);
    read(s, "data", "n", cfg.data.n);
    read(s, "data", "space_file", cfg.data.space_file);
    read(s, "data", "dataset_file", cfg.data.dataset_file);
    read(s, "data", "task", cfg.data.task);
    read(s, "data", "outcome_column", cfg.data.outcome_column);
    if (auto it = s.find("split"); it != s.end()) {
      const auto& sp = section(s, "split", {"train", "validation", "test"});
      read(sp, "data.split", "train", cfg.data.split.train, true);
      read(sp, "data.split", "validation", cfg.data.split.validation, true);
      read(sp, "data.split", "test", cfg.data.split.test, true);
    }
    const auto kind = oracle::kind_from_string(cfg.data.kind);
    if (cfg.data.n < 1) throw ConfigError("config: 'data.n' must be >= 1");
    if (cfg.data.outcome_column.empty()) throw ConfigError("config: 'data.outcome_column' must not be empty");
    if (!cfg.data.space_file.empty()) cfg.data.space_file = (base_dir / cfg.data.space_file).string();
    if (!cfg.data.dataset_file.empty()) {
      cfg.data.dataset_file = (base_dir / cfg.data.dataset_file).string();
      if (cfg.data.task.empty()) throw ConfigError("config: 'data.task' is required with 'data.dataset_file'");
      if (cfg.data.space_file.empty()) throw ConfigError("config: 'data.space_file' is required with 'data.dataset_file'");
    }
    cfg.task = cfg.data.task.empty() ? (kind == oracle::Kind::rupture ? Task::binary : Task::regression)
                                     : task_from_string(cfg.data.task);
    split_counts(1000, cfg.data.split);  // validates the fractions
  }

  // surrogate
  {
    const auto& s = section(doc, "surrogate",
                            {"n_trees", "max_depth", "learning_rate", "min_samples_leaf", "subsample", "monotone", "ignore"});
    read(s, "surrogate", "n_trees", cfg.surrogate.n_trees);
    read(s, "surrogate", "max_depth", cfg.surrogate.max_depth);
    read(s, "surrogate", "learning_rate", cfg.surrogate.learning_rate);
    read(s, "surrogate", "min_samples_leaf", cfg.surrogate.min_samples_leaf);
    read(s, "surrogate", "subsample", cfg.surrogate.subsample);
    read(s, "surrogate", "monotone", cfg.surrogate.monotone);
    read(s, "surrogate", "ignore", cfg.surrogate.ignore);
    cfg.surrogate.seed = module_seed(cfg.seed, SeedTag::surrogate);
    cfg.surrogate.validate();
  }

  // environment
  {
    const auto& s = section(doc, "environment", {"direction", "invalid_penalty", "range_margin"});
    std::string direction = to_string(cfg.environment.direction);
    read(s, "environment", "direction", direction);
    cfg.environment.direction = direction_from_string(direction);
    read(s, "environment", "invalid_penalty", cfg.environment.invalid_penalty);
    read(s, "environment", "range_margin", cfg.environment.range_margin);
    cfg.environment.validate();
  }

  // ppo
  {
    const auto& s = section(doc, "ppo",
                            {"clip_eps", "gamma", "gae_lambda", "learning_rate", "rollout_size", "minibatch",
                             "epochs_per_update", "total_steps", "entropy_coef", "value_coef", "max_grad_norm",
                             "log_std_init", "hidden"});
    auto& p = cfg.ppo;
    read(s, "ppo", "clip_eps", p.clip_eps);
    read(s, "ppo", "gamma", p.gamma);
    read(s, "ppo", "gae_lambda", p.gae_lambda);
    read(s, "ppo", "learning_rate", p.learning_rate);
    read(s, "ppo", "rollout_size", p.rollout_size);
    read(s, "ppo", "minibatch", p.minibatch);
    read(s, "ppo", "epochs_per_update", p.epochs_per_update);
    read(s, "ppo", "total_steps", p.total_steps, true);
    read(s, "ppo", "entropy_coef", p.entropy_coef);
    read(s, "ppo", "value_coef", p.value_coef);
    read(s, "ppo", "max_grad_norm", p.max_grad_norm);
    read(s, "ppo", "log_std_init", p.log_std_init);
    read(s, "ppo", "hidden", p.hidden);
    p.seed = module_seed(cfg.seed, SeedTag::ppo);
    p.validate();
  }

  // generation
  {
    const auto& s = section(doc, "generation", {"n", "bins"});
    read(s, "generation", "n", cfg.generation.n);
    read(s, "generation", "bins", cfg.generation.bins);
    if (cfg.generation.n < 1) throw ConfigError("config: 'generation.n' must be >= 1");
    if (cfg.generation.bins < 2) throw ConfigError("config: 'generation.bins' must be >= 2");
  }

  // bayesopt
  {
    const auto& s = section(doc, "bayesopt",
                            {"trials", "n_init", "random_candidates", "local_candidates", "local_scale", "noise", "window",
                             "refit_every", "length_grid", "contour", "resolution"});
    auto& b = cfg.bayesopt;
    read(s, "bayesopt", "trials", b.trials);
    read(s, "bayesopt", "n_init", b.options.n_init);
    read(s, "bayesopt", "random_candidates", b.options.random_candidates);
    read(s, "bayesopt", "local_candidates", b.options.local_candidates);
    read(s, "bayesopt", "local_scale", b.options.local_scale);
    read(s, "bayesopt", "noise", b.options.noise);
    read(s, "bayesopt", "window", b.options.window);
    read(s, "bayesopt", "refit_every", b.options.refit_every);
    read(s, "bayesopt", "length_grid", b.options.length_grid);
    read(s, "bayesopt", "resolution", b.resolution);
    if (auto it = s.find("contour"); it != s.end()) b.contour = read_pair(*it, "bayesopt.contour");
    if (b.options.n_init < 1 || b.trials < b.options.n_init) {
      throw ConfigError("config: need bayesopt.trials >= bayesopt.n_init >= 1");
    }
    if (b.resolution < 2) throw ConfigError("config: 'bayesopt.resolution' must be >= 2");
    if (b.options.random_candidates < 1 || b.options.local_candidates < 0 || b.options.window < 2 ||
        b.options.refit_every < 1 || !(b.options.noise >= 0.0) || !(b.options.local_scale > 0.0) ||
        b.options.length_grid.empty()) {
      throw ConfigError("config: invalid bayesopt option");
    }
  }

  // output
  {
    const auto& s = section(doc, "output", {"scatter_pairs", "contour_pairs"});
    cfg.output.scatter_pairs = read_pairs(s, "output", "scatter_pairs");
    cfg.output.contour_pairs = read_pairs(s, "output", "contour_pairs");
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::string text = read_text(path);
  for (const auto& o : overrides) apply_override(text, o);
  RunConfig cfg = parse_run_config(text, path.parent_path());

  for (const auto& f : {cfg.data.space_file, cfg.data.dataset_file}) {
    if (!f.empty() && !fs::exists(f)) throw ConfigError("config: referenced file does not exist: " + f);
  }
  const auto kind = oracle::kind_from_string(cfg.data.kind);
  cfg.space = cfg.data.space_file.empty() ? (kind == oracle::Kind::rupture ? oracle::rupture_space() : oracle::material_space())
                                          : load_parameter_space(cfg.data.space_file);
  check_pair(cfg.space, cfg.bayesopt.contour, "bayesopt.contour");
  for (const auto& p : cfg.output.scatter_pairs) check_pair(cfg.space, p, "output.scatter_pairs");
  for (const auto& p : cfg.output.contour_pairs) check_pair(cfg.space, p, "output.contour_pairs");
  const auto names = cfg.space.feature_names();
  for (const auto& [name, c] : cfg.surrogate.monotone) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("config: surrogate.monotone names unknown feature '" + name + "'");
    }
  }
  for (const auto& name : cfg.surrogate.ignore) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("config: surrogate.ignore names unknown feature '" + name + "'");
    }
  }
  return cfg;
}

Stage stage_from_string(const std::string& name) {
  static const std::pair<const char*, Stage> table[] = {
      {"simulate", Stage::simulate}, {"train-surrogate", Stage::train_surrogate}, {"eval", Stage::eval},
      {"train-agent", Stage::train_agent}, {"generate", Stage::generate},   {"optimize", Stage::optimize},
      {"report", Stage::report},     {"pipeline", Stage::pipeline}};
  for (const auto& [n, s] : table) {
    if (name == n) return s;
  }
  throw ConfigError("unknown subcommand '" + name + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::train_surrogate: return "train-surrogate";
    case Stage::eval: return "eval";
    case Stage::train_agent: return "train-agent";
    case Stage::generate: return "generate";
    case Stage::optimize: return "optimize";
    case Stage::report: return "report";
    case Stage::pipeline: return "pipeline";
  }
  return "?";
}

// ---------------------------------------------------------------- files

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void require_artifacts(const RunConfig& cfg, std::initializer_list<const char*> names, const std::string& stage) {
  std::vector<std::string> missing;
  for (const char* n : names) {
    if (!fs::exists(cfg.workspace / n)) missing.push_back((cfg.workspace / n).string());
  }
  if (missing.empty()) return;
  std::string msg = stage + ": missing artifact" + (missing.size() > 1 ? "s" : "") + ":";
  for (const auto& m : missing) msg += " " + m;
  throw SchemaError(msg);
}

std::string hex_id(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(text));
  return buf;
}

std::vector<SplitTag> read_split(const RunConfig& cfg, std::size_t n) {
  const std::string text = read_text(cfg.workspace / artifact::split);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "row,split") throw SchemaError("split.csv: unexpected header");
  std::vector<SplitTag> tags;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("split.csv: malformed line '" + line + "'");
    if (std::stoul(line.substr(0, comma)) != tags.size()) throw ParseError("split.csv: rows out of order");
    tags.push_back(split_tag_from_string(line.substr(comma + 1)));
  }
  if (tags.size() != n) throw SchemaError("split.csv does not match dataset.csv row count");
  return tags;
}

Dataset split_workspace_dataset(const RunConfig& cfg) {
  Dataset ds = load_workspace_dataset(cfg);
  ds.split = read_split(cfg, ds.size());
  return ds;
}

// Report documents carry the same 9 significant digits as the CSV artifacts.
void round_reals(json& j) {
  if (j.is_number_float()) {
    j = round_text(j.get<double>());
  } else if (j.is_structured()) {
    for (auto& v : j) round_reals(v);
  }
}

std::string json_text(json j) {
  round_reals(j);
  return j.dump(1) + "\n";
}

json ranges_json(const RangeSummary& r) {
  json out = json::array();
  for (std::size_t k = 0; k < r.names.size(); ++k) out.push_back({{"name", r.names[k]}, {"min", r.ranges[k].lo}, {"max", r.ranges[k].hi}});
  return out;
}

Objective directed_objective(const SurrogateModel& model, Direction direction) {
  return [&model, direction](std::span<const double> p) {
    const double u = model.unit_outcome(model.predict_raw(p));
    return direction == Direction::maximize ? u : 1.0 - u;
  };
}

// ------------------------------------------------------------ stages

void stage_simulate(const RunConfig& cfg) {
  Dataset ds;
  if (!cfg.data.dataset_file.empty()) {
    ds = load_dataset(cfg.data.dataset_file, cfg.space, cfg.data.outcome_column, cfg.task);
  } else {
    const auto kind = oracle::kind_from_string(cfg.data.kind);
    ds = oracle::synth_dataset(kind, static_cast<std::size_t>(cfg.data.n), module_seed(cfg.seed, SeedTag::simulate));
    if (!(ds.space == cfg.space)) {
      throw SchemaError("simulate: the configured parameter space differs from the " + cfg.data.kind + " oracle's");
    }
  }
  write_atomic(cfg.workspace / artifact::dataset, dataset_to_csv(ds, cfg.data.outcome_column));
}

void stage_train_surrogate(const RunConfig& cfg) {
  require_artifacts(cfg, {artifact::dataset}, "train-surrogate");
  const Dataset ds = split_dataset(load_workspace_dataset(cfg), cfg.data.split, module_seed(cfg.seed, SeedTag::split));
  std::ostringstream split;
  split << "row,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) split << i << ',' << to_string(ds.split[i]) << '\n';
  const SurrogateModel model = fit(ds.subset(SplitTag::train), cfg.surrogate, cfg.task);
  write_atomic(cfg.workspace / artifact::split, split.str());
  write_atomic(cfg.workspace / artifact::model, serialize_model(model));
}

void stage_eval(const RunConfig& cfg, const StageOptions& options) {
  require_artifacts(cfg, {artifact::dataset, artifact::split, artifact::model}, "eval");
  const SplitTag tag = split_tag_from_string(options.eval_split);
  const Dataset part = split_workspace_dataset(cfg).subset(tag);
  if (part.size() == 0) throw Error("eval: split '" + options.eval_split + "' is empty");
  const SurrogateModel model = load_workspace_model(cfg);
  const Metrics m = model.task == Task::binary ? evaluate_binary(model, part) : evaluate_regression(model, part);
  const std::string name = tag == SplitTag::test ? artifact::metrics : "metrics_" + options.eval_split + ".json";
  write_atomic(cfg.workspace / name, metrics_to_json(m, options.eval_split));
}

void stage_train_agent(const RunConfig& cfg) {
  require_artifacts(cfg, {artifact::model}, "train-agent");
  auto model = std::make_shared<const SurrogateModel>(load_workspace_model(cfg));
  GenEnvironment env = make_environment(cfg, model);
  const TrainResult r = train_agent(env, cfg.ppo);
  write_atomic(cfg.workspace / artifact::policy, serialize_policy(r.bundle));
  write_atomic(cfg.workspace / artifact::curve, curve_to_csv(r.curve));
}

void stage_generate(const RunConfig& cfg) {
  require_artifacts(cfg, {artifact::model, artifact::policy}, "generate");
  const std::string model_text = read_text(cfg.workspace / artifact::model);
  const std::string policy_text = read_text(cfg.workspace / artifact::policy);
  auto model = std::make_shared<const SurrogateModel>(deserialize_model(model_text));
  const PolicyBundle bundle = deserialize_policy(policy_text);
  const GenEnvironment env = make_environment(cfg, model);
  GeneratedDataset gd = generate_batch(bundle.policy, env, static_cast<std::size_t>(cfg.generation.n),
                                       module_seed(cfg.seed, SeedTag::generate));
  gd.provenance.policy_id = hex_id(policy_text);
  gd.provenance.surrogate_id = hex_id(model_text);
  const FilterResult f = filter_valid(gd);
  const auto hist = histogram_outcomes({f.data.predicted.data(), f.data.size()}, cfg.generation.bins);

  json summary = {{"n", gd.size()},
                  {"retained", f.data.size()},
                  {"retained_fraction", f.retained_fraction},
                  {"empty_warning", f.empty_warning},
                  {"histogram", {{"bins", cfg.generation.bins}, {"counts", hist}}},
                  {"provenance",
                   {{"policy_id", gd.provenance.policy_id},
                    {"surrogate_id", gd.provenance.surrogate_id},
                    {"seed", gd.provenance.seed},
                    {"timestamp", gd.provenance.timestamp}}}};
  summary["ranges"] = f.empty_warning ? json(nullptr) : ranges_json(summarize_ranges(gd));
  if (f.empty_warning) std::fprintf(stderr, "warning: no generated row passed the validity filter\n");
  write_atomic(cfg.workspace / artifact::generated, generated_to_csv(gd));
  write_atomic(cfg.workspace / artifact::summary, json_text(summary));
}

void stage_optimize(const RunConfig& cfg) {
  require_artifacts(cfg, {artifact::model, artifact::generated}, "optimize");
  const SurrogateModel model = load_workspace_model(cfg);
  const GeneratedDataset gd = generated_from_csv(read_text(cfg.workspace / artifact::generated), model.space);
  const RangeSummary ranges = summarize_ranges(gd);
  const Objective objective = directed_objective(model, cfg.environment.direction);
  BOStudy study = run_study(objective, ranges.ranges, cfg.bayesopt.trials, module_seed(cfg.seed, SeedTag::bayesopt),
                            cfg.bayesopt.options);
  study.names = ranges.names;
  const auto& [a, b] = cfg.bayesopt.contour;
  const ContourGrid grid = contour_grid(objective, model.space.index_of(a), model.space.index_of(b), ranges.ranges,
                                        cfg.bayesopt.resolution, study.best().params);
  write_atomic(cfg.workspace / artifact::study, study_to_json(study));
  write_atomic(cfg.workspace / artifact::grid, grid_to_csv(grid, a, b));
}

void stage_report(const RunConfig& cfg) {
  require_artifacts(cfg,
                    {artifact::dataset, artifact::split, artifact::model, artifact::metrics, artifact::policy,
                     artifact::curve, artifact::generated, artifact::summary, artifact::study, artifact::grid},
                    "report");
  const SurrogateModel model = load_workspace_model(cfg);
  const Dataset train = split_workspace_dataset(cfg).subset(SplitTag::train);
  const GeneratedDataset gd = generated_from_csv(read_text(cfg.workspace / artifact::generated), model.space);
  const FilterResult f = filter_valid(gd);
  const json study = parse_json(read_text(cfg.workspace / artifact::study), "study.json");
  const json metrics = parse_json(read_text(cfg.workspace / artifact::metrics), "metrics.json");
  const fs::path dir = cfg.workspace / artifact::report_dir;
  const auto& names = model.space.specs();
  std::vector<std::string> files;

  // Outcome histograms: training outcomes against generated predictions.
  const int bins = cfg.generation.bins;
  std::vector<double> train_unit(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) train_unit[i] = model.unit_outcome(train.outcomes[static_cast<Eigen::Index>(i)]);
  const auto h_train = histogram_outcomes(train_unit, bins);
  const auto h_gen = histogram_outcomes({f.data.predicted.data(), f.data.size()}, bins);
  {
    std::ostringstream out;
    out << "bin_lo,bin_hi,train,generated\n";
    for (int k = 0; k < bins; ++k) {
      out << format_real(static_cast<double>(k) / bins) << ',' << format_real(static_cast<double>(k + 1) / bins) << ','
          << h_train[static_cast<std::size_t>(k)] << ',' << h_gen[static_cast<std::size_t>(k)] << '\n';
    }
    write_atomic(dir / "histogram.csv", out.str());
    files.push_back("report/histogram.csv");
  }

  // Scatter extracts in physical units.
  for (const auto& [a, b] : cfg.output.scatter_pairs) {
    const auto ia = static_cast<Eigen::Index>(model.space.index_of(a));
    const auto ib = static_cast<Eigen::Index>(model.space.index_of(b));
    std::ostringstream out;
    out << a << ',' << b << ",source\n";
    for (Eigen::Index r = 0; r < train.rows.rows(); ++r) {
      out << format_real(train.rows(r, ia)) << ',' << format_real(train.rows(r, ib)) << ",train\n";
    }
    for (Eigen::Index r = 0; r < f.data.rows_raw.rows(); ++r) {
      out << format_real(f.data.rows_raw(r, ia)) << ',' << format_real(f.data.rows_raw(r, ib)) << ",generated\n";
    }
    const std::string name = "scatter_" + a + "_" + b + ".csv";
    write_atomic(dir / name, out.str());
    files.push_back("report/" + name);
  }

  // Ranges: training data against valid generated rows.
  json ranges = json::array();
  {
    std::optional<RangeSummary> gen;
    if (!f.empty_warning) gen = summarize_ranges(f.data);
    std::ostringstream out;
    out << "name,train_min,train_max,generated_min,generated_max\n";
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto& tr = model.train_ranges[k];
      out << names[k].name << ',' << format_real(tr.lo) << ',' << format_real(tr.hi) << ',';
      json entry = {{"name", names[k].name}, {"train_min", tr.lo}, {"train_max", tr.hi}};
      if (gen) {
        out << format_real(gen->ranges[k].lo) << ',' << format_real(gen->ranges[k].hi) << '\n';
        entry["generated_min"] = gen->ranges[k].lo;
        entry["generated_max"] = gen->ranges[k].hi;
      } else {
        out << ",\n";
      }
      ranges.push_back(entry);
    }
    write_atomic(dir / "ranges.csv", out.str());
    files.push_back("report/ranges.csv");
  }

  // Extra contour grids at the study's best parameters.
  json best = study.at("best");
  if (!best.is_null() && !f.empty_warning) {
    const auto base = best.at("params").get<std::vector<double>>();
    const RangeSummary study_ranges = summarize_ranges(gd);
    const Objective objective = directed_objective(model, cfg.environment.direction);
    for (const auto& [a, b] : cfg.output.contour_pairs) {
      const ContourGrid g = contour_grid(objective, model.space.index_of(a), model.space.index_of(b), study_ranges.ranges,
                                         cfg.bayesopt.resolution, base);
      const std::string name = "contour_" + a + "_" + b + ".csv";
      write_atomic(dir / name, grid_to_csv(g, a, b));
      files.push_back("report/" + name);
    }
  }

  json doc = {{"metrics", metrics},
              {"histogram", {{"bins", bins}, {"train", h_train}, {"generated", h_gen}}},
              {"generated", {{"n", gd.size()}, {"retained", f.data.size()}, {"retained_fraction", f.retained_fraction}}},
              {"ranges", ranges},
              {"best", best},
              {"files", files}};
  write_atomic(cfg.workspace / artifact::report, json_text(doc));
}

}  // namespace

Dataset load_workspace_dataset(const RunConfig& cfg) {
  return load_dataset((cfg.workspace / artifact::dataset).string(), cfg.space, cfg.data.outcome_column, cfg.task);
}

SurrogateModel load_workspace_model(const RunConfig& cfg) {
  SurrogateModel m = deserialize_model(read_text(cfg.workspace / artifact::model));
  if (!(m.space == cfg.space)) throw SchemaError("surrogate.model was trained on a different parameter space");
  return m;
}

GenEnvironment make_environment(const RunConfig& cfg, std::shared_ptr<const SurrogateModel> model) {
  return GenEnvironment(OutcomeContext::from_model(std::move(model)), cfg.environment,
                        module_seed(cfg.seed, SeedTag::environment));
}

void run_stage(Stage stage, const RunConfig& cfg, const StageOptions& options) {
  switch (stage) {
    case Stage::simulate: return stage_simulate(cfg);
    case Stage::train_surrogate: return stage_train_surrogate(cfg);
    case Stage::eval: return stage_eval(cfg, options);
    case Stage::train_agent: return stage_train_agent(cfg);
    case Stage::generate: return stage_generate(cfg);
    case Stage::optimize: return stage_optimize(cfg);
    case Stage::report: return stage_report(cfg);
    case Stage::pipeline:
      for (Stage s : {Stage::simulate, Stage::train_surrogate, Stage::eval, Stage::train_agent, Stage::generate,
                      Stage::optimize, Stage::report}) {
        run_stage(s, cfg, StageOptions{});
      }
      return;
  }
}

}  // namespace simgen
