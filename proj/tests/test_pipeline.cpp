#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>

#include "simgen/pipeline.hpp"
#include "support.hpp"

using namespace simgen;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SIMGEN_SOURCE_DIR) / "configs";

std::string quoted(const fs::path& p) { return nlohmann::json(p.string()).dump(); }

/// The material toy config, shrunk so a full run takes a fraction of a second.
std::vector<std::string> small_overrides(const fs::path& ws) {
  return {"workspace=" + quoted(ws),  "surrogate.n_trees=20", "ppo.rollout_size=256", "ppo.total_steps=1024",
          "ppo.minibatch=64",         "ppo.hidden=[8]",       "generation.n=700",     "bayesopt.trials=25",
          "bayesopt.n_init=10",       "bayesopt.resolution=6"};
}

std::string slurp(const fs::path& p) { return read_text(p); }

std::vector<std::string> artifact_list() {
  return {artifact::dataset, artifact::split,     artifact::model, artifact::metrics, artifact::policy,
          artifact::curve,   artifact::generated, artifact::summary, artifact::study, artifact::grid,
          artifact::report};
}

std::string minimal_config() {
  return R"({
    "seed": 1, "workspace": "w",
    "data": {"kind": "rupture"},
    "surrogate": {}, "environment": {}, "ppo": {"total_steps": 4096},
    "generation": {}, "bayesopt": {}, "output": {}
  })";
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SIMGEN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("strict config parsing") {
    const auto cfg = parse_run_config(minimal_config(), ".");
    CHECK(cfg.seed == 1);
    CHECK(cfg.data.n == 2000);
    CHECK(cfg.ppo.total_steps == 4096);
    CHECK(cfg.bayesopt.trials == 1000);

    auto with = [](const std::string& assignment) {
      std::string text = minimal_config();
      apply_override(text, assignment);
      return text;
    };
    testing::TempDir tmp("config");
    auto message = [&tmp](const std::string& text) {
      try {
        // load_run_config also resolves the space and checks names against it.
        std::ofstream(tmp.path / "c.json") << text;
        (void)load_run_config(tmp.path / "c.json", {});
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message(with("ppo.clip=0.3")).find("ppo.clip") != std::string::npos);
    CHECK(message(with("extra=1")).find("extra") != std::string::npos);
    CHECK(message(with("data.n=\"many\"")).find("data.n") != std::string::npos);
    CHECK(message(with("surrogate.monotone={\"nope\": 1}")).find("nope") != std::string::npos);
    CHECK(message(with("bayesopt.contour=[\"height\",\"height\"]")) != "no error");
    CHECK(message(with("data.space_file=\"/does/not/exist.json\"")).find("exist") != std::string::npos);

    std::string missing = minimal_config();
    auto doc = nlohmann::json::parse(missing);
    doc.erase("seed");
    CHECK(message(doc.dump()).find("seed") != std::string::npos);
    doc = nlohmann::json::parse(missing);
    doc["ppo"].erase("total_steps");
    CHECK(message(doc.dump()).find("ppo.total_steps") != std::string::npos);
    doc = nlohmann::json::parse(missing);
    doc.erase("output");
    CHECK(message(doc.dump()).find("output") != std::string::npos);

    // Overrides: JSON values, plain strings, nested paths.
    CHECK(parse_run_config(with("seed=77"), ".").seed == 77);
    CHECK(parse_run_config(with("workspace=elsewhere"), ".").workspace == fs::path("elsewhere"));
    CHECK(parse_run_config(with("ppo.hidden=[32]"), ".").ppo.hidden == std::vector<int>{32});
    CHECK_THROWS_AS(with("novalue"), ConfigError);
    CHECK(message(minimal_config()) == "no error");
    std::ofstream(tmp.path / "c.json") << minimal_config();
    const auto loaded = load_run_config(tmp.path / "c.json", {"ppo.entropy_coef=0.5"});
    CHECK(loaded.space.size() == 8);
    CHECK(loaded.task == Task::binary);
    CHECK(loaded.ppo.entropy_coef == 0.5);

    CHECK(module_seed(5, SeedTag::ppo) == (5 ^ static_cast<std::uint64_t>(SeedTag::ppo)));
    CHECK(module_seed(5, SeedTag::ppo) != module_seed(5, SeedTag::generate));
  }

  TEST_CASE("bundled configs load") {
    const auto r = load_run_config(kConfigs / "rupture.json", {});
    CHECK(r.bayesopt.trials == 1000);
    CHECK(r.generation.n == 5000);
    CHECK(r.data.n == 2000);
    const auto m = load_run_config(kConfigs / "material.json", {});
    CHECK(m.task == Task::regression);
    CHECK(m.space.size() == 7);
    CHECK_THROWS_AS(load_run_config(kConfigs / "absent.json", {}), Error);
  }

  TEST_CASE("missing artifacts are all named") {
    testing::TempDir tmp("empty");
    const auto cfg = load_run_config(kConfigs / "material.json", {"workspace=" + quoted(tmp.path)});
    try {
      run_stage(Stage::report, cfg);
      FAIL("report on an empty workspace must fail");
    } catch (const SchemaError& e) {
      const std::string msg = e.what();
      for (const auto& name : artifact_list()) {
        if (name == std::string(artifact::report)) continue;
        CHECK_MESSAGE(msg.find(name) != std::string::npos, name);
      }
    }
    CHECK_THROWS_AS(run_stage(Stage::train_agent, cfg), SchemaError);
    CHECK_THROWS_AS(run_stage(Stage::eval, cfg), SchemaError);
  }

  TEST_CASE("pipeline equals the stages run in order, byte for byte") {
    testing::TempDir a("stages"), b("pipeline"), c("rerun");
    const auto path = kConfigs / "material.json";
    const auto ca = load_run_config(path, small_overrides(a.path));
    for (Stage s : {Stage::simulate, Stage::train_surrogate, Stage::eval, Stage::train_agent, Stage::generate,
                    Stage::optimize, Stage::report}) {
      run_stage(s, ca);
    }
    run_stage(Stage::pipeline, load_run_config(path, small_overrides(b.path)));
    run_stage(Stage::pipeline, load_run_config(path, small_overrides(c.path)));
    for (const auto& name : artifact_list()) {
      CAPTURE(name);
      REQUIRE(fs::exists(a.path / name));
      CHECK(slurp(a.path / name) == slurp(b.path / name));
      CHECK(slurp(b.path / name) == slurp(c.path / name));
    }
    for (const auto& entry : fs::directory_iterator(a.path / artifact::report_dir)) {
      CAPTURE(entry.path().filename().string());
      CHECK(slurp(entry.path()) == slurp(b.path / artifact::report_dir / entry.path().filename()));
    }

    const auto metrics = nlohmann::json::parse(slurp(a.path / artifact::metrics));
    CHECK(metrics.contains("r2"));
    const auto summary = nlohmann::json::parse(slurp(a.path / artifact::summary));
    CHECK(summary.at("n") == 700);
    long total = 0;
    for (long h : summary.at("histogram").at("counts").get<std::vector<long>>()) total += h;
    CHECK(total == summary.at("retained").get<long>());
    const auto generated = slurp(a.path / artifact::generated);
    CHECK(std::count(generated.begin(), generated.end(), '\n') == 701);
    const auto study = nlohmann::json::parse(slurp(a.path / artifact::study));
    CHECK(study.at("trials").size() == 25);
    const auto grid = slurp(a.path / artifact::grid);
    CHECK(std::count(grid.begin(), grid.end(), '\n') == 37);
    CHECK(fs::exists(a.path / artifact::report_dir / "histogram.csv"));
    CHECK(fs::exists(a.path / artifact::report_dir / "scatter_radius_depth.csv"));
    CHECK(fs::exists(a.path / artifact::report_dir / "contour_t2_radius.csv"));
    CHECK(fs::exists(a.path / artifact::report_dir / "ranges.csv"));
    const auto scatter = slurp(a.path / artifact::report_dir / "scatter_radius_depth.csv");
    CHECK(scatter.substr(0, scatter.find('\n')) == "radius,depth,source");

    // No temporaries left behind by the atomic writes.
    for (const auto& entry : fs::directory_iterator(a.path)) {
      CHECK(entry.path().filename().string().find(".tmp") == std::string::npos);
    }

    // A different seed changes the data.
    testing::TempDir d("seed");
    auto o = small_overrides(d.path);
    o.push_back("seed=8");
    run_stage(Stage::simulate, load_run_config(path, o));
    CHECK(slurp(d.path / artifact::dataset) != slurp(a.path / artifact::dataset));
  }

  TEST_CASE("binary eval report and ingesting a dataset file") {
    testing::TempDir a("binary");
    const auto cfg = load_run_config(kConfigs / "rupture.json",
                                     {"workspace=" + quoted(a.path), "data.n=300", "surrogate.n_trees=20"});
    run_stage(Stage::simulate, cfg);
    run_stage(Stage::train_surrogate, cfg);
    run_stage(Stage::eval, cfg);
    const auto m = nlohmann::json::parse(slurp(a.path / artifact::metrics));
    CHECK(m.contains("confusion"));
    CHECK(m.contains("roc_auc"));
    CHECK(m.contains("macro_f1"));
    run_stage(Stage::eval, cfg, {"train"});
    CHECK(fs::exists(a.path / "metrics_train.json"));
    CHECK_THROWS(run_stage(Stage::eval, cfg, {"validation"}));  // empty split

    // Re-ingest the written dataset through dataset_file.
    testing::TempDir b("ingest");
    const auto c2 = load_run_config(
        kConfigs / "rupture.json",
        {"workspace=" + quoted(b.path), "data.dataset_file=" + quoted(a.path / artifact::dataset),
         "data.task=\"binary\"", "surrogate.n_trees=20"});
    run_stage(Stage::simulate, c2);
    CHECK(slurp(b.path / artifact::dataset) == slurp(a.path / artifact::dataset));
  }

  TEST_CASE("command line") {
    testing::TempDir a("cli");
    const auto log = a.path / "log.txt";
    const std::string base = "--config " + (kConfigs / "material.json").string() + " --workspace " + (a.path / "ws").string();
    const std::string small = " --set surrogate.n_trees=10 --set ppo.rollout_size=256 --set ppo.total_steps=512"
                              " --set ppo.hidden=[8]";
    CHECK(run_cli(base + small + " simulate --n 40", log) == 0);
    CHECK(run_cli(base + small + " train-surrogate", log) == 0);
    CHECK(run_cli(base + small + " eval --split test", log) == 0);
    CHECK(run_cli(base + small + " train-agent", log) == 0);
    CHECK(run_cli(base + small + " generate --n 50", log) == 0);
    const auto gen = slurp(a.path / "ws" / artifact::generated);
    CHECK(std::count(gen.begin(), gen.end(), '\n') == 51);
    CHECK(run_cli(base + small + " optimize --trials 22", log) == 0);
    CHECK(nlohmann::json::parse(slurp(a.path / "ws" / artifact::study)).at("trials").size() == 22);
    CHECK(run_cli(base + small + " report", log) == 0);

    CHECK(run_cli(base + " --set ppo.bogus=1 simulate", log) != 0);
    CHECK(slurp(log).find("ppo.bogus") != std::string::npos);
    CHECK(slurp(log).find("simgen: error:") != std::string::npos);

    CHECK(run_cli("--config " + (kConfigs / "material.json").string() + " --workspace " +
                      (a.path / "empty").string() + " report",
                  log) != 0);
    CHECK(slurp(log).find(artifact::model) != std::string::npos);

    CHECK(run_cli(base + " frobnicate", log) != 0);
    CHECK(run_cli(base + " simulate --kind nope", log) != 0);
  }
}
