#include <doctest.h>

#include "simgen/metrics.hpp"
#include "simgen/oracle.hpp"
#include "simgen/surrogate.hpp"
#include "support.hpp"

using namespace simgen;

namespace {

Dataset line_data(std::vector<double> x, std::vector<double> y, Task task) {
  const ParameterSpace space({{"x", "", -1e9, 1e9, Plausibility::unconstrained}});
  Eigen::MatrixXd rows = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return make_dataset(space, rows, Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())), task);
}

double at(const SurrogateModel& m, double x) { return m.predict_raw(std::span<const double>(&x, 1)); }

}  // namespace

TEST_SUITE("surrogate") {
  TEST_CASE("four-point regression stump") {
    GbdtConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 1;
    cfg.learning_rate = 1.0;
    cfg.min_samples_leaf = 1;
    const auto m = fit(line_data({1, 2, 3, 4}, {0, 0, 1, 1}, Task::regression), cfg, Task::regression);
    CHECK(at(m, 1) == 0.0);
    CHECK(at(m, 2) == 0.0);
    CHECK(at(m, 3) == 1.0);
    CHECK(at(m, 4) == 1.0);
    CHECK(at(m, 2.4) == 0.0);
    CHECK(at(m, 2.6) == 1.0);
    REQUIRE(m.trees.size() == 1);
    CHECK(m.trees[0].nodes[0].threshold == 2.5);
  }

  TEST_CASE("constant regression target") {
    const auto m = fit(line_data({1, 2, 3, 4, 5, 6}, {3.5, 3.5, 3.5, 3.5, 3.5, 3.5}, Task::regression), {}, Task::regression);
    for (double x : {-100.0, 0.0, 2.5, 1e6}) CHECK(at(m, x) == 3.5);
  }

  TEST_CASE("empty ensembles") {
    SurrogateModel m;
    m.space = ParameterSpace({{"x", "", -1, 1, Plausibility::unconstrained}});
    m.feature_count = 1;
    m.task = Task::regression;
    m.base_score = 0.75;
    const double x = 0.3;
    CHECK(m.predict(std::span<const double>(&x, 1)) == 0.75);
    m.task = Task::binary;
    m.base_score = std::log(0.5 / 0.5);
    CHECK(m.predict(std::span<const double>(&x, 1)) == 0.5);
    const double two[2] = {1, 2};
    CHECK_THROWS_AS((void)m.predict(std::span<const double>(two, 2)), Error);
  }

  TEST_CASE("fit errors") {
    CHECK_THROWS_AS((void)fit(line_data({1, 2, 3}, {1, 1, 1}, Task::binary), {}, Task::binary), Error);
    GbdtConfig cfg;
    cfg.n_trees = 0;
    CHECK_THROWS_AS((void)fit(line_data({1, 2, 3}, {0, 1, 1}, Task::binary), cfg, Task::binary), Error);
    cfg = {};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("best_split examples") {
    const double x[4] = {1, 2, 3, 4};
    const double g[4] = {-0.5, -0.5, 0.5, 0.5};
    const double h[4] = {1, 1, 1, 1};
    const auto s = best_split(x, g, h, 1);
    REQUIRE(s);
    CHECK(s->threshold == 2.5);
    CHECK(s->gain == doctest::Approx(1.0));
    const double same[4] = {2, 2, 2, 2};
    CHECK_FALSE(best_split(same, g, h, 1));
    CHECK_FALSE(best_split(x, g, h, 3));
  }

  TEST_CASE("best_split matches the exhaustive oracle") {
    for (int seed = 0; seed < 200; ++seed) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919u + 1);
      std::uniform_int_distribution<int> n_dist(2, 200);
      const int n = n_dist(rng);
      std::vector<double> x(static_cast<std::size_t>(n)), g(x.size()), h(x.size());
      std::normal_distribution<double> nd;
      std::uniform_real_distribution<double> ud(0.05, 1.0);
      const bool discrete = seed % 3 == 0;  // many ties in the feature
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = discrete ? std::floor(ud(rng) * 8) : nd(rng);
        g[i] = nd(rng);
        h[i] = seed % 2 ? 1.0 : ud(rng);
      }
      const int min_leaf = 1 + seed % 6;
      const auto got = best_split(x, g, h, min_leaf);
      const auto want = testing::exhaustive_split(x, g, h, min_leaf);
      REQUIRE(got.has_value() == want.has_value());
      if (!got) continue;
      CHECK(got->threshold == want->threshold);
      CHECK(std::abs(got->gain - static_cast<double>(want->gain)) <= 1e-12 * std::max(1.0, std::abs(got->gain)));
    }
  }

  TEST_CASE("toy rupture surrogate") {
    const auto ds = oracle::synth_dataset(oracle::Kind::rupture, 2000, 7);
    const auto sp = split_dataset(ds, {0.8, 0.0, 0.2}, 11);
    std::vector<double> trace;
    const auto m = fit(sp.subset(SplitTag::train), {}, Task::binary, &trace);
    REQUIRE(trace.size() == 201);
    for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
    const auto metrics = evaluate_binary(m, sp.subset(SplitTag::test));
    CHECK(*metrics.roc_auc >= 0.85);

    // Tree invariants.
    for (const auto& t : m.trees) {
      CHECK(t.depth() <= 4);
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) continue;
        CHECK(n.feature < static_cast<int>(m.feature_count));
        CHECK(std::isfinite(n.threshold));
        CHECK(n.left > 0);
        CHECK(n.right > 0);
      }
    }
    // Far outside the training box predictions stay probabilities.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> wild(-1e6, 1e6);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> p(8);
      for (auto& v : p) v = wild(rng);
      const double y = m.predict_raw(p);
      CHECK(y >= 0.0);
      CHECK(y <= 1.0);
    }
  }

  TEST_CASE("squared loss is non-increasing on the material oracle") {
    const auto ds = oracle::synth_dataset(oracle::Kind::material, 300, 2);
    std::vector<double> trace;
    GbdtConfig cfg;
    cfg.subsample = 0.7;
    cfg.seed = 3;
    (void)fit(ds, cfg, Task::regression, &trace);
    for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
  }

  TEST_CASE("monotone constraints hold along every sweep") {
    const auto ds = oracle::synth_dataset(oracle::Kind::rupture, 1500, 13);
    GbdtConfig cfg;
    cfg.monotone = {{"height", -1}, {"width", -1}, {"dc", -1}, {"sigma_xy", 1}};
    cfg.ignore = {"width_over_height"};
    const auto m = fit(ds, cfg, Task::binary);
    const auto box = oracle::default_box(oracle::Kind::rupture);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> p(8);
      for (std::size_t k = 0; k < 8; ++k) p[k] = std::uniform_real_distribution<double>(box[k].lo, box[k].hi)(rng);
      for (auto [idx, sign] : {std::pair{7, -1}, {6, -1}, {5, -1}, {2, 1}}) {
        double prev = std::numeric_limits<double>::quiet_NaN();
        for (int s = 0; s <= 40; ++s) {
          p[static_cast<std::size_t>(idx)] = box[static_cast<std::size_t>(idx)].lo + box[static_cast<std::size_t>(idx)].width() * s / 40.0;
          const double y = m.predict_raw(p);
          if (s > 0) CHECK(sign * (y - prev) >= 0.0);
          prev = y;
        }
      }
    }
    // Ignored features never appear in a split.
    const int ignored = static_cast<int>(std::find(m.feature_names.begin(), m.feature_names.end(), "width_over_height") -
                                         m.feature_names.begin());
    for (const auto& t : m.trees)
      for (const auto& n : t.nodes) CHECK(n.feature != ignored);
  }

  TEST_CASE("serialization is deterministic and exact") {
    const auto ds = oracle::synth_dataset(oracle::Kind::rupture, 400, 8);
    GbdtConfig cfg;
    cfg.n_trees = 30;
    cfg.subsample = 0.8;
    cfg.seed = 99;
    const auto a = fit(ds, cfg, Task::binary);
    const auto b = fit(ds, cfg, Task::binary);
    const std::string text = serialize_model(a);
    CHECK(text == serialize_model(b));
    const auto back = deserialize_model(text);
    CHECK(serialize_model(back) == text);
    CHECK(back.predict_raw(ds.rows, Exec::serial) == a.predict_raw(ds.rows, Exec::serial));
    CHECK_THROWS_AS((void)deserialize_model("{\"format\":\"other\"}"), Error);
    CHECK_THROWS_AS((void)deserialize_model("not json"), Error);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("paper confusion anchor") {
    const Confusion c{100, 239, 33, 28};
    // Per-class F1 by hand: 200/261 and 478/539.
    CHECK(macro_f1(c) == doctest::Approx(0.5 * (200.0 / 261.0 + 478.0 / 539.0)).epsilon(1e-15));
    CHECK(std::abs(macro_f1(c) - 0.8266) < 1e-4);
    CHECK(accuracy(c) == 0.8475);

    // Scores that reproduce the confusion through evaluate's threshold.
    std::vector<double> s, y;
    auto add = [&](int n, double score, double label) {
      for (int i = 0; i < n; ++i) {
        s.push_back(score);
        y.push_back(label);
      }
    };
    add(100, 0.9, 1);
    add(239, 0.1, 0);
    add(33, 0.6, 0);
    add(28, 0.4, 1);
    const auto m = binary_metrics(s, y);
    CHECK(m.confusion->tp == 100);
    CHECK(m.confusion->fp == 33);
    CHECK(*m.macro_f1 == macro_f1(c));
    CHECK(*m.accuracy == 0.8475);
  }

  TEST_CASE("perfect and single-class") {
    const std::vector<double> s{0.1, 0.2, 0.8, 0.9}, y{0, 0, 1, 1};
    const auto m = binary_metrics(s, y);
    CHECK(*m.roc_auc == 1.0);
    CHECK(*m.macro_f1 == 1.0);
    const std::vector<double> ones{1, 1, 1, 1};
    const auto m1 = binary_metrics(s, ones);
    CHECK_FALSE(m1.roc_auc);
    CHECK(m1.errors.size() == 1);
    CHECK(m1.accuracy);
  }

  TEST_CASE("AUC against pairwise counting and monotone transforms") {
    for (int seed = 0; seed < 30; ++seed) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
      std::vector<double> s(150), y(150);
      for (std::size_t i = 0; i < s.size(); ++i) {
        y[i] = (rng() % 3 == 0) ? 1.0 : 0.0;
        s[i] = std::floor(std::uniform_real_distribution<double>(0, 20)(rng)) / 10.0 - 1.0 + 0.3 * y[i];
      }
      y[0] = 1;
      y[1] = 0;
      const double a = roc_auc(s, y);
      CHECK(a == doctest::Approx(testing::pairwise_auc(s, y)).epsilon(1e-12));
      std::vector<double> t(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) t[i] = s[i] * s[i] * s[i] + s[i];
      CHECK(std::abs(roc_auc(t, y) - a) < 1e-12);
    }
  }

  TEST_CASE("regression metrics") {
    const std::vector<double> y{1, 2, 3, 4};
    auto m = regression_metrics(y, y);
    CHECK(*m.r2 == 1.0);
    CHECK(*m.mse == 0.0);
    CHECK(*m.mae == 0.0);
    const std::vector<double> mean(4, 2.5);
    m = regression_metrics(mean, y);
    CHECK(*m.r2 == 0.0);
    const std::vector<double> flat(4, 1.0);
    m = regression_metrics(y, flat);
    CHECK_FALSE(m.r2);
    CHECK(m.mse);
    CHECK(m.errors.size() == 1);
    // The paper's pair is consistent within rounding.
    CHECK(std::abs(std::sqrt(0.0030) - 0.0550) < 3e-4);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> p(30), t(30);
      for (std::size_t i = 0; i < 30; ++i) {
        p[i] = std::normal_distribution<double>()(rng);
        t[i] = std::normal_distribution<double>()(rng);
      }
      const auto r = regression_metrics(p, t);
      CHECK(std::abs(*r.rmse - std::sqrt(*r.mse)) <= 1e-12);
      CHECK(std::abs(*r.rmse * *r.rmse - *r.mse) <= 1e-12);
    }
  }

  TEST_CASE("macro F1 is a probability") {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 1000; ++k) {
      const Confusion c{static_cast<long>(rng() % 50), static_cast<long>(rng() % 50), static_cast<long>(rng() % 50),
                        static_cast<long>(rng() % 50)};
      const double f = macro_f1(c);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
}
