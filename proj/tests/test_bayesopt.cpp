#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <numbers>

#include "simgen/bayesopt.hpp"
#include "support.hpp"

using namespace simgen;

TEST_SUITE("bayesopt") {
  TEST_CASE("expected improvement examples") {
    CHECK(expected_improvement(0.3, 0.0, 0.3) == 0.0);
    CHECK(expected_improvement(0.3, 1.0, 0.3) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-14));
    CHECK(expected_improvement(0.3, 1.0, 0.3) == doctest::Approx(0.39894).epsilon(1e-5));
    CHECK(expected_improvement(1.3, 1e-12, 0.3) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(expected_improvement(1.3, 0.0, 0.3) == doctest::Approx(1.0));
    CHECK(expected_improvement(-2.0, 0.0, 0.3) == 0.0);

    // Non-negative everywhere; closed form against the support normal_cdf.
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 10000; ++i) {
      const double mu = 3 * nd(rng), best = 3 * nd(rng), sigma = std::abs(nd(rng)) * 2;
      const double ei = expected_improvement(mu, sigma, best);
      CHECK(ei >= 0.0);
      const double z = (mu - best) / sigma;
      const double ref = (mu - best) * testing::normal_cdf(z) + sigma * std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
      CHECK(ei == doctest::Approx(std::max(ref, 0.0)).epsilon(1e-9).scale(1e-12));
    }
  }

  TEST_CASE("GP interpolates its observations") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int d : {1, 3, 8}) {
      const int n = 40;
      Eigen::MatrixXd x(n, d);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) x(i, k) = u(rng);
        y[i] = std::sin(3 * x(i, 0)) + (d > 1 ? x(i, 1) * x(i, 1) : 0.0);
      }
      const double noise = 1e-6;
      GaussianProcess gp(Eigen::VectorXd::Constant(d, 0.4), noise);
      gp.fit(x, y);
      for (int i = 0; i < n; ++i) {
        const std::vector<double> xi(x.row(i).begin(), x.row(i).end());
        const auto post = gp.predict(xi);
        CHECK(std::abs(post.mean - y[i]) <= 3 * std::sqrt(noise) + 1e-6);
        CHECK(post.variance >= 0.0);
      }
      // Far from data the posterior reverts to the prior: mean of y, variance of y.
      const std::vector<double> far(static_cast<std::size_t>(d), 50.0);
      const double ym = y.mean();
      const double yv = (y.array() - ym).square().mean();
      CHECK(gp.predict(far).mean == doctest::Approx(ym).epsilon(1e-6));
      CHECK(gp.predict(far).variance == doctest::Approx(yv).epsilon(1e-3));
    }
  }

  TEST_CASE("length-scale search improves the marginal likelihood") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd x(60, 2);
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) {
      x(i, 0) = u(rng);
      x(i, 1) = u(rng);
      y[i] = std::sin(8 * x(i, 0));  // second coordinate is irrelevant
    }
    const std::vector<double> grid = {0.03, 0.06, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0};
    const Eigen::VectorXd start = Eigen::VectorXd::Constant(2, 0.25);
    const auto ls = fit_length_scales(x, y, 1e-6, grid, start);
    GaussianProcess g0(start, 1e-6), g1(ls, 1e-6);
    g0.fit(x, y);
    g1.fit(x, y);
    CHECK(g1.log_marginal_likelihood() >= g0.log_marginal_likelihood());
    CHECK(ls[1] > ls[0]);
  }

  TEST_CASE("suggestions stay inside the ranges") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> dim_d(1, 4), extra_d(0, 8);
    BoOptions opt;
    opt.n_init = 3;
    opt.random_candidates = 64;
    opt.local_candidates = 16;
    opt.local_scale = 0.5;  // pushes perturbations against the bounds
    long checked = 0;
    for (int s = 0; s < 10000; ++s) {
      BOStudy study;
      study.seed = rng();
      study.n_init = opt.n_init;
      const int d = dim_d(rng);
      for (int k = 0; k < d; ++k) {
        const double lo = -10 + 20 * u(rng);
        study.ranges.push_back({lo, lo + 1e-3 + 5 * u(rng)});
        study.names.push_back("x" + std::to_string(k));
      }
      const int n = opt.n_init + extra_d(rng);
      for (int t = 0; t < n; ++t) {
        Trial tr;
        for (const auto& r : study.ranges) tr.params.push_back(r.lo + u(rng) * r.width());
        tr.value = u(rng);
        study.trials.push_back(tr);
        if (study.best_index < 0 || tr.value > study.trials[static_cast<std::size_t>(study.best_index)].value) {
          study.best_index = t;
        }
        study.incumbent.push_back(study.trials[static_cast<std::size_t>(study.best_index)].value);
      }
      BoState state;
      if (n >= opt.n_init) update_model(study, opt, state);
      const auto p = suggest_next(study, state, opt);
      REQUIRE(p.size() == static_cast<std::size_t>(d));
      for (int k = 0; k < d; ++k) {
        CHECK(p[static_cast<std::size_t>(k)] >= study.ranges[static_cast<std::size_t>(k)].lo);
        CHECK(p[static_cast<std::size_t>(k)] <= study.ranges[static_cast<std::size_t>(k)].hi);
      }
      // Deterministic for a given state.
      CHECK(suggest_next(study, state, opt) == p);
      ++checked;
    }
    CHECK(checked == 10000);
  }

  TEST_CASE("finds the maximum of a 1-D parabola") {
    const auto f = [](std::span<const double> x) { return -(x[0] - 0.3) * (x[0] - 0.3); };
    // Dense-grid oracle for the optimum location.
    double best_x = 0.0, best_v = -1e300;
    for (int k = 0; k <= 100000; ++k) {
      const double x = k / 100000.0;
      const double v = -(x - 0.3) * (x - 0.3);
      if (v > best_v) best_v = v, best_x = x;
    }
    const auto study = run_study(f, {{0.0, 1.0}}, 100, 5);
    CHECK(study.trials.size() == 100);
    CHECK(std::abs(study.best().params[0] - best_x) <= 0.05);
  }

  TEST_CASE("constant objective and failed trials") {
    const auto c = run_study([](std::span<const double>) { return 0.25; }, {{0, 1}, {-1, 1}}, 40, 2);
    for (double v : c.incumbent) CHECK(v == 0.25);
    CHECK(c.best().value == 0.25);
    CHECK(c.best_index == 0);

    const auto f = [](std::span<const double> x) {
      return x[0] < 0.4 ? std::numeric_limits<double>::quiet_NaN() : x[0] + x[1];
    };
    const auto s = run_study(f, {{0, 1}, {0, 1}}, 60, 3);
    REQUIRE(s.trials.size() == 60);
    int failed = 0;
    for (const auto& t : s.trials) {
      if (t.params[0] < 0.4) {
        CHECK(t.failed);
        CHECK(t.value == -std::numeric_limits<double>::infinity());
        ++failed;
      } else {
        CHECK_FALSE(t.failed);
      }
    }
    CHECK(failed > 0);
    for (std::size_t t = 1; t < s.incumbent.size(); ++t) CHECK(s.incumbent[t] >= s.incumbent[t - 1]);
    CHECK_FALSE(s.best().failed);
    CHECK(s.best().value == s.incumbent.back());

    CHECK_THROWS(run_study(f, {{0, 1}}, 0, 1));
    CHECK_THROWS(run_study(f, {{1, 0}}, 10, 1));
  }

  TEST_CASE("pure random phase equals an independent random-search oracle") {
    const std::vector<Interval> ranges = {{-2, 3}, {10, 11}, {0, 0.5}};
    const auto f = [](std::span<const double> x) { return -std::abs(x[0]) + x[1] - 3 * x[2]; };
    BoOptions opt;
    opt.n_init = 50;
    const std::uint64_t seed = 99;
    const auto study = run_study(f, ranges, 50, seed, opt);
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> p;
      for (const auto& r : ranges) p.push_back(std::min(r.hi, r.lo + u(rng) * (r.hi - r.lo)));
      const auto& tr = study.trials[static_cast<std::size_t>(t)];
      CHECK(tr.params == p);
      CHECK(tr.value == f(p));
      best = std::max(best, f(p));
      CHECK(study.incumbent[static_cast<std::size_t>(t)] == best);
    }
  }

  TEST_CASE("random_search picks the earliest best point") {
    const std::vector<Interval> ranges = {{0, 1}, {0, 1}};
    const auto f = [](std::span<const double> x) { return -(x[0] - 0.7) * (x[0] - 0.7) - (x[1] - 0.2) * (x[1] - 0.2); };
    const auto r = random_search(f, ranges, 20000, 3);
    CHECK(std::abs(r.params[0] - 0.7) < 0.02);
    CHECK(std::abs(r.params[1] - 0.2) < 0.02);
    CHECK(r.value == f(r.params));
    // A flat objective keeps the very first draw of chunk 0.
    const auto flat = random_search([](std::span<const double>) { return 1.0; }, ranges, 9000, 3);
    std::mt19937_64 rng(derive_seed(3, 0));
    CHECK(flat.params == uniform_point(ranges, rng));
  }

  TEST_CASE("contour grid") {
    const std::vector<Interval> ranges = {{0, 1}, {-2, 2}, {5, 6}};
    const std::vector<double> base = {0.5, 0.0, 5.5};
    const auto g = contour_grid([](std::span<const double>) { return 0.3; }, 0, 2, ranges, 50, base);
    CHECK(g.values.rows() == 50);
    CHECK(g.values.cols() == 50);
    CHECK(g.axis_i.size() == 50);
    CHECK(g.axis_i.front() == 0.0);
    CHECK(g.axis_i.back() == 1.0);
    CHECK(g.axis_j.front() == 5.0);
    CHECK(g.axis_j.back() == 6.0);
    CHECK((g.values.array() == 0.3).all());

    // Non-varied coordinates are held at the baseline.
    const auto h = contour_grid([](std::span<const double> x) { return 100 * x[0] + 10 * x[1] + x[2]; }, 0, 2, ranges, 5, base);
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) CHECK(h.values(a, b) == doctest::Approx(100 * h.axis_i[a] + h.axis_j[b]));
    }

    const auto one = [](std::span<const double>) { return 1.0; };
    CHECK_THROWS(contour_grid(one, 0, 0, ranges, 10, base));
    CHECK_THROWS(contour_grid(one, 0, 3, ranges, 10, base));
    CHECK_THROWS(contour_grid(one, 0, 1, ranges, 1, base));
    CHECK_THROWS(contour_grid(one, 0, 1, ranges, 10, {0.5, 0.0, 7.0}));

    const std::string csv = grid_to_csv(h, "p", "r");
    CHECK(csv.substr(0, csv.find('\n')) == "p,r,prediction");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
  }

  TEST_CASE("study JSON layout") {
    const auto f = [](std::span<const double> x) { return x[0] > 0.9 ? std::nan("") : x[0]; };
    BoOptions opt;
    opt.n_init = 5;
    auto s = run_study(f, {{0, 1}}, 12, 4, opt);
    s.names = {"x"};
    const auto j = nlohmann::json::parse(study_to_json(s));
    CHECK(j.at("n_trials") == 12);
    CHECK(j.at("trials").size() == 12);
    CHECK(j.at("ranges")[0].at("name") == "x");
    CHECK(j.at("best").at("trial") == s.best_index);
    for (std::size_t t = 0; t < 12; ++t) {
      const auto& jt = j.at("trials")[t];
      CHECK(jt.at("failed") == s.trials[t].failed);
      if (s.trials[t].failed) CHECK(jt.at("value").is_null());
    }
  }
}
