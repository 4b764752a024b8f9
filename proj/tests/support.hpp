#pragma once

// Shared fixtures and independent reference implementations for the tests.
// The oracles here deliberately avoid the library's own code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "simgen/gen_env.hpp"
#include "simgen/ppo.hpp"

namespace testing {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("simgen_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};


struct SplitRef {
  double threshold;
  long double gain;
};

/// Brute force: every midpoint between distinct values, each side partitioned
/// by a direct pass over the rows, sums in long double.
inline std::optional<SplitRef> exhaustive_split(std::span<const double> x, std::span<const double> g,
                                                std::span<const double> h, int min_leaf) {
  std::vector<double> values(x.begin(), x.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  long double G = 0, H = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    G += g[i];
    H += h[i];
  }
  std::optional<SplitRef> best;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    double t = 0.5 * (values[k] + values[k + 1]);
    if (!(t < values[k + 1])) t = values[k];
    long double gl = 0, hl = 0;
    int nl = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] <= t) {
        gl += g[i];
        hl += h[i];
        ++nl;
      }
    }
    const int nr = static_cast<int>(x.size()) - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    const long double gr = G - gl, hr = H - hl;
    if (hl < 1e-12L || hr < 1e-12L) continue;
    const long double gain = gl * gl / hl + gr * gr / hr - G * G / H;
    if (!best || gain > best->gain) best = SplitRef{t, gain};
  }
  return best;
}

/// AUC by counting all positive/negative pairs.
inline double pairwise_auc(std::span<const double> s, std::span<const double> y) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / static_cast<double>(pairs);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// One-sample Kolmogorov-Smirnov statistic against the standard normal.
inline double ks_statistic(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = normal_cdf(v[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value at alpha = 0.01.
inline double ks_critical_01(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

/// Asymptotic KS critical value, c(alpha) = sqrt(-ln(alpha/2)/2), for any alpha.
inline double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(0.5 * alpha)) / std::sqrt(static_cast<double>(n));
}

/// Two-parameter space (a in [0,10] positive, b in [-5,5] unconstrained)
/// with a stub predictor.
inline simgen::OutcomeContext stub_context(std::function<double(std::span<const double>)> f,
                                           simgen::Task task = simgen::Task::binary) {
  using namespace simgen;
  OutcomeContext ctx;
  ctx.space = ParameterSpace({{"a", "m", 0.0, 10.0, Plausibility::positive}, {"b", "", -5.0, 5.0, Plausibility::unconstrained}});
  ctx.scaling = {{5.0, 0.0}, {2.0, 2.0}};
  ctx.train_ranges = {{1.0, 9.0}, {-4.0, 4.0}};
  ctx.task = task;
  ctx.outcome_range = {0.0, 1.0};
  ctx.predict_raw = std::move(f);
  return ctx;
}

/// Central-difference check (h = 1e-5) of the full PPO objective on one random
/// small network (dim <= 3, width <= 8) and a batch mixing clipped and
/// unclipped samples. Returns the worst per-parameter relative error.
inline double ppo_gradient_check(std::mt19937_64& rng) {
  using namespace simgen;
  std::uniform_int_distribution<int> dim_d(1, 3), width_d(1, 8), depth_d(1, 2);
  std::normal_distribution<double> nd;
  const int dim = dim_d(rng);
  std::vector<int> hidden(static_cast<std::size_t>(depth_d(rng)));
  for (auto& w : hidden) w = width_d(rng);
  auto p = make_policy(dim, hidden, 0.3 * nd(rng), rng);
  auto v = make_value(dim, hidden, rng);
  // Randomize every parameter so biases and log_std are exercised too.
  Eigen::VectorXd theta = pack_parameters(p, v);
  for (auto& x : theta) x = 0.5 * nd(rng);
  unpack_parameters(theta, p, v);

  const int n = 24;
  RolloutBatch b;
  b.states.resize(dim, n);
  b.actions.resize(dim, n);
  for (auto& x : b.states.reshaped()) x = nd(rng);
  for (auto& x : b.actions.reshaped()) x = nd(rng);
  b.log_probs.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  b.rewards = Eigen::VectorXd::Zero(n);
  b.values = Eigen::VectorXd::Zero(n);
  b.dones.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> s(b.states.col(i).data(), b.states.col(i).data() + dim);
    const std::vector<double> a(b.actions.col(i).data(), b.actions.col(i).data() + dim);
    b.log_probs[i] = log_prob(p, s, a) + 0.3 * nd(rng);
    b.advantages[i] = nd(rng);
    b.returns[i] = nd(rng);
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.05;

  Eigen::VectorXd grad;
  ppo_loss(p, v, b, {}, cfg, &grad);
  if (grad.size() != theta.size()) return 1e300;
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    auto pp = p;
    auto vp = v;
    unpack_parameters(tp, pp, vp);
    const double fp = ppo_loss(pp, vp, b, {}, cfg).total;
    unpack_parameters(tm, pp, vp);
    const double fm = ppo_loss(pp, vp, b, {}, cfg).total;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6}));
  }
  return worst;
}

}  // namespace testing
