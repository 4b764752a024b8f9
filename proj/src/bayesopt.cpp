#include "simgen/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json_support.hpp"

namespace simgen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double to_unit(double v, const Interval& r) {
  const double w = r.width();
  return w > 0.0 ? (v - r.lo) / w : 0.5;
}

double from_unit(double u, const Interval& r) { return std::clamp(r.lo + u * r.width(), r.lo, r.hi); }

void check_ranges(const std::vector<Interval>& ranges) {
  if (ranges.empty()) throw Error("bayesopt: empty parameter ranges");
  for (const auto& r : ranges) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) throw Error("bayesopt: ranges must be finite with lo <= hi");
  }
}

}  // namespace

double expected_improvement(double mu, double sigma, double best) {
  if (sigma < 0.0) throw Error("expected_improvement: sigma must be >= 0");
  const double diff = mu - best;
  if (sigma == 0.0) return std::max(diff, 0.0);
  const double z = diff / sigma;
  return std::max(diff * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

GaussianProcess::GaussianProcess(Eigen::VectorXd length_scales, double noise)
    : length_(std::move(length_scales)), noise_(noise) {
  if (!(noise_ >= 0.0)) throw Error("GaussianProcess: noise must be >= 0");
  if ((length_.array() <= 0.0).any()) throw Error("GaussianProcess: length scales must be positive");
}

double GaussianProcess::kernel(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = (a[k] - b[k]) / length_[static_cast<Eigen::Index>(k)];
    s += d * d;
  }
  return std::exp(-0.5 * s);
}

void GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size() || x.rows() == 0) throw Error("GaussianProcess::fit: need matching non-empty inputs");
  if (x.cols() != length_.size()) throw Error("GaussianProcess::fit: input dimension mismatch");
  x_ = x;
  const auto n = x.rows();
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().mean();
  y_std_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean_) / y_std_;

  const Eigen::MatrixXd scaled = x_.array().rowwise() / length_.transpose().array();
  const Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
  Eigen::MatrixXd k = scaled * scaled.transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      k(i, j) = std::exp(-0.5 * std::max(sq[i] + sq[j] - 2.0 * k(i, j), 0.0));
    }
  }
  k.diagonal().array() += noise_;
  chol_.compute(k);
  if (chol_.info() != Eigen::Success) throw Error("GaussianProcess::fit: kernel matrix is not positive definite");
  alpha_ = chol_.solve(ys);
  const Eigen::MatrixXd& l = chol_.matrixLLT();
  lml_ = -0.5 * ys.dot(alpha_) - l.diagonal().array().log().sum() -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GaussianProcess::Posterior GaussianProcess::predict(std::span<const double> x) const {
  const auto n = x_.rows();
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x_.cols(); ++k) {
      const double d = (x[static_cast<std::size_t>(k)] - x_(i, k)) / length_[k];
      s += d * d;
    }
    ks[i] = std::exp(-0.5 * s);
  }
  Posterior p;
  p.mean = ks.dot(alpha_) * y_std_ + y_mean_;
  const Eigen::VectorXd v = chol_.matrixL().solve(ks);
  p.variance = std::max(1.0 - v.squaredNorm(), 0.0) * y_std_ * y_std_;
  return p;
}

void GaussianProcess::predict_batch(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& sd,
                                    Exec exec) const {
  const Eigen::Index m = x.rows();
  mean.resize(m);
  sd.resize(m);
#pragma omp parallel if (exec == Exec::parallel)
  {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
#pragma omp for schedule(static)
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index k = 0; k < x.cols(); ++k) row[static_cast<std::size_t>(k)] = x(r, k);
      const auto p = predict(row);
      mean[r] = p.mean;
      sd[r] = std::sqrt(p.variance);
    }
  }
}

Eigen::VectorXd fit_length_scales(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double noise,
                                  const std::vector<double>& grid, Eigen::VectorXd start, int sweeps) {
  auto score = [&](const Eigen::VectorXd& ls) {
    try {
      GaussianProcess gp(ls, noise);
      gp.fit(x, y);
      return gp.log_marginal_likelihood();
    } catch (const Error&) {
      return kNegInf;
    }
  };
  Eigen::VectorXd best = std::move(start);
  double best_score = score(best);
  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index d = 0; d < best.size(); ++d) {
      for (double g : grid) {
        if (g == best[d]) continue;
        Eigen::VectorXd trial = best;
        trial[d] = g;
        const double v = score(trial);
        if (v > best_score) {
          best_score = v;
          best = std::move(trial);
        }
      }
    }
  }
  return best;
}

const Trial& BOStudy::best() const {
  if (best_index < 0) throw Error("study has no successful trial");
  return trials.at(static_cast<std::size_t>(best_index));
}

std::vector<double> uniform_point(const std::vector<Interval>& ranges, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(ranges.size());
  for (std::size_t k = 0; k < ranges.size(); ++k) p[k] = from_unit(unit(rng), ranges[k]);
  return p;
}

void update_model(const BOStudy& study, const BoOptions& options, BoState& state) {
  std::vector<std::size_t> ok;
  for (std::size_t t = 0; t < study.trials.size(); ++t) {
    if (!study.trials[t].failed) ok.push_back(t);
  }
  if (ok.empty()) {
    state.fitted = false;
    return;
  }
  std::vector<std::size_t> chosen;
  const auto window = static_cast<std::size_t>(std::max(options.window, 2));
  if (ok.size() <= window) {
    chosen = ok;
  } else {
    std::vector<std::size_t> by_value = ok;
    std::stable_sort(by_value.begin(), by_value.end(),
                     [&](auto a, auto b) { return study.trials[a].value > study.trials[b].value; });
    std::vector<std::uint8_t> taken(study.trials.size(), 0);
    for (std::size_t k = 0; k < window / 2; ++k) {
      chosen.push_back(by_value[k]);
      taken[by_value[k]] = 1;
    }
    for (auto it = ok.rbegin(); it != ok.rend() && chosen.size() < window; ++it) {
      if (!taken[*it]) chosen.push_back(*it);
    }
    std::sort(chosen.begin(), chosen.end());
  }

  const auto dim = static_cast<Eigen::Index>(study.ranges.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(chosen.size()), dim);
  Eigen::VectorXd y(static_cast<Eigen::Index>(chosen.size()));
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const auto& trial = study.trials[chosen[r]];
    for (Eigen::Index k = 0; k < dim; ++k) {
      x(static_cast<Eigen::Index>(r), k) = to_unit(trial.params[static_cast<std::size_t>(k)], study.ranges[static_cast<std::size_t>(k)]);
    }
    y[static_cast<Eigen::Index>(r)] = trial.value;
  }

  const int t = static_cast<int>(study.trials.size());
  if (state.length_scales.size() != dim) state.length_scales = Eigen::VectorXd::Constant(dim, 0.25);
  if (state.last_refit < 0 || t - state.last_refit >= options.refit_every) {
    state.length_scales = fit_length_scales(x, y, options.noise, options.length_grid, state.length_scales);
    state.last_refit = t;
  }
  double noise = options.noise;
  for (int attempt = 0; attempt < 6; ++attempt) {
    try {
      state.gp = GaussianProcess(state.length_scales, noise);
      state.gp.fit(x, y);
      state.fitted = true;
      return;
    } catch (const Error&) {
      noise *= 10.0;
    }
  }
  state.fitted = false;
}

std::vector<double> suggest_next(const BOStudy& study, const BoState& state, const BoOptions& options) {
  check_ranges(study.ranges);
  const auto t = static_cast<std::uint64_t>(study.trials.size());
  std::mt19937_64 rng(derive_seed(study.seed, t));
  if (study.trials.size() < static_cast<std::size_t>(study.n_init) || !state.fitted || study.best_index < 0) {
    return uniform_point(study.ranges, rng);
  }
  const auto dim = static_cast<Eigen::Index>(study.ranges.size());
  const int n_random = std::max(options.random_candidates, 1);
  const int n_local = std::max(options.local_candidates, 0);
  Eigen::MatrixXd cand(n_random + n_local, dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < n_random; ++c) {
    for (Eigen::Index k = 0; k < dim; ++k) cand(c, k) = unit(rng);
  }
  const auto& incumbent = study.best();
  std::normal_distribution<double> normal(0.0, options.local_scale);
  for (int c = 0; c < n_local; ++c) {
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double u = to_unit(incumbent.params[static_cast<std::size_t>(k)], study.ranges[static_cast<std::size_t>(k)]);
      cand(n_random + c, k) = std::clamp(u + normal(rng), 0.0, 1.0);
    }
  }
  Eigen::VectorXd mean, sd;
  state.gp.predict_batch(cand, mean, sd, options.exec);
  Eigen::Index best_c = 0;
  double best_ei = -1.0;
  for (Eigen::Index c = 0; c < cand.rows(); ++c) {
    const double ei = expected_improvement(mean[c], sd[c], incumbent.value);
    if (ei > best_ei) {
      best_ei = ei;
      best_c = c;
    }
  }
  std::vector<double> p(static_cast<std::size_t>(dim));
  for (Eigen::Index k = 0; k < dim; ++k) {
    p[static_cast<std::size_t>(k)] = from_unit(cand(best_c, k), study.ranges[static_cast<std::size_t>(k)]);
  }
  return p;
}

BOStudy run_study(const Objective& objective, const std::vector<Interval>& ranges, int n_trials, std::uint64_t seed,
                  const BoOptions& options) {
  check_ranges(ranges);
  if (options.n_init < 1 || n_trials < options.n_init) throw Error("run_study: need n_trials >= n_init >= 1");
  BOStudy study;
  study.ranges = ranges;
  study.n_init = options.n_init;
  study.seed = seed;
  BoState state;
  double best = kNegInf;
  for (int t = 0; t < n_trials; ++t) {
    if (t >= study.n_init) update_model(study, options, state);
    Trial trial;
    trial.params = suggest_next(study, state, options);
    const double v = objective(trial.params);
    if (std::isfinite(v)) {
      trial.value = v;
    } else {
      trial.value = kNegInf;
      trial.failed = true;
    }
    if (!trial.failed && (study.best_index < 0 || trial.value > best)) {
      best = trial.value;
      study.best_index = t;
    }
    study.trials.push_back(std::move(trial));
    study.incumbent.push_back(best);
  }
  return study;
}

SearchResult random_search(const Objective& objective, const std::vector<Interval>& ranges, std::size_t n,
                           std::uint64_t seed, Exec exec) {
  check_ranges(ranges);
  const auto chunks = static_cast<long>((n + kSearchChunk - 1) / kSearchChunk);
  std::vector<SearchResult> per_chunk(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (long c = 0; c < chunks; ++c) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const std::size_t begin = static_cast<std::size_t>(c) * kSearchChunk;
    const std::size_t end = std::min(n, begin + kSearchChunk);
    SearchResult local;
    for (std::size_t i = begin; i < end; ++i) {
      auto p = uniform_point(ranges, rng);
      const double v = objective(p);
      if (std::isfinite(v) && v > local.value) {
        local.value = v;
        local.params = std::move(p);
      }
    }
    per_chunk[static_cast<std::size_t>(c)] = std::move(local);
  }
  SearchResult best;
  for (auto& r : per_chunk) {
    if (!r.params.empty() && r.value > best.value) best = std::move(r);
  }
  return best;
}

ContourGrid contour_grid(const Objective& predict, std::size_t i, std::size_t j, const std::vector<Interval>& ranges,
                         int resolution, const std::vector<double>& baseline, Exec exec) {
  check_ranges(ranges);
  if (i == j) throw Error("contour_grid: the two parameters must differ");
  if (i >= ranges.size() || j >= ranges.size()) throw Error("contour_grid: parameter index out of range");
  if (resolution < 2) throw Error("contour_grid: resolution must be >= 2");
  if (baseline.size() != ranges.size()) throw Error("contour_grid: baseline has wrong dimension");
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    if (!ranges[k].contains(baseline[k])) {
      throw Error("contour_grid: baseline coordinate " + std::to_string(k) + " lies outside the study ranges");
    }
  }
  ContourGrid g;
  g.i = i;
  g.j = j;
  g.resolution = resolution;
  g.baseline = baseline;
  auto axis = [&](const Interval& r) {
    std::vector<double> a(static_cast<std::size_t>(resolution));
    for (int k = 0; k < resolution; ++k) {
      a[static_cast<std::size_t>(k)] =
          k + 1 == resolution ? r.hi : r.lo + r.width() * static_cast<double>(k) / static_cast<double>(resolution - 1);
    }
    return a;
  };
  g.axis_i = axis(ranges[i]);
  g.axis_j = axis(ranges[j]);
  g.values.resize(resolution, resolution);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (int a = 0; a < resolution; ++a) {
    std::vector<double> p = baseline;
    p[i] = g.axis_i[static_cast<std::size_t>(a)];
    for (int b = 0; b < resolution; ++b) {
      p[j] = g.axis_j[static_cast<std::size_t>(b)];
      g.values(a, b) = predict(p);
    }
  }
  return g;
}

std::string study_to_json(const BOStudy& s) {
  using detail::json;
  json ranges = json::array();
  for (std::size_t k = 0; k < s.ranges.size(); ++k) {
    ranges.push_back({{"name", k < s.names.size() ? s.names[k] : std::to_string(k)}, {"lo", s.ranges[k].lo}, {"hi", s.ranges[k].hi}});
  }
  json trials = json::array();
  for (const auto& t : s.trials) {
    json jt = {{"params", t.params}, {"failed", t.failed}};
    jt["value"] = t.failed ? json(nullptr) : json(t.value);
    trials.push_back(jt);
  }
  json incumbent = json::array();
  for (double v : s.incumbent) incumbent.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  json doc = {{"n_init", s.n_init},   {"seed", s.seed},     {"n_trials", s.trials.size()},
              {"ranges", ranges},     {"trials", trials},   {"incumbent", incumbent}};
  if (s.best_index >= 0) {
    doc["best"] = {{"trial", s.best_index}, {"params", s.best().params}, {"value", s.best().value}};
  } else {
    doc["best"] = nullptr;
  }
  return doc.dump(1) + "\n";
}

std::string grid_to_csv(const ContourGrid& g, const std::string& name_i, const std::string& name_j) {
  std::ostringstream out;
  out << name_i << ',' << name_j << ",prediction\n";
  for (int a = 0; a < g.resolution; ++a) {
    for (int b = 0; b < g.resolution; ++b) {
      out << format_real(g.axis_i[static_cast<std::size_t>(a)]) << ',' << format_real(g.axis_j[static_cast<std::size_t>(b)])
          << ',' << format_real(g.values(a, b)) << '\n';
    }
  }
  return out.str();
}

}  // namespace simgen
