#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "simgen/common.hpp"

namespace simgen {

using Objective = std::function<double(std::span<const double>)>;

/// EI for maximization: (mu-best)Phi(z) + sigma phi(z), z = (mu-best)/sigma.
/// sigma = 0 gives max(mu-best, 0).
double expected_improvement(double mu, double sigma, double best);

/// Zero-mean GP with a squared-exponential ARD kernel (unit signal variance)
/// on standardized targets.
class GaussianProcess {
 public:
  GaussianProcess() = default;
  GaussianProcess(Eigen::VectorXd length_scales, double noise);

  /// x: n x d inputs, y: n targets. Throws if the kernel matrix cannot be
  /// factorized.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

  struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
  };

  /// Posterior in the original target units; variance is clamped at 0.
  [[nodiscard]] Posterior predict(std::span<const double> x) const;

  /// Rows of `x` in parallel (bit-identical to the serial path).
  void predict_batch(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& sd,
                     Exec exec = Exec::parallel) const;

  /// Log marginal likelihood of the standardized targets.
  [[nodiscard]] double log_marginal_likelihood() const { return lml_; }

  [[nodiscard]] const Eigen::VectorXd& length_scales() const { return length_; }
  [[nodiscard]] double noise() const { return noise_; }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
  [[nodiscard]] double kernel(std::span<const double> a, std::span<const double> b) const;

 private:
  Eigen::VectorXd length_;
  double noise_ = 1e-6;
  Eigen::MatrixXd x_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  double lml_ = 0.0;
};

/// Per-dimension length scales chosen by coordinate-wise search over `grid`
/// maximizing the marginal likelihood; `sweeps` passes over the dimensions,
/// starting from `start`.
Eigen::VectorXd fit_length_scales(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double noise,
                                  const std::vector<double>& grid, Eigen::VectorXd start, int sweeps = 2);

struct Trial {
  std::vector<double> params;
  double value = 0.0;  // -inf when the objective failed
  bool failed = false;
};

struct BOStudy {
  std::vector<std::string> names;
  std::vector<Interval> ranges;
  std::vector<Trial> trials;
  std::vector<double> incumbent;  // best value after each trial
  int best_index = -1;
  int n_init = 20;
  std::uint64_t seed = 0;

  [[nodiscard]] const Trial& best() const;
};

struct BoOptions {
  int n_init = 20;
  int random_candidates = 1024;
  int local_candidates = 64;
  double local_scale = 0.05;  // fraction of each range
  double noise = 1e-6;
  /// Maximum number of observations conditioning the GP: half the best
  /// trials, the rest the most recent ones.
  int window = 256;
  int refit_every = 50;  // trials between length-scale searches
  std::vector<double> length_grid = {0.03, 0.06, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0};
  Exec exec = Exec::parallel;
};

/// Fitted model state carried between suggestions.
struct BoState {
  GaussianProcess gp;
  Eigen::VectorXd length_scales;
  bool fitted = false;
  int last_refit = -1;
};

/// Updates `state` for the current trials of `study` (GP conditioned on the
/// observation window, length scales refreshed every refit_every trials).
void update_model(const BOStudy& study, const BoOptions& options, BoState& state);

/// Next parameters to evaluate. The first n_init trials are uniform draws;
/// afterwards the EI maximizer over random and incumbent-local candidates.
/// Trial t uses the generator seeded with derive_seed(study.seed, t).
std::vector<double> suggest_next(const BOStudy& study, const BoState& state, const BoOptions& options);

BOStudy run_study(const Objective& objective, const std::vector<Interval>& ranges, int n_trials,
                  std::uint64_t seed, const BoOptions& options = {});

/// Uniform draw within `ranges` from `rng`, one coordinate at a time.
std::vector<double> uniform_point(const std::vector<Interval>& ranges, std::mt19937_64& rng);

struct SearchResult {
  std::vector<double> params;
  double value = -std::numeric_limits<double>::infinity();
};

/// Uniform random search maximizing `objective`. Points are drawn in chunks
/// of kSearchChunk with per-chunk seeds; ties go to the earliest point.
inline constexpr std::size_t kSearchChunk = 4096;
SearchResult random_search(const Objective& objective, const std::vector<Interval>& ranges, std::size_t n,
                           std::uint64_t seed, Exec exec = Exec::parallel);

struct ContourGrid {
  std::size_t i = 0;
  std::size_t j = 0;
  int resolution = 0;
  std::vector<double> axis_i;
  std::vector<double> axis_j;
  Eigen::MatrixXd values;  // values(a, b) at (axis_i[a], axis_j[b])
  std::vector<double> baseline;
};

ContourGrid contour_grid(const Objective& predict, std::size_t i, std::size_t j, const std::vector<Interval>& ranges,
                         int resolution, const std::vector<double>& baseline, Exec exec = Exec::parallel);

std::string study_to_json(const BOStudy& study);
std::string grid_to_csv(const ContourGrid& grid, const std::string& name_i, const std::string& name_j);

}  // namespace simgen
