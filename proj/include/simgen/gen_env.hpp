#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "simgen/data.hpp"
#include "simgen/surrogate.hpp"

namespace simgen {

enum class Direction { maximize, minimize };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& name);

struct RewardConfig {
  Direction direction = Direction::maximize;
  double invalid_penalty = -1.0;
  double range_margin = 0.1;  // fraction of the training range added on each side

  void validate() const;
};

struct Validity {
  bool valid = true;
  std::string reason;  // empty when valid
};

/// Everything the environment needs from a fitted outcome model. Built from a
/// SurrogateModel in production; tests substitute analytic predictors.
struct OutcomeContext {
  ParameterSpace space;
  ScalingStats scaling;
  std::vector<Interval> train_ranges;
  Task task = Task::binary;
  Interval outcome_range{0.0, 1.0};
  std::function<double(std::span<const double>)> predict_raw;

  static OutcomeContext from_model(std::shared_ptr<const SurrogateModel> model);
};

struct StepResult {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool done = true;
};

/// One-step generative environment. States are standard-normal draws,
/// actions are standardized parameter vectors. Every episode ends after one
/// step, so the successor state never depends on the action.
class GenEnvironment {
 public:
  GenEnvironment(OutcomeContext context, RewardConfig reward, std::uint64_t seed);

  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] const OutcomeContext& context() const { return ctx_; }
  [[nodiscard]] const RewardConfig& reward_config() const { return reward_; }
  [[nodiscard]] const Eigen::VectorXd& state() const { return state_; }

  Eigen::VectorXd reset();

  /// Validity of a raw (physical-unit) parameter vector: finite, plausible,
  /// and inside the training range widened by range_margin on each side.
  [[nodiscard]] Validity check_validity(std::span<const double> raw) const;

  /// Maps a standardized action to physical units.
  [[nodiscard]] Eigen::VectorXd to_raw(std::span<const double> action) const;

  /// Model prediction on raw parameters, mapped to [0,1].
  [[nodiscard]] double unit_outcome(std::span<const double> raw) const;

  [[nodiscard]] double compute_reward(std::span<const double> action) const;

  StepResult step(std::span<const double> action);

  /// Independent standard-normal state draw from an external generator.
  [[nodiscard]] Eigen::VectorXd draw_state(std::mt19937_64& rng) const;

 private:
  OutcomeContext ctx_;
  RewardConfig reward_;
  std::size_t dim_ = 0;
  std::mt19937_64 rng_;
  Eigen::VectorXd state_;
};

}  // namespace simgen
