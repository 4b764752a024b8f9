#include "simgen/gen_env.hpp"

#include <algorithm>
#include <cmath>

namespace simgen {

std::string to_string(Direction d) { return d == Direction::maximize ? "maximize" : "minimize"; }

Direction direction_from_string(const std::string& name) {
  if (name == "maximize") return Direction::maximize;
  if (name == "minimize") return Direction::minimize;
  throw ConfigError("unknown direction '" + name + "' (expected maximize or minimize)");
}

void RewardConfig::validate() const {
  if (!(invalid_penalty < 0.0)) throw ConfigError("environment: invalid_penalty must be negative");
  if (!(range_margin >= 0.0)) throw ConfigError("environment: range_margin must be >= 0");
}

OutcomeContext OutcomeContext::from_model(std::shared_ptr<const SurrogateModel> model) {
  if (!model) throw Error("null surrogate model");
  OutcomeContext ctx;
  ctx.space = model->space;
  ctx.scaling = model->scaling;
  ctx.train_ranges = model->train_ranges;
  ctx.task = model->task;
  ctx.outcome_range = model->outcome_range;
  ctx.predict_raw = [m = std::move(model)](std::span<const double> raw) { return m->predict_raw(raw); };
  return ctx;
}

GenEnvironment::GenEnvironment(OutcomeContext context, RewardConfig reward, std::uint64_t seed)
    : ctx_(std::move(context)), reward_(reward), dim_(ctx_.space.size()), rng_(seed) {
  reward_.validate();
  if (dim_ == 0) throw Error("environment: parameter space is empty");
  if (ctx_.scaling.mean.size() != dim_ || ctx_.scaling.std.size() != dim_) {
    throw SchemaError("environment: scaling does not match parameter count");
  }
  if (ctx_.train_ranges.size() != dim_) throw SchemaError("environment: training ranges do not match parameter count");
  for (const auto& r : ctx_.train_ranges) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) throw SchemaError("environment: bad training range");
  }
  if (!ctx_.predict_raw) throw Error("environment: missing predictor");
  state_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
}

Eigen::VectorXd GenEnvironment::draw_state(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd s(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index k = 0; k < s.size(); ++k) s[k] = normal(rng);
  return s;
}

Eigen::VectorXd GenEnvironment::reset() {
  state_ = draw_state(rng_);
  return state_;
}

Validity GenEnvironment::check_validity(std::span<const double> raw) const {
  if (raw.size() != dim_) throw SchemaError("check_validity: expected " + std::to_string(dim_) + " parameters");
  for (std::size_t k = 0; k < dim_; ++k) {
    if (!std::isfinite(raw[k])) return {false, "non-finite: " + ctx_.space.spec(k).name};
  }
  for (std::size_t k = 0; k < dim_; ++k) {
    const auto& spec = ctx_.space.spec(k);
    if (!satisfies(spec.plausibility, raw[k])) {
      return {false, "implausible: " + spec.name + " must be " + to_string(spec.plausibility)};
    }
  }
  for (std::size_t k = 0; k < dim_; ++k) {
    const auto& r = ctx_.train_ranges[k];
    const double pad = reward_.range_margin * r.width();
    if (raw[k] < r.lo - pad || raw[k] > r.hi + pad) {
      return {false, "out-of-range: " + ctx_.space.spec(k).name};
    }
  }
  return {};
}

Eigen::VectorXd GenEnvironment::to_raw(std::span<const double> action) const {
  if (action.size() != dim_) throw SchemaError("action has " + std::to_string(action.size()) + " entries, expected " +
                                               std::to_string(dim_));
  Eigen::VectorXd raw(static_cast<Eigen::Index>(dim_));
  for (std::size_t k = 0; k < dim_; ++k) {
    raw[static_cast<Eigen::Index>(k)] = action[k] * ctx_.scaling.std[k] + ctx_.scaling.mean[k];
  }
  return raw;
}

double GenEnvironment::unit_outcome(std::span<const double> raw) const {
  const double p = ctx_.predict_raw(raw);
  if (ctx_.task == Task::binary) return std::clamp(p, 0.0, 1.0);
  const double w = ctx_.outcome_range.width();
  if (!(w > 0.0)) return 0.5;
  return std::clamp((p - ctx_.outcome_range.lo) / w, 0.0, 1.0);
}

double GenEnvironment::compute_reward(std::span<const double> action) const {
  const Eigen::VectorXd raw = to_raw(action);
  const std::span<const double> view(raw.data(), dim_);
  if (!check_validity(view).valid) return reward_.invalid_penalty;
  const double v = unit_outcome(view);
  return reward_.direction == Direction::maximize ? v : 1.0 - v;
}

StepResult GenEnvironment::step(std::span<const double> action) {
  StepResult r;
  r.reward = compute_reward(action);
  r.done = true;
  r.next_state = reset();
  return r;
}

}  // namespace simgen
