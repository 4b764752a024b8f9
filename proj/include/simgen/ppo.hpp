#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "simgen/gen_env.hpp"
#include "simgen/nn.hpp"

namespace simgen {

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;  // inert for one-step episodes
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  int rollout_size = 2048;
  int minibatch = 64;
  int epochs_per_update = 10;
  long total_steps = 200'000;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables global-norm clipping
  double log_std_init = 0.0;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian policy: state-dependent mean, state-independent log-std.
struct PolicyNetwork {
  nn::Mlp mean_net;
  Eigen::VectorXd log_std;

  [[nodiscard]] int dim() const { return mean_net.output_dim(); }
  [[nodiscard]] Eigen::VectorXd mean(std::span<const double> state) const;
};

struct ValueNetwork {
  nn::Mlp net;

  [[nodiscard]] double operator()(std::span<const double> state) const;
};

PolicyNetwork make_policy(int dim, const std::vector<int>& hidden, double log_std_init, std::mt19937_64& rng);
ValueNetwork make_value(int dim, const std::vector<int>& hidden, std::mt19937_64& rng);

/// Log-density of a diagonal Gaussian.
double gaussian_log_density(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> action);

struct ActionSample {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};

ActionSample sample_action(const PolicyNetwork& policy, std::span<const double> state, std::mt19937_64& rng);
double log_prob(const PolicyNetwork& policy, std::span<const double> state, std::span<const double> action);

/// Differential entropy of the action distribution (state-independent).
double entropy(const PolicyNetwork& policy);

struct RolloutBatch {
  Eigen::MatrixXd states;   // dim x n
  Eigen::MatrixXd actions;  // dim x n
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
};

RolloutBatch collect_rollouts(GenEnvironment& env, const PolicyNetwork& policy, const ValueNetwork& value,
                              std::size_t n, std::mt19937_64& rng);

/// GAE with truncation at dones; `bootstrap` is the value after the final
/// transition when it is not terminal. returns = raw advantages + values;
/// advantages are then standardized per batch when `normalize` is set.
void compute_gae(RolloutBatch& batch, double gamma, double lambda, bool normalize = true, double bootstrap = 0.0);

struct LossTerms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
};

/// Flat parameter vector: policy mean network, log_std, value network.
Eigen::VectorXd pack_parameters(const PolicyNetwork& policy, const ValueNetwork& value);
void unpack_parameters(const Eigen::VectorXd& flat, PolicyNetwork& policy, ValueNetwork& value);

/// Clipped-surrogate PPO loss on the samples `indices` of `batch`
/// (all samples when empty). When `grad` is non-null it receives the gradient
/// of `total` with respect to pack_parameters(policy, value).
LossTerms ppo_loss(const PolicyNetwork& policy, const ValueNetwork& value, const RolloutBatch& batch,
                   std::span<const std::size_t> indices, const PpoConfig& cfg, Eigen::VectorXd* grad = nullptr);

struct CurvePoint {
  long step = 0;
  double mean_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

using TrainingCurve = std::vector<CurvePoint>;

struct PolicyBundle {
  PolicyNetwork policy;
  ValueNetwork value;
  PpoConfig config;
  nn::Adam optimizer;
};

struct TrainResult {
  PolicyBundle bundle;
  TrainingCurve curve;
};

TrainResult train_agent(GenEnvironment& env, const PpoConfig& cfg);

std::string curve_to_csv(const TrainingCurve& curve);

std::string serialize_policy(const PolicyBundle& bundle);
PolicyBundle deserialize_policy(const std::string& text);

}  // namespace simgen
