#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simgen/common.hpp"
#include "simgen/data.hpp"

namespace simgen {

struct GbdtConfig {
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  int min_samples_leaf = 5;
  double subsample = 1.0;
  std::uint64_t seed = 0;
  /// Optional monotone constraints by feature name: +1 non-decreasing,
  /// -1 non-increasing. Unlisted features are unconstrained.
  std::map<std::string, int> monotone;
  /// Features never used for splitting (they still appear in the feature
  /// matrix). Needed when a derived feature would defeat a monotone
  /// constraint on its operands.
  std::vector<std::string> ignore;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (before learning-rate shrinkage)

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree stored as a flat node array; node 0 is the root.
/// Rows with x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;
  int max_depth = 0;

  [[nodiscard]] double eval(std::span<const double> features) const;
  [[nodiscard]] int depth() const;
};

struct SplitCandidate {
  double threshold = 0.0;
  double gain = 0.0;
};

/// Exact greedy split search on one feature column. Candidates are midpoints
/// of consecutive distinct sorted values with at least `min_leaf` rows on each
/// side. Gain is GL^2/HL + GR^2/HR - G^2/H; ties go to the smallest threshold.
std::optional<SplitCandidate> best_split(std::span<const double> feature, std::span<const double> gradients,
                                         std::span<const double> hessians, int min_leaf);

class SurrogateModel {
 public:
  Task task = Task::binary;
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::size_t feature_count = 0;
  std::vector<std::string> feature_names;
  ParameterSpace space;
  ScalingStats scaling;                // over the raw parameter columns of the training data
  std::vector<Interval> train_ranges;  // raw parameter min/max of the training data
  Interval outcome_range;              // training outcome min/max
  GbdtConfig config;

  /// Raw ensemble score before the link function.
  [[nodiscard]] double raw_score(std::span<const double> features) const;

  /// Link applied to the raw score: probability for binary, identity otherwise.
  [[nodiscard]] double predict(std::span<const double> features) const;

  /// Batch prediction over rows of a feature matrix.
  [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& features, Exec exec = Exec::parallel) const;

  /// Prediction from raw physical parameters (derived features computed here).
  [[nodiscard]] double predict_raw(std::span<const double> params) const;
  [[nodiscard]] Eigen::VectorXd predict_raw(const Eigen::MatrixXd& params, Exec exec = Exec::parallel) const;

  /// Prediction mapped to [0,1]: the probability for binary models, the
  /// training-range min-max normalization (clipped) for regression.
  [[nodiscard]] double unit_outcome(double prediction) const;
};

/// Fits the ensemble on a raw dataset (columns = space parameters). Derived
/// features are computed internally; `loss_trace`, when given, receives the
/// training loss before the first tree and after every stage.
SurrogateModel fit(const Dataset& train, const GbdtConfig& cfg, Task task,
                   std::vector<double>* loss_trace = nullptr, Exec exec = Exec::parallel);

std::string serialize_model(const SurrogateModel& model);
SurrogateModel deserialize_model(const std::string& text);

double logistic(double x);

}  // namespace simgen
