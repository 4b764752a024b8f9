#pragma once

#include <optional>
#include <span>
#include <string>

#include "simgen/data.hpp"
#include "simgen/surrogate.hpp"

namespace simgen {

struct Confusion {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  [[nodiscard]] long total() const { return tp + tn + fp + fn; }
};

struct Metrics {
  Task task = Task::binary;
  std::size_t count = 0;
  // binary
  std::optional<Confusion> confusion;
  std::optional<double> roc_auc;
  std::optional<double> macro_f1;
  std::optional<double> accuracy;
  // regression
  std::optional<double> r2;
  std::optional<double> mse;
  std::optional<double> rmse;
  std::optional<double> mae;
  /// Metrics that could not be computed, with the reason.
  std::vector<std::string> errors;
};

inline constexpr double kDecisionThreshold = 0.5;

Confusion confusion_at(std::span<const double> scores, std::span<const double> labels, double threshold);

/// Macro-averaged F1 over the two classes. A class with no predicted and no
/// actual members contributes F1 = 1.
double macro_f1(const Confusion& c);
double accuracy(const Confusion& c);

/// Mann-Whitney rank statistic; tied scores contribute one half.
/// Throws when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

Metrics binary_metrics(std::span<const double> scores, std::span<const double> labels);
Metrics regression_metrics(std::span<const double> predictions, std::span<const double> targets);

Metrics evaluate_binary(const SurrogateModel& model, const Dataset& ds);
Metrics evaluate_regression(const SurrogateModel& model, const Dataset& ds);

/// Structured-text (JSON) report.
std::string metrics_to_json(const Metrics& m, const std::string& split_name);

}  // namespace simgen
