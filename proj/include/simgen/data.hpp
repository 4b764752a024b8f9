#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simgen/common.hpp"

namespace simgen {

enum class Plausibility { positive, nonnegative, negative, unit_interval, unconstrained };

std::string to_string(Plausibility p);
Plausibility plausibility_from_string(const std::string& name);

/// True iff `x` satisfies predicate `p` (NaN never does).
bool satisfies(Plausibility p, double x);

struct ParameterSpec {
  std::string name;
  std::string unit;
  double lower = 0.0;
  double upper = 1.0;
  Plausibility plausibility = Plausibility::unconstrained;

  bool operator==(const ParameterSpec&) const = default;
};

enum class DerivedKind { ratio, difference, product };

std::string to_string(DerivedKind k);
DerivedKind derived_kind_from_string(const std::string& name);

struct DerivedFeature {
  std::string name;
  DerivedKind kind = DerivedKind::ratio;
  std::size_t lhs = 0;
  std::size_t rhs = 0;

  bool operator==(const DerivedFeature&) const = default;
};

/// Ordered parameter schema. The spec order is the column order of every
/// vector representation used downstream.
class ParameterSpace {
 public:
  ParameterSpace() = default;
  ParameterSpace(std::vector<ParameterSpec> specs, std::vector<DerivedFeature> derived = {});

  [[nodiscard]] std::size_t size() const { return specs_.size(); }
  [[nodiscard]] std::size_t feature_count() const { return specs_.size() + derived_.size(); }
  [[nodiscard]] const std::vector<ParameterSpec>& specs() const { return specs_; }
  [[nodiscard]] const std::vector<DerivedFeature>& derived() const { return derived_; }
  [[nodiscard]] const ParameterSpec& spec(std::size_t i) const { return specs_.at(i); }

  /// Index of a parameter by name; throws SchemaError when absent.
  [[nodiscard]] std::size_t index_of(const std::string& name) const;
  [[nodiscard]] std::optional<std::size_t> find(const std::string& name) const;

  /// Parameter names followed by derived feature names.
  [[nodiscard]] std::vector<std::string> feature_names() const;

  /// Writes raw parameters followed by derived features into `out`
  /// (length feature_count()).
  void derive_row(std::span<const double> raw, std::span<double> out) const;

  bool operator==(const ParameterSpace&) const = default;

 private:
  std::vector<ParameterSpec> specs_;
  std::vector<DerivedFeature> derived_;
};

/// Evaluates one derived feature. Ratio denominators are clamped away from
/// zero to magnitude 1e-9 keeping their sign (zero maps to +1e-9).
double eval_derived(const DerivedFeature& f, std::span<const double> raw);

struct ScalingStats {
  std::vector<double> mean;
  std::vector<double> std;  // population convention
};

enum class SplitTag : std::uint8_t { train, validation, test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& name);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.0;
  double test = 0.2;
};

struct Dataset {
  ParameterSpace space;
  std::vector<std::string> columns;  // names of the columns of `rows`
  Eigen::MatrixXd rows;              // one simulation per row
  Eigen::VectorXd outcomes;
  Task task = Task::binary;
  std::optional<ScalingStats> scaling;
  bool standardized = false;
  std::vector<SplitTag> split;  // empty until split_dataset

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  [[nodiscard]] std::size_t cols() const { return static_cast<std::size_t>(rows.cols()); }

  /// Rows tagged `tag`, in original order. Requires a split.
  [[nodiscard]] Dataset subset(SplitTag tag) const;

  /// Checks shape and task invariants; throws SchemaError.
  void validate() const;
};

/// Builds a raw dataset (columns = parameter names).
Dataset make_dataset(ParameterSpace space, Eigen::MatrixXd rows, Eigen::VectorXd outcomes, Task task);

Dataset load_dataset(const std::string& path, const ParameterSpace& space,
                     const std::string& outcome_column, Task task);

/// CSV text for `ds`: its columns, then the outcome column. Reals use
/// format_real.
std::string dataset_to_csv(const Dataset& ds, const std::string& outcome_column);

ScalingStats fit_scaling(const Dataset& ds);

enum class ScaleDirection { standardize, destandardize };

Dataset apply_scaling(const Dataset& ds, const ScalingStats& stats, ScaleDirection direction);

/// Appends one column per derived feature of `ds.space` in declaration order.
Dataset derive_features(const Dataset& ds);

Dataset split_dataset(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

/// Group sizes produced by split_dataset for `n` rows.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& fractions);

struct MaterialModelName {
  std::array<int, 4> layers{};  // nm
  int depth = 0;                // nm
  int radius = 0;               // nm
};

/// Parses names like "6_2_9_1_d7_r10".
MaterialModelName parse_material_model_name(const std::string& name);
std::string format_material_model_name(const MaterialModelName& m);

// ParameterSpace definition files (JSON).
ParameterSpace parse_parameter_space(const std::string& json_text);
ParameterSpace load_parameter_space(const std::string& path);
std::string parameter_space_to_json(const ParameterSpace& space);

}  // namespace simgen
