#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "simgen/gen_env.hpp"
#include "simgen/ppo.hpp"

namespace simgen {

struct Provenance {
  std::string policy_id;     // content hash of the policy document
  std::string surrogate_id;  // content hash of the surrogate document
  std::uint64_t seed = 0;
  std::string timestamp;  // left empty by the CLI so artifacts stay reproducible
};

struct GeneratedDataset {
  ParameterSpace space;
  Eigen::MatrixXd rows_raw;   // n x dim, physical units
  Eigen::VectorXd predicted;  // unit-interval outcome
  std::vector<std::uint8_t> valid;
  Provenance provenance;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows_raw.rows()); }
};

struct RangeSummary {
  std::vector<std::string> names;
  std::vector<Interval> ranges;
};

/// Rows generated per independently seeded shard.
inline constexpr std::size_t kGenerationShard = 512;

/// Samples `n` actions from the policy on fresh standard-normal states and
/// evaluates them in `env`. Shard k draws from derive_seed(seed, k), so the
/// result does not depend on the thread count.
GeneratedDataset generate_batch(const PolicyNetwork& policy, const GenEnvironment& env, std::size_t n,
                                std::uint64_t seed, Exec exec = Exec::parallel);

struct FilterResult {
  GeneratedDataset data;
  double retained_fraction = 0.0;
  bool empty_warning = false;
};

FilterResult filter_valid(const GeneratedDataset& gd);

RangeSummary summarize_ranges(const GeneratedDataset& gd);

/// Equal-width bins over [0,1]; the last bin is closed on the right.
std::vector<long> histogram_outcomes(std::span<const double> values, int bins);

/// generated.csv: parameter columns, `predicted`, `valid` (0/1).
std::string generated_to_csv(const GeneratedDataset& gd);
GeneratedDataset generated_from_csv(const std::string& text, const ParameterSpace& space);

}  // namespace simgen
