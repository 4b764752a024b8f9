#include "simgen/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace simgen {

GeneratedDataset generate_batch(const PolicyNetwork& policy, const GenEnvironment& env, std::size_t n,
                                std::uint64_t seed, Exec exec) {
  const auto dim = static_cast<Eigen::Index>(env.dim());
  if (policy.dim() != dim || policy.mean_net.input_dim() != dim) {
    throw SchemaError("generate_batch: policy dimension " + std::to_string(policy.dim()) +
                      " does not match the surrogate's " + std::to_string(dim));
  }
  GeneratedDataset gd;
  gd.space = env.context().space;
  gd.rows_raw.resize(static_cast<Eigen::Index>(n), dim);
  gd.predicted.resize(static_cast<Eigen::Index>(n));
  gd.valid.assign(n, 0);
  gd.provenance.seed = seed;

  const auto shards = static_cast<long>((n + kGenerationShard - 1) / kGenerationShard);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (long k = 0; k < shards; ++k) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const std::size_t begin = static_cast<std::size_t>(k) * kGenerationShard;
    const std::size_t end = std::min(n, begin + kGenerationShard);
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::VectorXd state = env.draw_state(rng);
      const auto sample = sample_action(policy, {state.data(), static_cast<std::size_t>(dim)}, rng);
      const Eigen::VectorXd raw = env.to_raw({sample.action.data(), static_cast<std::size_t>(dim)});
      const std::span<const double> view(raw.data(), static_cast<std::size_t>(dim));
      const auto row = static_cast<Eigen::Index>(i);
      gd.rows_raw.row(row) = raw.transpose();
      gd.valid[i] = env.check_validity(view).valid ? 1 : 0;
      gd.predicted[row] = env.unit_outcome(view);
    }
  }
  return gd;
}

FilterResult filter_valid(const GeneratedDataset& gd) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (gd.valid[i]) keep.push_back(static_cast<Eigen::Index>(i));
  }
  FilterResult r;
  r.data.space = gd.space;
  r.data.provenance = gd.provenance;
  r.data.rows_raw = gd.rows_raw(keep, Eigen::all);
  r.data.predicted = gd.predicted(keep);
  r.data.valid.assign(keep.size(), 1);
  r.retained_fraction = gd.size() == 0 ? 0.0 : static_cast<double>(keep.size()) / static_cast<double>(gd.size());
  r.empty_warning = keep.empty();
  return r;
}

RangeSummary summarize_ranges(const GeneratedDataset& gd) {
  RangeSummary s;
  for (const auto& spec : gd.space.specs()) s.names.push_back(spec.name);
  s.ranges.assign(gd.space.size(), Interval{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  std::size_t count = 0;
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (!gd.valid[i]) continue;
    ++count;
    for (std::size_t j = 0; j < s.ranges.size(); ++j) {
      const double v = gd.rows_raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      s.ranges[j].lo = std::min(s.ranges[j].lo, v);
      s.ranges[j].hi = std::max(s.ranges[j].hi, v);
    }
  }
  if (count == 0) throw Error("summarize_ranges: no valid rows");
  return s;
}

std::vector<long> histogram_outcomes(std::span<const double> values, int bins) {
  if (bins < 2) throw Error("histogram_outcomes: bins must be >= 2");
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("histogram_outcomes: value " + format_real(v) + " outside [0,1]");
    auto b = static_cast<int>(std::floor(v * bins));
    b = std::min(b, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

std::string generated_to_csv(const GeneratedDataset& gd) {
  std::ostringstream out;
  for (const auto& s : gd.space.specs()) out << s.name << ',';
  out << "predicted,valid\n";
  for (std::size_t i = 0; i < gd.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < gd.rows_raw.cols(); ++j) out << format_real(gd.rows_raw(r, j)) << ',';
    out << format_real(gd.predicted[r]) << ',' << (gd.valid[i] ? 1 : 0) << '\n';
  }
  return out.str();
}

GeneratedDataset generated_from_csv(const std::string& text, const ParameterSpace& space) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("generated.csv is empty");
  std::string expected;
  for (const auto& s : space.specs()) expected += s.name + ",";
  expected += "predicted,valid";
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) throw SchemaError("generated.csv header does not match the parameter space");

  std::vector<double> values;
  std::vector<double> predicted;
  std::vector<std::uint8_t> valid;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ParseError("generated.csv line " + std::to_string(line_no) + ": bad number");
      row.push_back(v);
    }
    if (row.size() != space.size() + 2) throw ParseError("generated.csv line " + std::to_string(line_no) + ": wrong cell count");
    values.insert(values.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(space.size()));
    predicted.push_back(row[space.size()]);
    valid.push_back(row[space.size() + 1] != 0.0 ? 1 : 0);
  }
  GeneratedDataset gd;
  gd.space = space;
  const auto n = static_cast<Eigen::Index>(predicted.size());
  gd.rows_raw = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, static_cast<Eigen::Index>(space.size()));
  gd.predicted = Eigen::Map<Eigen::VectorXd>(predicted.data(), n);
  gd.valid = std::move(valid);
  return gd;
}

}  // namespace simgen
