#include "simgen/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "json_support.hpp"

namespace simgen {

namespace {

bool range_consistent(Plausibility p, double lower, double upper) {
  switch (p) {
    case Plausibility::positive:
    case Plausibility::nonnegative:
      return lower >= 0.0;
    case Plausibility::negative:
      return upper <= 0.0;
    case Plausibility::unit_interval:
      return lower >= 0.0 && upper <= 1.0;
    case Plausibility::unconstrained:
      return true;
  }
  return false;
}

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_real(const std::string& s) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

}  // namespace

std::string to_string(Plausibility p) {
  switch (p) {
    case Plausibility::positive: return "positive";
    case Plausibility::nonnegative: return "nonnegative";
    case Plausibility::negative: return "negative";
    case Plausibility::unit_interval: return "unit-interval";
    case Plausibility::unconstrained: return "unconstrained";
  }
  return "?";
}

Plausibility plausibility_from_string(const std::string& name) {
  if (name == "positive") return Plausibility::positive;
  if (name == "nonnegative") return Plausibility::nonnegative;
  if (name == "negative") return Plausibility::negative;
  if (name == "unit-interval") return Plausibility::unit_interval;
  if (name == "unconstrained") return Plausibility::unconstrained;
  throw SchemaError("unknown plausibility predicate '" + name + "'");
}

bool satisfies(Plausibility p, double x) {
  switch (p) {
    case Plausibility::positive: return x > 0.0;
    case Plausibility::nonnegative: return x >= 0.0;
    case Plausibility::negative: return x < 0.0;
    case Plausibility::unit_interval: return x >= 0.0 && x <= 1.0;
    case Plausibility::unconstrained: return std::isfinite(x);
  }
  return false;
}

std::string to_string(DerivedKind k) {
  switch (k) {
    case DerivedKind::ratio: return "ratio";
    case DerivedKind::difference: return "difference";
    case DerivedKind::product: return "product";
  }
  return "?";
}

DerivedKind derived_kind_from_string(const std::string& name) {
  if (name == "ratio") return DerivedKind::ratio;
  if (name == "difference") return DerivedKind::difference;
  if (name == "product") return DerivedKind::product;
  throw SchemaError("unknown derived feature kind '" + name + "'");
}

ParameterSpace::ParameterSpace(std::vector<ParameterSpec> specs, std::vector<DerivedFeature> derived)
    : specs_(std::move(specs)), derived_(std::move(derived)) {
  std::unordered_set<std::string> names;
  for (const auto& s : specs_) {
    if (s.name.empty()) throw SchemaError("parameter with empty name");
    if (!names.insert(s.name).second) throw SchemaError("duplicate parameter name '" + s.name + "'");
    if (!(s.lower < s.upper)) throw SchemaError("parameter '" + s.name + "': lower must be < upper");
    if (!range_consistent(s.plausibility, s.lower, s.upper)) {
      throw SchemaError("parameter '" + s.name + "': bounds inconsistent with predicate " +
                        to_string(s.plausibility));
    }
  }
  for (const auto& d : derived_) {
    if (d.name.empty()) throw SchemaError("derived feature with empty name");
    if (!names.insert(d.name).second) throw SchemaError("duplicate feature name '" + d.name + "'");
    if (d.lhs >= specs_.size() || d.rhs >= specs_.size()) {
      throw SchemaError("derived feature '" + d.name + "': operand index out of range");
    }
  }
}

std::optional<std::size_t> ParameterSpace::find(const std::string& name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterSpace::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw SchemaError("unknown parameter '" + name + "'");
}

std::vector<std::string> ParameterSpace::feature_names() const {
  std::vector<std::string> out;
  out.reserve(feature_count());
  for (const auto& s : specs_) out.push_back(s.name);
  for (const auto& d : derived_) out.push_back(d.name);
  return out;
}

double eval_derived(const DerivedFeature& f, std::span<const double> raw) {
  const double a = raw[f.lhs];
  const double b = raw[f.rhs];
  switch (f.kind) {
    case DerivedKind::ratio: {
      const double mag = std::max(std::abs(b), 1e-9);
      return a / (std::signbit(b) ? -mag : mag);
    }
    case DerivedKind::difference: return a - b;
    case DerivedKind::product: return a * b;
  }
  return 0.0;
}

void ParameterSpace::derive_row(std::span<const double> raw, std::span<double> out) const {
  std::copy(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(specs_.size()), out.begin());
  for (std::size_t k = 0; k < derived_.size(); ++k) {
    out[specs_.size() + k] = eval_derived(derived_[k], raw);
  }
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
  }
  return "?";
}

SplitTag split_tag_from_string(const std::string& name) {
  if (name == "train") return SplitTag::train;
  if (name == "validation") return SplitTag::validation;
  if (name == "test") return SplitTag::test;
  throw ParseError("unknown split tag '" + name + "'");
}

void Dataset::validate() const {
  if (outcomes.size() != rows.rows()) throw SchemaError("outcome count does not match row count");
  if (columns.size() != cols()) throw SchemaError("column names do not match column count");
  if (!split.empty() && split.size() != size()) throw SchemaError("split tags do not match row count");
  if (task == Task::binary) {
    for (Eigen::Index i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i] != 0.0 && outcomes[i] != 1.0) {
        throw SchemaError("binary outcome at row " + std::to_string(i) + " is not 0 or 1");
      }
    }
  }
}

Dataset Dataset::subset(SplitTag tag) const {
  if (split.size() != size()) throw Error("dataset has no split assignment");
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == tag) keep.push_back(static_cast<Eigen::Index>(i));
  }
  Dataset out = *this;
  out.rows = rows(keep, Eigen::all);
  out.outcomes = outcomes(keep);
  out.split.assign(keep.size(), tag);
  return out;
}

Dataset make_dataset(ParameterSpace space, Eigen::MatrixXd rows, Eigen::VectorXd outcomes, Task task) {
  Dataset ds;
  ds.columns.clear();
  for (const auto& s : space.specs()) ds.columns.push_back(s.name);
  ds.space = std::move(space);
  ds.rows = std::move(rows);
  ds.outcomes = std::move(outcomes);
  ds.task = task;
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path, const ParameterSpace& space,
                     const std::string& outcome_column, Task task) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw ParseError("dataset '" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_csv_line(line);
  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("dataset '" + path + "' is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> param_cols;
  for (const auto& s : space.specs()) param_cols.push_back(column_of(s.name));
  const std::size_t outcome_col = column_of(outcome_column);

  std::vector<double> values;
  std::vector<double> outcomes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    }
    auto cell = [&](std::size_t c) {
      auto v = parse_real(cells[c]);
      if (!v) {
        throw ParseError("line " + std::to_string(line_no) + ", column '" + header[c] +
                         "': non-numeric value '" + cells[c] + "'");
      }
      return *v;
    };
    for (auto c : param_cols) values.push_back(cell(c));
    outcomes.push_back(cell(outcome_col));
  }
  if (outcomes.empty()) throw ParseError("dataset '" + path + "' has no data rows");

  const auto n = static_cast<Eigen::Index>(outcomes.size());
  const auto d = static_cast<Eigen::Index>(space.size());
  Eigen::MatrixXd rows = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  return make_dataset(space, std::move(rows), Eigen::Map<Eigen::VectorXd>(outcomes.data(), n), task);
}

std::string dataset_to_csv(const Dataset& ds, const std::string& outcome_column) {
  std::ostringstream out;
  for (const auto& c : ds.columns) out << c << ',';
  out << outcome_column << '\n';
  for (Eigen::Index i = 0; i < ds.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) out << format_real(ds.rows(i, j)) << ',';
    out << format_real(ds.outcomes[i]) << '\n';
  }
  return out.str();
}

ScalingStats fit_scaling(const Dataset& ds) {
  if (ds.size() < 2) throw Error("fit_scaling needs at least 2 rows");
  ScalingStats stats;
  const double n = static_cast<double>(ds.size());
  for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) {
    const auto col = ds.rows.col(j);
    const double mean = col.sum() / n;
    const double var = (col.array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      throw Error("column '" + ds.columns.at(static_cast<std::size_t>(j)) + "' is constant");
    }
    stats.mean.push_back(mean);
    stats.std.push_back(sd);
  }
  return stats;
}

Dataset apply_scaling(const Dataset& ds, const ScalingStats& stats, ScaleDirection direction) {
  if (stats.mean.size() != ds.cols() || stats.std.size() != ds.cols()) {
    throw SchemaError("scaling has " + std::to_string(stats.mean.size()) + " columns, dataset has " +
                      std::to_string(ds.cols()));
  }
  Dataset out = ds;
  for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) {
    const double m = stats.mean[static_cast<std::size_t>(j)];
    const double s = stats.std[static_cast<std::size_t>(j)];
    if (direction == ScaleDirection::standardize) {
      out.rows.col(j) = (ds.rows.col(j).array() - m) / s;
    } else {
      out.rows.col(j) = ds.rows.col(j).array() * s + m;
    }
  }
  out.standardized = direction == ScaleDirection::standardize;
  out.scaling = stats;
  return out;
}

Dataset derive_features(const Dataset& ds) {
  if (ds.standardized) throw Error("derive_features requires raw (unstandardized) data");
  if (ds.cols() != ds.space.size()) throw SchemaError("derive_features expects exactly the raw parameter columns");
  Dataset out = ds;
  const auto extra = static_cast<Eigen::Index>(ds.space.derived().size());
  out.rows.conservativeResize(Eigen::NoChange, ds.rows.cols() + extra);
  std::vector<double> raw(ds.space.size());
  for (Eigen::Index i = 0; i < ds.rows.rows(); ++i) {
    for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = ds.rows(i, static_cast<Eigen::Index>(j));
    for (Eigen::Index k = 0; k < extra; ++k) {
      out.rows(i, ds.rows.cols() + k) = eval_derived(ds.space.derived()[static_cast<std::size_t>(k)], raw);
    }
  }
  for (const auto& d : ds.space.derived()) out.columns.push_back(d.name);
  return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.validation < 0 || f.test < 0) throw Error("split fractions must be nonnegative");
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  // The 1e-9 slack absorbs representation error in fractions such as 5/35.
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.test + 1e-9));
  const std::size_t groups = (f.train > 0) + (f.validation > 0) + (f.test > 0);
  if (n < groups) throw Error("fewer rows than nonzero split groups");
  if (n_val + n_test > n) throw Error("split fractions overflow the row count");
  return {n - n_val - n_test, n_val, n_test};
}

Dataset split_dataset(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const auto counts = split_counts(ds.size(), fractions);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset out = ds;
  out.split.assign(ds.size(), SplitTag::train);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < counts[0]; ++k) out.split[order[pos++]] = SplitTag::train;
  for (std::size_t k = 0; k < counts[1]; ++k) out.split[order[pos++]] = SplitTag::validation;
  for (std::size_t k = 0; k < counts[2]; ++k) out.split[order[pos++]] = SplitTag::test;
  return out;
}

MaterialModelName parse_material_model_name(const std::string& name) {
  static const std::regex pattern(R"(^([0-9]+)_([0-9]+)_([0-9]+)_([0-9]+)_d([0-9]+)_r([0-9]+)$)");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) throw ParseError("malformed material model name '" + name + "'");
  MaterialModelName out;
  auto positive = [&](int idx) {
    const int v = std::stoi(m[static_cast<std::size_t>(idx)].str());
    if (v <= 0) throw ParseError("material model name '" + name + "' has a non-positive field");
    return v;
  };
  for (int k = 0; k < 4; ++k) out.layers[static_cast<std::size_t>(k)] = positive(k + 1);
  out.depth = positive(5);
  out.radius = positive(6);
  return out;
}

std::string format_material_model_name(const MaterialModelName& m) {
  std::ostringstream out;
  out << m.layers[0] << '_' << m.layers[1] << '_' << m.layers[2] << '_' << m.layers[3] << "_d" << m.depth << "_r"
      << m.radius;
  return out.str();
}

ParameterSpace parse_parameter_space(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("parameter space: ") + e.what());
  }
  return detail::space_from_json(j);
}

ParameterSpace load_parameter_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open parameter space file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_parameter_space(buf.str());
}

std::string parameter_space_to_json(const ParameterSpace& space) {
  return detail::space_to_json(space).dump(2) + "\n";
}

namespace detail {

void require_known_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw SchemaError(where + ": unknown key '" + key + "'");
  }
}

const json& require_key(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing key '" + key + "'");
  return j.at(key);
}

json space_to_json(const ParameterSpace& space) {
  json params = json::array();
  for (const auto& s : space.specs()) {
    params.push_back({{"name", s.name},
                      {"unit", s.unit},
                      {"lower", s.lower},
                      {"upper", s.upper},
                      {"plausibility", to_string(s.plausibility)}});
  }
  json derived = json::array();
  for (const auto& d : space.derived()) {
    derived.push_back({{"name", d.name},
                       {"kind", to_string(d.kind)},
                       {"operands", {space.spec(d.lhs).name, space.spec(d.rhs).name}}});
  }
  return {{"parameters", params}, {"derived", derived}};
}

ParameterSpace space_from_json(const json& j) {
  try {
    require_known_keys(j, {"parameters", "derived"}, "parameter space");
    std::vector<ParameterSpec> specs;
    for (const auto& p : require_key(j, "parameters", "parameter space")) {
      require_known_keys(p, {"name", "unit", "lower", "upper", "plausibility"}, "parameter");
      ParameterSpec s;
      s.name = require_key(p, "name", "parameter").get<std::string>();
      s.unit = p.value("unit", std::string{});
      s.lower = require_key(p, "lower", "parameter '" + s.name + "'").get<double>();
      s.upper = require_key(p, "upper", "parameter '" + s.name + "'").get<double>();
      s.plausibility = plausibility_from_string(p.value("plausibility", std::string{"unconstrained"}));
      specs.push_back(std::move(s));
    }
    auto index = [&](const std::string& name) {
      for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name == name) return i;
      }
      throw SchemaError("derived feature operand '" + name + "' is not a parameter");
    };
    std::vector<DerivedFeature> derived;
    if (j.contains("derived")) {
      for (const auto& d : j.at("derived")) {
        require_known_keys(d, {"name", "kind", "operands"}, "derived feature");
        DerivedFeature f;
        f.name = require_key(d, "name", "derived feature").get<std::string>();
        f.kind = derived_kind_from_string(require_key(d, "kind", "derived feature '" + f.name + "'").get<std::string>());
        const auto& ops = require_key(d, "operands", "derived feature '" + f.name + "'");
        if (!ops.is_array() || ops.size() != 2) throw SchemaError("derived feature '" + f.name + "' needs 2 operands");
        f.lhs = index(ops[0].get<std::string>());
        f.rhs = index(ops[1].get<std::string>());
        derived.push_back(std::move(f));
      }
    }
    return ParameterSpace(std::move(specs), std::move(derived));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("parameter space: ") + e.what());
  }
}

json scaling_to_json(const ScalingStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

ScalingStats scaling_from_json(const json& j) {
  ScalingStats s;
  s.mean = require_key(j, "mean", "scaling").get<std::vector<double>>();
  s.std = require_key(j, "std", "scaling").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) throw SchemaError("scaling: mean/std length mismatch");
  return s;
}

}  // namespace detail

}  // namespace simgen
