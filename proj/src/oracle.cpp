#include "simgen/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <span>

namespace simgen::oracle {

namespace {

constexpr double kBarrierArea = 4.0;  // km^2
constexpr double kSlipScale = 0.8;    // m
constexpr double kScratchScale = 4.0; // nm

void check(bool ok, const char* what) {
  if (!ok) throw Error(std::string("oracle precondition violated: ") + what);
}

double quantize(double x) { return std::strtod(format_real(x).c_str(), nullptr); }

}  // namespace

double rupture_score(const RuptureParams& p) {
  check(p.sigma_xx < 0.0 && p.sigma_yy < 0.0, "normal stresses must be compressive (negative)");
  check(p.sigma_xy > 0.0, "shear stress must be positive");
  check(p.mu_d > 0.0 && p.mu_d < 1.0, "mu_d must lie in (0,1)");
  check(p.sdrop > 0.0, "sdrop must be positive");
  check(p.mu_d + p.sdrop < 1.5, "mu_s = mu_d + sdrop must be < 1.5");
  check(p.d_c > 0.0, "d_c must be positive");
  check(p.width > 0.0 && p.height > 0.0, "barrier width and height must be positive");

  const double normal = std::abs(p.sigma_yy);
  const double strength_excess = (p.sigma_xy - p.mu_d * normal) / (p.sdrop * normal);
  const double stress_contrast = (p.sigma_xx - p.sigma_yy) / normal;
  const double area = p.height * p.width;
  const double barrier = area / (area + kBarrierArea);
  const double weakening = p.d_c / kSlipScale;
  return 2.0 * strength_excess + 0.3 * stress_contrast - 1.5 * barrier - 0.8 * weakening - 0.25;
}

int rupture_oracle(const RuptureParams& p) { return rupture_score(p) >= 0.0 ? 1 : 0; }

double friction_oracle(const MaterialConfig& m) {
  check(m.t1 > 0 && m.t2 > 0 && m.t3 > 0 && m.t4 > 0, "layer thicknesses must be positive");
  check(m.depth >= 3.0 && m.depth <= 7.0, "indenter depth must lie in [3,7] nm");
  check(m.radius >= 5.0 && m.radius <= 40.0, "indenter radius must lie in [5,40] nm");
  check(m.distance >= 0.0 && m.distance <= 20.0, "scratch distance must lie in [0,20] nm");
  const double plateau = std::clamp(0.35 + 0.02 * m.t2 - 0.005 * m.radius + 0.01 * m.depth, 0.05, 1.0);
  return plateau * std::tanh(m.distance / kScratchScale);
}

RuptureParams rupture_from_row(std::span<const double> r) {
  if (r.size() != 8) throw SchemaError("rupture row needs 8 parameters");
  return {r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]};
}

MaterialConfig material_from_row(std::span<const double> r) {
  if (r.size() != 7) throw SchemaError("material row needs 7 parameters");
  return {r[0], r[1], r[2], r[3], r[4], r[5], r[6]};
}

Kind kind_from_string(const std::string& name) {
  if (name == "rupture") return Kind::rupture;
  if (name == "material") return Kind::material;
  throw ConfigError("unknown dataset kind '" + name + "' (expected rupture or material)");
}

std::string to_string(Kind k) { return k == Kind::rupture ? "rupture" : "material"; }

ParameterSpace rupture_space() {
  using P = Plausibility;
  std::vector<ParameterSpec> specs = {
      {"sigma_xx", "MPa", -120.0, -60.0, P::negative}, {"sigma_yy", "MPa", -120.0, -60.0, P::negative},
      {"sigma_xy", "MPa", 30.0, 90.0, P::positive},    {"mu_d", "dimensionless", 0.2, 0.6, P::unit_interval},
      {"sdrop", "dimensionless", 0.1, 0.5, P::positive}, {"dc", "m", 0.1, 0.8, P::positive},
      {"width", "km", 0.5, 6.0, P::positive},          {"height", "km", 0.1, 3.0, P::positive},
  };
  std::vector<DerivedFeature> derived = {
      {"width_over_height", DerivedKind::ratio, 6, 7},
      {"normal_stress_difference", DerivedKind::difference, 0, 1},
      {"friction_product", DerivedKind::product, 3, 4},
      {"friction_difference", DerivedKind::difference, 3, 4},
  };
  return ParameterSpace(std::move(specs), std::move(derived));
}

ParameterSpace material_space() {
  using P = Plausibility;
  std::vector<ParameterSpec> specs = {
      {"t1", "nm", 1.0, 10.0, P::positive},     {"t2", "nm", 1.0, 10.0, P::positive},
      {"t3", "nm", 1.0, 10.0, P::positive},     {"t4", "nm", 1.0, 10.0, P::positive},
      {"depth", "nm", 3.0, 7.0, P::positive},   {"radius", "nm", 5.0, 40.0, P::positive},
      {"distance", "nm", 0.0, 20.0, P::nonnegative},
  };
  std::vector<DerivedFeature> derived = {{"depth_over_radius", DerivedKind::ratio, 4, 5}};
  return ParameterSpace(std::move(specs), std::move(derived));
}

std::vector<Interval> default_box(Kind kind) {
  const auto space = kind == Kind::rupture ? rupture_space() : material_space();
  std::vector<Interval> box;
  for (const auto& s : space.specs()) box.push_back({s.lower, s.upper});
  return box;
}

Dataset synth_dataset(Kind kind, std::size_t n, std::uint64_t seed, const std::vector<Interval>& box) {
  if (n < 1) throw Error("synth_dataset: n must be >= 1");
  auto space = kind == Kind::rupture ? rupture_space() : material_space();
  if (box.size() != space.size()) throw Error("synth_dataset: sampling box has wrong dimension");
  for (std::size_t j = 0; j < box.size(); ++j) {
    if (!(box[j].lo < box[j].hi) || !std::isfinite(box[j].lo) || !std::isfinite(box[j].hi)) {
      throw Error("synth_dataset: invalid box for '" + space.spec(j).name + "'");
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(box.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<double> row(box.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < box.size(); ++j) {
      row[j] = quantize(box[j].lo + unit(rng) * box[j].width());
      rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    const double out = kind == Kind::rupture ? static_cast<double>(rupture_oracle(rupture_from_row(row)))
                                             : quantize(friction_oracle(material_from_row(row)));
    y[static_cast<Eigen::Index>(i)] = out;
  }
  return make_dataset(std::move(space), std::move(rows), std::move(y),
                      kind == Kind::rupture ? Task::binary : Task::regression);
}

Dataset synth_dataset(Kind kind, std::size_t n, std::uint64_t seed) {
  return synth_dataset(kind, n, seed, default_box(kind));
}

}  // namespace simgen::oracle
