#pragma once

// Analytic stand-ins for the expensive simulations. The constants are
// non-physical; they give a balanced, learnable and monotone toy task.

#include <cstdint>
#include <string>
#include <vector>

#include "simgen/data.hpp"

namespace simgen::oracle {

struct RuptureParams {
  double sigma_xx = -100.0;  // MPa, compressive
  double sigma_yy = -100.0;  // MPa, compressive
  double sigma_xy = 60.0;    // MPa
  double mu_d = 0.4;
  double sdrop = 0.2;  // mu_s - mu_d
  double d_c = 0.4;    // m
  double width = 2.0;  // km
  double height = 1.0; // km
};

struct MaterialConfig {
  double t1 = 6.0;  // layer thicknesses, nm
  double t2 = 2.0;
  double t3 = 9.0;
  double t4 = 1.0;
  double depth = 7.0;      // nm, [3, 7]
  double radius = 10.0;    // nm, [5, 40]
  double distance = 20.0;  // nm along the scratch, [0, 20]
};

/// Continuous breakthrough score; the label is score >= 0.
double rupture_score(const RuptureParams& p);
int rupture_oracle(const RuptureParams& p);

double friction_oracle(const MaterialConfig& m);

RuptureParams rupture_from_row(std::span<const double> row);
MaterialConfig material_from_row(std::span<const double> row);

enum class Kind { rupture, material };

Kind kind_from_string(const std::string& name);
std::string to_string(Kind k);

/// Parameter space (with derived features) used by the bundled configs.
ParameterSpace rupture_space();
ParameterSpace material_space();

/// Default uniform sampling box; the spec bounds of the default spaces.
std::vector<Interval> default_box(Kind kind);

/// n rows uniform over `box`, labelled by the oracle. Sampled values are
/// rounded to the artifact text precision before labelling, so labels
/// recomputed from a written and re-read dataset match exactly.
Dataset synth_dataset(Kind kind, std::size_t n, std::uint64_t seed, const std::vector<Interval>& box);
Dataset synth_dataset(Kind kind, std::size_t n, std::uint64_t seed);

}  // namespace simgen::oracle
