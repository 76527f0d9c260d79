#pragma once

// Scenario files: INI-style [section] key = value text.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/grid.hpp"
#include "finplast/material.hpp"
#include "finplast/mollify.hpp"
#include "finplast/solver.hpp"

namespace finplast {

/// Parsed scenario values, before the grid-dependent objects are built.
struct ScenarioSpec {
  std::array<double, 3> extent{1.0, 1.0, 1.0};
  std::array<int, 3> cells{4, 4, 4};
  std::vector<BoxFace> clamped{{0, 0}};

  MaterialParams params;

  double lambda = 10.0;        ///< time kernel decay rate, 1/time
  double radius_cells = 2.0;   ///< Gaussian stencil radius

  LoadInterpolation interpolation = LoadInterpolation::Linear;
  std::vector<double> knot_times{0.0, 1.0};
  std::vector<Vec3> body{{0, 0, 0}, {0, 0, 0}};
  BoxFace traction_face{0, 1};
  std::vector<Vec3> traction{{0, 0, 0}, {0, 0, 0}};

  double tau = 0.05;
  double t_end = 1.0;

  SolverPolicy policy;

  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool dump_fields = false;

  std::string source;  ///< raw config text, kept for provenance in outputs

  /// Number of steps; tau must divide t_end.
  std::size_t nsteps() const {
    const double n = t_end / tau;
    const double r = std::round(n);
    if (!(tau > 0.0) || r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, n))
      throw Error(ErrorKind::ConfigError, "time.tau_time must divide time.t_end_time");
    return static_cast<std::size_t>(r);
  }
};

/// Parses scenario text. Unknown keys and malformed values raise ConfigError naming section.key.
ScenarioSpec parse_scenario(const std::string& text);

ScenarioSpec load_scenario(const std::string& path);

/// Builds the grid, loads, kernels and policy. Validation failures are reported as ConfigError
/// with the section they came from.
Problem build_problem(const ScenarioSpec& sc);

}  // namespace finplast
