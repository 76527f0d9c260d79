#pragma once

// Trajectory persistence (CSV summary, JSON with full fields), VTK and CSV field dumps,
// and report output.

#include <ostream>
#include <string>

#include "finplast/config.hpp"
#include "finplast/diagnostics.hpp"
#include "finplast/solver.hpp"
#include "finplast/trajectory.hpp"

namespace finplast {

namespace detail {
/// %.17g: reads back to the same double
std::string fmt(double v);
}  // namespace detail

extern const char* const kTrajectoryCsvHeader;

/// One row per time step including step 0. balance_residual is the discrete upper-estimate gap
/// E_i + Diss - E_0 - sum of power increments, so it is <= 0 up to solver error.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

/// Full trajectory with the scenario text and seed embedded, so checks can be rerun from the file alone.
void write_trajectory_json(const std::string& path, const Trajectory& traj, const ScenarioSpec& sc);

struct LoadedTrajectory {
  ScenarioSpec spec;
  Problem problem;
  Trajectory traj;
};

/// Reads a trajectory written by write_trajectory_json and rebuilds the gradient and
/// mollified histories with the embedded scenario.
LoadedTrajectory read_trajectory_json(const std::string& path);

/// Legacy VTK structured points: nodal displacement y - x, cell-wise P and det(grad y).
void write_vtk(const std::string& path, const StateField& s, double t);

/// Flat CSV: cell index, the 9 entries of P (row-major), y averaged over the cell's nodes.
void write_fields_csv(const std::string& path, const StateField& s);

void write_report_text(std::ostream& out, const DiagnosticsReport& rep);
void write_report_csv(std::ostream& out, const DiagnosticsReport& rep);

}  // namespace finplast
