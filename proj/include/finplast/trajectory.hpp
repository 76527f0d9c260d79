#pragma once

// Time-indexed record of a discrete evolution.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/material.hpp"

namespace finplast {

struct StepRecord {
  std::size_t step = 0;
  double t = 0.0;
  double energy = 0.0;           ///< E(t_i, y_i, P_i)
  double stored = 0.0;           ///< stored energy at (y_i, P_i)
  double work = 0.0;             ///< <l(t_i), y_i>
  double power = 0.0;            ///< dE/dt = -<l'(t_i), y_i>
  double dissipation = 0.0;      ///< D((K_tau grad y)_{i-1}, P_{i-1}, P_i)
  double cum_dissipation = 0.0;  ///< sum of dissipation over steps 1..i
  double power_increment = 0.0;  ///< E(t_i, y_{i-1}, P_{i-1}) - E(t_{i-1}, y_{i-1}, P_{i-1})
  double y_residual = 0.0;       ///< final max-norm of the y gradient
  double p_residual = 0.0;       ///< final max-norm of the P gradient mapping per unit volume
  int outer_iterations = 0;
  bool converged = true;
};

struct Trajectory {
  double tau = 0.0;
  std::vector<double> times;
  std::vector<StateField> states;
  std::vector<StepRecord> records;
  std::vector<std::vector<Mat3>> grad_y_history;  ///< grad y_i
  std::vector<std::vector<Mat3>> mollified;       ///< (K_tau grad y)_i

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

/// Sum of the recorded dissipation increments of the steps (t_{i-1}, t_i] with s <= t_{i-1} < t.
/// For windows on grid times this is exact and additive under splitting.
inline double total_dissipation(const Trajectory& traj, double s, double t) {
  if (traj.records.empty()) throw Error(ErrorKind::WindowOutOfRange, "empty trajectory");
  const double t0 = traj.times.front(), tn = traj.times.back();
  const double tol = 1e-12 * std::max(1.0, std::abs(tn));
  if (s > t + tol || s < t0 - tol || t > tn + tol) throw Error(ErrorKind::WindowOutOfRange, "window outside the trajectory");
  double sum = 0.0;
  for (std::size_t i = 1; i < traj.records.size(); ++i) {
    const double a = traj.times[i - 1];
    if (a >= s - tol && a < t - tol) sum += traj.records[i].dissipation;
  }
  return sum;
}

}  // namespace finplast
