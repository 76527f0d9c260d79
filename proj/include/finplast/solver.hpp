#pragma once

// Incremental minimization: alternating y / P solves per time step, causal history for K_tau.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "finplast/dissipation.hpp"
#include "finplast/errors.hpp"
#include "finplast/flowrule.hpp"
#include "finplast/grid.hpp"
#include "finplast/material.hpp"
#include "finplast/mollify.hpp"
#include "finplast/tensor.hpp"
#include "finplast/trajectory.hpp"

namespace finplast {

// ---- generic smooth minimizer ---------------------------------------------------

struct LbfgsOptions {
  int max_iterations = 2000;
  int memory = 12;
  double gtol = 1e-9;  ///< stop when the max-norm of the gradient is below this
  double f_noise = 1e-14;  ///< relative rounding level of f; below it steps are judged by the gradient
};

struct LbfgsResult {
  int iterations = 0;
  bool converged = false;
  double f = 0.0;
  double gnorm = 0.0;  ///< max-norm of the final gradient
};

/// Objective callback: returns f(x) and writes the gradient into g.
using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

/// Limited-memory BFGS with monotone Armijo backtracking. x holds the best iterate on return.
inline LbfgsResult lbfgs_minimize(std::vector<double>& x, const ObjectiveFn& fg, const LbfgsOptions& opt = {}) {
  const std::size_t n = x.size();
  LbfgsResult res;
  std::vector<double> g(n), gn(n), d(n), xn(n);
  double f = fg(x, g);
  auto maxabs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  std::deque<std::vector<double>> ss, ys;
  std::deque<double> rhos;
  res.f = f;
  res.gnorm = maxabs(g);
  if (n == 0 || res.gnorm <= opt.gtol) {
    res.converged = true;
    return res;
  }
  for (int it = 0; it < opt.max_iterations; ++it) {
    // two-loop recursion
    d = g;
    std::vector<double> alpha(ss.size());
    for (std::size_t k = ss.size(); k-- > 0;) {
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += ss[k][i] * d[i];
      a *= rhos[k];
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) d[i] -= a * ys[k][i];
    }
    double gamma = 1.0;
    if (!ss.empty()) {
      double sy = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += ss.back()[i] * ys.back()[i];
        yy += ys.back()[i] * ys.back()[i];
      }
      gamma = sy / yy;
    } else {
      double g2 = 0.0;
      for (double e : g) g2 += e * e;
      gamma = 1e-2 / std::sqrt(g2);
    }
    for (auto& e : d) e *= gamma;
    for (std::size_t k = 0; k < ss.size(); ++k) {
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += ys[k][i] * d[i];
      b *= rhos[k];
      for (std::size_t i = 0; i < n; ++i) d[i] += ss[k][i] * (alpha[k] - b);
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = -d[i];
      slope += d[i] * g[i];
    }
    if (!(slope < 0.0)) {
      ss.clear();
      ys.clear();
      rhos.clear();
      double g2 = 0.0;
      for (double e : g) g2 += e * e;
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i] * 1e-2 / std::sqrt(g2);
      slope = 0.0;
      for (std::size_t i = 0; i < n; ++i) slope += d[i] * g[i];
    }
    double t = 1.0;
    double fnew = f;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + t * d[i];
      fnew = fg(xn, gn);
      if (!std::isfinite(fnew)) {
        t *= 0.5;
        continue;
      }
      // near the optimum f stalls at rounding level; then accept on a smaller gradient
      const bool armijo = fnew <= f + 1e-4 * t * slope;
      const bool flat = fnew <= f + opt.f_noise * std::max(1.0, std::abs(f)) && maxabs(gn) < maxabs(g);
      if (armijo || flat) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    res.iterations = it + 1;
    if (!ok) break;  // no representable decrease left
    std::vector<double> s(n), y(n);
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      y[i] = gn[i] - g[i];
      sy += s[i] * y[i];
    }
    x = xn;
    g = gn;
    f = fnew;
    if (sy > 1e-16) {
      ss.push_back(std::move(s));
      ys.push_back(std::move(y));
      rhos.push_back(1.0 / sy);
      if (static_cast<int>(ss.size()) > opt.memory) {
        ss.pop_front();
        ys.pop_front();
        rhos.pop_front();
      }
    }
    res.f = f;
    res.gnorm = maxabs(g);
    if (res.gnorm <= opt.gtol) {
      res.converged = true;
      return res;
    }
  }
  res.f = f;
  res.gnorm = maxabs(g);
  res.converged = res.gnorm <= opt.gtol;
  return res;
}

// ---- policy and problem ---------------------------------------------------------

struct SolverPolicy {
  int max_outer = 200;
  double inner_tol = 1e-9;  ///< stop alternating once the objective decrease falls below this
  int y_max_iterations = 3000;
  double y_gtol = 1e-9;  ///< max-norm of the nodal gradient
  int p_max_iterations = 3000;
  double p_tol = 1e-9;  ///< max-norm of the proximal gradient mapping per unit volume
  int stability_competitors = 50;
  PathPolicy path{};

  void validate() const {
    if (!(inner_tol > 0.0) || !(y_gtol > 0.0) || !(p_tol > 0.0))
      throw Error(ErrorKind::InvalidArgument, "solver tolerances must be positive");
    if (max_outer < 1 || y_max_iterations < 1 || p_max_iterations < 1)
      throw Error(ErrorKind::InvalidArgument, "solver iteration limits must be positive");
    path.validate();
  }
};

/// Everything the time loop needs.
struct Problem {
  std::shared_ptr<const Grid> grid;
  MaterialParams params;
  LoadProgram loads;
  Kernels kernels;
  SolverPolicy policy;
  double tau = 0.05;
  std::size_t nsteps = 20;
  std::vector<Mat3> P0;  ///< empty means P0 = I
  std::uint64_t seed = 1;

  double t_end() const { return tau * static_cast<double>(nsteps); }
};

// ---- y subproblem ---------------------------------------------------------------

struct SolveInfo {
  int iterations = 0;
  bool converged = true;
  double residual = 0.0;
};

/// Minimizes E(t, ., P) over the free nodes with P held fixed.
inline SolveInfo minimize_y(StateField& s, double t, const MaterialParams& p, const LoadProgram& loads,
                            const SolverPolicy& pol, const ObjectiveFn* override_objective = nullptr) {
  const Grid& g = s.grid();
  const auto& free = g.free_nodes();
  std::vector<double> x(3 * free.size());
  for (std::size_t k = 0; k < free.size(); ++k)
    for (std::size_t d = 0; d < 3; ++d) x[3 * k + d] = s.y()[free[k]][d];

  std::vector<Mat3> pinv(g.num_cells());
  for (std::size_t c = 0; c < pinv.size(); ++c) pinv[c] = detail::checked_inverse(s.P()[c]);
  const std::vector<Vec3> force = loads.nodal_force(t);
  const double vol = g.cell_volume();
  std::vector<Vec3> y = s.y();

  ObjectiveFn fg = [&](const std::vector<double>& xv, std::vector<double>& grad) {
    for (std::size_t k = 0; k < free.size(); ++k)
      for (std::size_t d = 0; d < 3; ++d) y[free[k]][d] = xv[3 * k + d];
    const auto fy = gradient_y(g, y);
    std::vector<double> w(fy.size());
    std::vector<Mat3> stress(fy.size());
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < fy.size(); ++c) {
      const Mat3 fe = fy[c] * pinv[c];
      w[c] = elastic_density(fe, p);
      stress[c] = vol * (elastic_gradient(fe, p) * transpose(pinv[c]));
    }
    double e = 0.0;
    for (double v : w) e += v;
    e *= vol;
    for (std::size_t v = 0; v < y.size(); ++v) e -= dot(force[v], y[v]);
    auto nodal = gradient_y_adjoint(g, stress);
    if (p.hourglass != 0.0) {
      auto hg = hourglass_y(g, y);
      for (auto& cell : hg)
        for (auto& m : cell) {
          e += 0.5 * p.hourglass * vol * dot(m, m);
          m = (p.hourglass * vol) * m;
        }
      const auto hn = hourglass_y_adjoint(g, hg);
      for (std::size_t v = 0; v < nodal.size(); ++v) nodal[v] += hn[v];
    }
    grad.resize(xv.size());
    for (std::size_t k = 0; k < free.size(); ++k)
      for (std::size_t d = 0; d < 3; ++d) grad[3 * k + d] = nodal[free[k]][d] - force[free[k]][d];
    return e;
  };

  LbfgsOptions opt;
  opt.max_iterations = pol.y_max_iterations;
  opt.gtol = pol.y_gtol;
  const LbfgsResult r = lbfgs_minimize(x, override_objective ? *override_objective : fg, opt);
  for (std::size_t k = 0; k < free.size(); ++k)
    for (std::size_t d = 0; d < 3; ++d) y[free[k]][d] = x[3 * k + d];
  s.set_y(std::move(y));
  s.refresh();
  return {r.iterations, r.converged, r.gnorm};
}

// ---- P subproblem ---------------------------------------------------------------

/// Force N* with N* P_new^T = L(A^T, N(F, P_new) P_prev^T), conjugate to A in P_new = exp(A) P_prev.
inline Mat3 conjugate_update_force(const Mat3& f, const Mat3& p_prev, const Mat3& a, const MaterialParams& p) {
  const Mat3 p_new = expm(a) * p_prev;
  const Mat3 m = expm_frechet_adjoint(a, thermo_force(f, p_new, p) * transpose(p_prev));
  return m * transpose(detail::checked_inverse(p_new));
}

namespace detail {

struct PContext {
  const Grid* g;
  const std::vector<Mat3>* fy;
  const std::vector<Mat3>* fhat;
  const std::vector<Mat3>* p_prev;
  const MaterialParams* p;
  const PathPolicy* path;
  std::vector<double> w0;  // weight at A = 0 per cell
};

inline std::vector<Mat3> p_of(const PContext& ctx, const std::vector<Mat3>& a) {
  std::vector<Mat3> pm(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) pm[c] = renormalize_sl3(expm(a[c]) * (*ctx.p_prev)[c]);
  return pm;
}

// smooth stored energy in the A variables (only the P-dependent part)
inline double p_smooth(const PContext& ctx, const std::vector<Mat3>& pm) {
  const auto dp = gradient_P(*ctx.g, pm);
  std::vector<double> e(pm.size());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < pm.size(); ++c) e[c] = cell_energy_density((*ctx.fy)[c], pm[c], dp[c], *ctx.p);
  double s = 0.0;
  for (double v : e) s += v;
  return s * ctx.g->cell_volume();
}

inline std::vector<Mat3> p_smooth_gradient(const PContext& ctx, const std::vector<Mat3>& a, const std::vector<Mat3>& pm) {
  const double vol = ctx.g->cell_volume();
  const auto dp = gradient_P(*ctx.g, pm);
  std::vector<Mat33> dpsi(pm.size());
  for (std::size_t c = 0; c < pm.size(); ++c) dpsi[c] = gradient_term_gradient(dp[c], *ctx.p);
  const auto adj = gradient_P_adjoint(*ctx.g, dpsi);
  std::vector<Mat3> grad(a.size());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < a.size(); ++c) {
    const Mat3 gp = vol * (adj[c] - thermo_force((*ctx.fy)[c], pm[c], *ctx.p));
    grad[c] = deviator(expm_frechet_adjoint(a[c], gp * transpose((*ctx.p_prev)[c])));
  }
  return grad;
}

inline double cell_weight(const PContext& ctx, std::size_t c, const Mat3& a) {
  return single_log_weight((*ctx.fhat)[c], (*ctx.p_prev)[c], a, *ctx.p, *ctx.path);
}

// vol * sum_c w_c(A_c)|A_c|
inline double p_dissipation(const PContext& ctx, const std::vector<Mat3>& a, std::vector<double>* weights = nullptr) {
  std::vector<double> d(a.size(), 0.0);
  if (weights) weights->assign(a.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double na = norm(a[c]);
    const double w = na > 0.0 ? cell_weight(ctx, c, a[c]) : ctx.w0[c];
    if (weights) (*weights)[c] = w;
    d[c] = w * na;
  }
  double s = 0.0;
  for (double v : d) s += v;
  return s * ctx.g->cell_volume();
}

// gradient of vol * (w_c(A) - w_c(0))|A_c|, zero at A_c = 0
inline std::vector<Mat3> p_weight_gradient(const PContext& ctx, const std::vector<Mat3>& a) {
  const double vol = ctx.g->cell_volume();
  std::vector<Mat3> grad(a.size());
  const auto& basis = sl3_basis();
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double na = norm(a[c]);
    if (na == 0.0) continue;
    const double w = cell_weight(ctx, c, a[c]);
    Mat3 dw;
    const double h = 1e-6;
    for (const auto& e : basis) dw += ((cell_weight(ctx, c, a[c] + h * e) - cell_weight(ctx, c, a[c] - h * e)) / (2.0 * h)) * e;
    grad[c] = vol * ((w - ctx.w0[c]) * (a[c] / na) + na * dw);
  }
  return grad;
}

}  // namespace detail

/// Relative rounding level of the P objective; smaller changes are not resolved.
inline constexpr double kPNoise = 1e-13;

struct PSolveInfo {
  int iterations = 0;
  bool converged = true;
  double residual = 0.0;  ///< max-norm of the gradient mapping per unit volume
  double objective = 0.0;
};

/// Minimizes the P-dependent stored energy plus the single-log dissipation model over
/// P = exp(A) P_prev, A traceless per cell, by proximal gradient with group shrinkage.
/// a holds the warm start on entry and the minimizer on return.
inline PSolveInfo minimize_P(StateField& s, const std::vector<Mat3>& p_prev, const std::vector<Mat3>& fhat,
                             const MaterialParams& p, const SolverPolicy& pol, std::vector<Mat3>& a) {
  const Grid& g = s.grid();
  if (p_prev.size() != g.num_cells() || fhat.size() != g.num_cells())
    throw Error(ErrorKind::GridMismatch, "minimize_P: fields are not on the state grid");
  if (a.size() != g.num_cells()) a.assign(g.num_cells(), Mat3{});
  const double vol = g.cell_volume();
  const auto fy = s.grad_y();

  detail::PContext ctx{&g, &fy, &fhat, &p_prev, &p, &pol.path, {}};
  ctx.w0.resize(g.num_cells());
  for (std::size_t c = 0; c < ctx.w0.size(); ++c)
    ctx.w0[c] = gap_r(p_prev[c], thermo_force(fhat[c], p_prev[c], p), p.flow);

  auto smooth_total = [&](const std::vector<Mat3>& av, const std::vector<Mat3>& pm, double& diss) {
    std::vector<double> wts;
    diss = detail::p_dissipation(ctx, av, &wts);
    double extra = 0.0;
    for (std::size_t c = 0; c < av.size(); ++c) extra += (wts[c] - ctx.w0[c]) * norm(av[c]);
    return detail::p_smooth(ctx, pm) + vol * extra;
  };
  auto nonsmooth = [&](const std::vector<Mat3>& av) {
    double s0 = 0.0;
    for (std::size_t c = 0; c < av.size(); ++c) s0 += ctx.w0[c] * norm(av[c]);
    return vol * s0;
  };

  std::vector<Mat3> pm = detail::p_of(ctx, a);
  double diss = 0.0;
  double sm = smooth_total(a, pm, diss);
  double obj = sm + nonsmooth(a);

  // step bound from the curvature scale of the cell energies
  double step = 1.0 / (vol * 20.0 * (p.alpha + p.beta + p.gamma_det + p.h_p + 1.0));
  const double step0 = step;
  const double step_max = 1e3 * step;
  PSolveInfo info;
  info.converged = false;
  std::vector<Mat3> a_old, grad_old;
  for (int it = 0;; ++it) {
    std::vector<Mat3> grad = detail::p_smooth_gradient(ctx, a, pm);
    const auto gw = detail::p_weight_gradient(ctx, a);
    for (std::size_t c = 0; c < grad.size(); ++c) grad[c] = deviator(grad[c] + gw[c]);
    if (!a_old.empty()) {  // Barzilai-Borwein trial step
      double ss = 0.0, sy = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const Mat3 da = a[c] - a_old[c];
        ss += dot(da, da);
        sy += dot(da, grad[c] - grad_old[c]);
      }
      if (sy > 0.0 && ss > 0.0) step = std::min(ss / sy, step_max);
    }
    a_old = a;
    grad_old = grad;

    // stationarity: gradient mapping at the fixed reference step
    auto prox = [&](std::size_t c, double st) {
      const Mat3 v = a[c] - st * grad[c];
      const double nv = norm(v);
      const double thr = st * vol * ctx.w0[c];
      return nv > thr ? deviator((1.0 - thr / nv) * v) : Mat3{};
    };
    double residual = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) residual = std::max(residual, norm(prox(c, step0) - a[c]) / step0 / vol);
    info.iterations = it;
    info.residual = residual;
    if (residual <= pol.p_tol) {
      info.converged = true;
      break;
    }
    if (it >= pol.p_max_iterations) break;

    bool accepted = false;
    std::vector<Mat3> an(a.size()), pn;
    double smn = 0.0, dissn = 0.0;
    const double noise = kPNoise * std::max(1.0, std::abs(obj));
    for (int ls = 0; ls < 60; ++ls) {
      double lin = 0.0, quad = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        an[c] = prox(c, step);
        const Mat3 dlt = an[c] - a[c];
        lin += dot(grad[c], dlt);
        quad += dot(dlt, dlt);
      }
      if (quad == 0.0) break;
      pn = detail::p_of(ctx, an);
      smn = smooth_total(an, pn, dissn);
      const double objn = smn + nonsmooth(an);
      if (std::isfinite(smn) && smn <= sm + lin + quad / (2.0 * step) + noise && objn <= obj + noise) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    a = an;
    pm = pn;
    sm = smn;
    diss = dissn;
    obj = smn + nonsmooth(an);
  }
  s.set_P(pm);
  s.refresh();
  info.objective = obj;
  return info;
}

// ---- time stepping --------------------------------------------------------------

/// Incremental objective E(t, y, P) + model dissipation from P_prev, A = log(P P_prev^-1) per cell.
inline double step_objective(const StateField& s, double t, const std::vector<Mat3>& p_prev,
                             const std::vector<Mat3>& fhat, const std::vector<Mat3>& a, const MaterialParams& p,
                             const LoadProgram& loads, const PathPolicy& path) {
  const auto fy = s.grad_y();
  detail::PContext ctx{&s.grid(), &fy, &fhat, &p_prev, &p, &path, {}};
  ctx.w0.resize(p_prev.size());
  for (std::size_t c = 0; c < p_prev.size(); ++c)
    ctx.w0[c] = gap_r(p_prev[c], thermo_force(fhat[c], p_prev[c], p), p.flow);
  return total_energy(s, t, p, loads) + detail::p_dissipation(ctx, a);
}

/// Stable initial deformation for P0 at t = t_begin.
inline StateField initial_state(const std::vector<Mat3>& p0, const MaterialParams& p,
                                const std::shared_ptr<const Grid>& grid, const LoadProgram& loads,
                                const SolverPolicy& pol) {
  StateField s(grid, grid->identity_deformation(), p0);
  s.refresh();
  const SolveInfo info = minimize_y(s, loads.t_begin(), p, loads, pol);
  if (!info.converged) throw Error(ErrorKind::NonConvergence, "initial deformation did not converge");
  return s;
}

/// Starts a trajectory at the initial state.
inline Trajectory start_trajectory(const Problem& pr) {
  pr.policy.validate();
  Trajectory traj;
  traj.tau = pr.tau;
  std::vector<Mat3> p0 = pr.P0.empty() ? std::vector<Mat3>(pr.grid->num_cells(), Mat3::identity()) : pr.P0;
  StateField s0 = initial_state(p0, pr.params, pr.grid, pr.loads, pr.policy);
  const double t0 = 0.0;
  StepRecord rec;
  rec.step = 0;
  rec.t = t0;
  rec.stored = stored_energy(s0, pr.params);
  rec.work = pr.loads.work(s0.y(), t0);
  rec.energy = rec.stored - rec.work;
  rec.power = -pr.loads.power(s0.y(), t0);
  traj.times.push_back(t0);
  traj.grad_y_history.push_back(s0.grad_y());
  traj.mollified.push_back(std::vector<Mat3>(pr.grid->num_cells()));
  traj.states.push_back(std::move(s0));
  traj.records.push_back(rec);
  return traj;
}

/// Step i: minimizes E(t_i, y, P) + D((K_tau grad y)_{i-1}, P_{i-1}, P) from (y_{i-1}, P_{i-1}).
inline const StateField& incremental_step(Trajectory& traj, const Problem& pr) {
  const std::size_t i = traj.states.size();
  if (i == 0) throw Error(ErrorKind::InvalidArgument, "trajectory has no initial state");
  const double t = pr.tau * static_cast<double>(i);
  const double t_prev = traj.times.back();
  const MaterialParams& p = pr.params;
  const SolverPolicy& pol = pr.policy;
  const StateField& prev = traj.states.back();
  const std::vector<Mat3>& fhat = traj.mollified[i - 1];
  const std::vector<Mat3> p_prev = prev.P();

  StateField s = prev;
  s.refresh();
  std::vector<Mat3> a(p_prev.size());
  double obj = step_objective(s, t, p_prev, fhat, a, p, pr.loads, pol.path);
  SolveInfo yi = minimize_y(s, t, p, pr.loads, pol);
  PSolveInfo pcheck;
  int outer = 0;
  bool converged = false;
  SolverPolicy probe_policy = pol;
  probe_policy.p_max_iterations = 0;
  for (outer = 1; outer <= pol.max_outer; ++outer) {
    minimize_P(s, p_prev, fhat, p, pol, a);
    yi = minimize_y(s, t, p, pr.loads, pol);
    const double objn = step_objective(s, t, p_prev, fhat, a, p, pr.loads, pol.path);
    const double decrease = obj - objn;
    obj = objn;
    // stationarity in P at the final y
    std::vector<Mat3> a_probe = a;
    StateField probe = s;
    pcheck = minimize_P(probe, p_prev, fhat, p, probe_policy, a_probe);
    if (decrease < pol.inner_tol && yi.converged && pcheck.converged) {
      converged = true;
      break;
    }
  }
  StepRecord rec;
  rec.step = i;
  rec.t = t;
  rec.stored = stored_energy(s, p);
  rec.work = pr.loads.work(s.y(), t);
  rec.energy = rec.stored - rec.work;
  rec.power = -pr.loads.power(s.y(), t);
  rec.power_increment = -(pr.loads.work(prev.y(), t) - pr.loads.work(prev.y(), t_prev));
  rec.dissipation = dissipation_integral(s.grid(), fhat, p_prev, s.P(), p, pol.path);
  rec.cum_dissipation = traj.records.back().cum_dissipation + rec.dissipation;
  rec.y_residual = yi.residual;
  rec.p_residual = pcheck.residual;
  rec.outer_iterations = std::min(outer, pol.max_outer);
  rec.converged = converged;

  traj.times.push_back(t);
  traj.grad_y_history.push_back(s.grad_y());
  traj.mollified.push_back(mollified_gradient(s.grid(), traj.grad_y_history, i, pr.tau, pr.kernels));
  traj.states.push_back(std::move(s));
  traj.records.push_back(rec);
  return traj.states.back();
}

/// Full time loop t_0 = 0, ..., t_n = n tau.
inline Trajectory run_evolution(const Problem& pr, const std::function<void(const StepRecord&)>& on_step = {}) {
  if (pr.t_end() > pr.loads.t_end() + 1e-12 * std::max(1.0, pr.t_end()))
    throw Error(ErrorKind::TimeOutOfRange, "time horizon exceeds the load program");
  Trajectory traj = start_trajectory(pr);
  if (on_step) on_step(traj.records.back());
  for (std::size_t i = 1; i <= pr.nsteps; ++i) {
    incremental_step(traj, pr);
    if (on_step) on_step(traj.records.back());
  }
  return traj;
}

}  // namespace finplast
