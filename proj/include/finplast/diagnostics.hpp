#pragma once

// Numerical checks on computed trajectories: discrete stability, energy balance,
// coercivity and Gronwall bounds, the small-strain limit, and metric properties of D.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "finplast/dissipation.hpp"
#include "finplast/errors.hpp"
#include "finplast/flowrule.hpp"
#include "finplast/grid.hpp"
#include "finplast/material.hpp"
#include "finplast/solver.hpp"
#include "finplast/tensor.hpp"
#include "finplast/trajectory.hpp"

namespace finplast {

struct CheckResult {
  std::string name;
  bool passed = false;
  double slack = 0.0;  ///< measured worst slack; meaning depends on the check
  std::map<std::string, double> constants;
  double runtime = 0.0;  ///< seconds
  std::string detail;
};

struct DiagnosticsReport {
  std::vector<CheckResult> checks;

  void add(CheckResult r) {
    for (const auto& c : checks)
      if (c.name == r.name) throw Error(ErrorKind::InvalidArgument, "duplicate check: " + r.name);
    checks.push_back(std::move(r));
  }
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline Mat3 random_traceless(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat3 a;
  for (auto& v : a.m) v = nd(rng);
  a = deviator(a);
  return a / norm(a);
}

inline void check_index(const Trajectory& traj, std::size_t i) {
  if (i >= traj.states.size() || traj.records.size() != traj.states.size())
    throw Error(ErrorKind::InvalidArgument, "step index outside the trajectory");
}

}  // namespace detail

// ---- stability -------------------------------------------------------------------

struct StabilityReport {
  std::size_t step = 0;
  double worst_slack = -std::numeric_limits<double>::infinity();
  std::vector<double> slacks;      ///< E_i - E(yhat, Phat) - D(Fhat_{i-1}, P_i, Phat), per competitor
  std::vector<double> amplitudes;  ///< 0 for the frozen competitor
};

/// Samples competitors around (y_i, P_i): the frozen state, then Gaussian bumps in y and
/// smooth per-cell exponential perturbations exp(eps A) P at eps in {1e-3, 1e-2, 1e-1}.
/// Competitor k moves y only, P only, or both, cycling with k.
inline StabilityReport stability_test(const Trajectory& traj, const Problem& pr, std::size_t i,
                                      std::size_t n_competitors, std::uint64_t seed = 7) {
  detail::check_index(traj, i);
  const StateField& s = traj.states[i];
  const Grid& g = s.grid();
  const MaterialParams& p = pr.params;
  const double t = traj.times[i];
  const std::vector<Mat3>& fhat = traj.mollified[i == 0 ? 0 : i - 1];
  const double e_i = total_energy(s, t, p, pr.loads);

  StabilityReport rep;
  rep.step = i;
  if (n_competitors == 0) return rep;
  rep.slacks.push_back(0.0);  // the frozen state: E_i - E_i - D(P_i, P_i)
  rep.amplitudes.push_back(0.0);
  rep.worst_slack = 0.0;

  std::mt19937_64 rng(seed + 1000003ULL * i);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd;
  const double amps[3] = {1e-3, 1e-2, 1e-1};
  const auto& ext = g.extent();
  const double width = 0.3 * std::max({ext[0], ext[1], ext[2]});

  for (std::size_t k = 1; k < n_competitors; ++k) {
    const double amp = amps[(k - 1) % 3];
    const int mode = static_cast<int>(((k - 1) / 3) % 3);  // 0: y, 1: P, 2: both
    Vec3 centre{ext[0] * ud(rng), ext[1] * ud(rng), ext[2] * ud(rng)};
    Vec3 dir{nd(rng), nd(rng), nd(rng)};
    dir = (1.0 / norm(dir)) * dir;
    const Mat3 a_dir = detail::random_traceless(rng);
    const Mat3 a_noise = detail::random_traceless(rng);

    std::vector<Vec3> y = s.y();
    if (mode != 1) {
      for (std::size_t v = 0; v < y.size(); ++v) {
        if (g.is_dirichlet(v)) continue;
        const Vec3 d = g.node_position(v) - centre;
        y[v] += (amp * std::exp(-dot(d, d) / (2.0 * width * width))) * dir;
      }
    }
    std::vector<Mat3> pm = s.P();
    if (mode != 0) {
      for (std::size_t c = 0; c < pm.size(); ++c) {
        const Vec3 d = g.cell_center(c) - centre;
        const double bump = std::exp(-dot(d, d) / (2.0 * width * width));
        const Mat3 a = amp * (bump * a_dir + 0.1 * a_noise);
        pm[c] = renormalize_sl3(expm(a) * pm[c]);
      }
    }
    StateField hat(s.grid_ptr(), std::move(y), std::move(pm));
    hat.refresh();
    const double e_hat = total_energy(hat, t, p, pr.loads);
    const double d_hat = dissipation_integral(g, fhat, s.P(), hat.P(), p, pr.policy.path);
    const double slack = e_i - e_hat - d_hat;
    rep.slacks.push_back(slack);
    rep.amplitudes.push_back(amp);
    rep.worst_slack = std::max(rep.worst_slack, slack);
  }
  return rep;
}

// ---- energy balance ----------------------------------------------------------------

struct EnergyBalance {
  std::size_t step = 0;
  /// [E(t_i) + Diss_[0,t_i]] - [E(0) + int_0^t_i dE/dt], power integrated by the trapezoid rule
  double residual = 0.0;
  /// E(0) + sum of exact power increments at the frozen previous state - E(t_i) - Diss; >= 0 up to solver error
  double upper_gap = 0.0;
  /// the trapezoid residual; >= 0 only in the limit tau -> 0
  double lower_gap = 0.0;
};

inline EnergyBalance energy_balance_residual(const Trajectory& traj, std::size_t i) {
  detail::check_index(traj, i);
  EnergyBalance b;
  b.step = i;
  const auto& r = traj.records;
  double trap = 0.0, exact = 0.0;
  for (std::size_t j = 1; j <= i; ++j) {
    trap += 0.5 * (traj.times[j] - traj.times[j - 1]) * (r[j - 1].power + r[j].power);
    exact += r[j].power_increment;
  }
  const double lhs = r[i].energy + r[i].cum_dissipation;
  b.residual = lhs - (r[0].energy + trap);
  b.upper_gap = r[0].energy + exact - lhs;
  b.lower_gap = b.residual;
  return b;
}

// ---- coercivity and Gronwall --------------------------------------------------------

namespace detail {

/// sup <l, v> / |grad v|_{L2} over v vanishing on the clamped nodes, by conjugate gradients
/// on the discrete Laplacian-type operator. Infinite when l is not orthogonal to the kernel.
inline double load_dual_norm(const Grid& g, const std::vector<Vec3>& l) {
  const double vol = g.cell_volume();
  auto apply = [&](const std::vector<Vec3>& v) {
    auto kv = gradient_y_adjoint(g, gradient_y(g, v));
    for (std::size_t n = 0; n < kv.size(); ++n) kv[n] = g.is_dirichlet(n) ? Vec3{} : vol * kv[n];
    return kv;
  };
  auto inner = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) s += dot(a[n], b[n]);
    return s;
  };
  std::vector<Vec3> b = l;
  for (std::size_t n = 0; n < b.size(); ++n)
    if (g.is_dirichlet(n)) b[n] = Vec3{};
  const double bb = inner(b, b);
  if (bb == 0.0) return 0.0;
  std::vector<Vec3> x(b.size()), r = b, d = b;
  double rr = bb;
  const int max_it = 20 * static_cast<int>(g.num_nodes());
  for (int it = 0; it < max_it && rr > 1e-26 * bb; ++it) {
    const auto kd = apply(d);
    const double dkd = inner(d, kd);
    if (!(dkd > 0.0)) break;
    const double alpha = rr / dkd;
    for (std::size_t n = 0; n < x.size(); ++n) {
      x[n] += alpha * d[n];
      r[n] += (-alpha) * kd[n];
    }
    const double rr_new = inner(r, r);
    for (std::size_t n = 0; n < d.size(); ++n) d[n] = r[n] + (rr_new / rr) * d[n];
    rr = rr_new;
  }
  if (rr > 1e-16 * bb) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(0.0, inner(b, x)));
}

inline std::vector<double> load_sample_times(const LoadProgram& loads) {
  std::vector<double> ts;
  for (const auto& k : loads.knots()) ts.push_back(k.t);
  if (loads.mode() == LoadInterpolation::Smooth) {
    const double a = loads.t_begin(), b = loads.t_end();
    for (int k = 0; k <= 100; ++k) ts.push_back(a + (b - a) * k / 100.0);
  }
  return ts;
}

}  // namespace detail

struct CoercivityReport {
  std::vector<double> lhs;     ///< |grad y P^-1|^q_e + |grad y|^q + |P|^q_p + |grad P|^q_r, integrated
  std::vector<double> energy;  ///< E(t_i, y_i, P_i)
  double c4_fit = 0.0;         ///< max lhs / (1 + E) over the trajectory
  double slope = 0.0;          ///< a priori: lhs <= slope * E + offset
  double offset = 0.0;
  double load_dual = 0.0;  ///< max over load times of sup <l, v> / |grad v|_L2
  double margin = 0.0;     ///< min over states of 1 - lhs / (slope E + offset)
  bool passed = false;
};

/// Integrated coercivity quantity of a state.
inline double coercivity_lhs(const StateField& s, const MaterialParams& p) {
  const auto& fy = s.grad_y();
  const auto& dp = s.grad_P();
  double sum = 0.0;
  for (std::size_t c = 0; c < fy.size(); ++c) {
    const Mat3& pm = s.P()[c];
    const Mat3 fe = fy[c] * detail::checked_inverse(pm);
    sum += std::pow(norm(fe), p.q_e) + std::pow(norm(fy[c]), p.q) + std::pow(norm(pm), p.q_p) +
           std::pow(dp[c].norm(), p.q_r);
  }
  return sum * s.grid().cell_volume();
}

/// Fits c4 over the trajectory and compares against an a priori bound built from the growth
/// constants c1, c2, the gradient weight and the dual norm of the loads:
///   |grad y|^q <= |F_e|^q_e + |P|^q_p + 1, |F_e|^q_e <= (W_e + 1/c1)/c1, likewise for P,
///   |<l, y>| <= |<l, id>| + L |grad y - I|_L2, and Young's inequality on the L^q term.
inline CoercivityReport coercivity_check(const Trajectory& traj, const Problem& pr) {
  const MaterialParams& p = pr.params;
  const ParamsReport pv = validate_params(p);
  const Grid& g = *pr.grid;
  const double vol = g.volume();

  CoercivityReport rep;
  double l0 = 0.0;
  for (double t : detail::load_sample_times(pr.loads)) {
    const auto l = pr.loads.nodal_force(t);
    rep.load_dual = std::max(rep.load_dual, detail::load_dual_norm(g, l));
    l0 = std::max(l0, std::abs(pr.loads.work(g.identity_deformation(), t)));
  }

  const double k = std::max({2.0 / pv.c1, 2.0 / pv.c2, p.q_r / p.mu});
  const double b = k * vol * (1.0 / pv.c1 + 1.0 / pv.c2) + vol;
  // k L |Omega|^(1/2 - 1/q) X^(1/q) <= X/2 + young
  const double a = k * rep.load_dual * std::pow(vol, 0.5 - 1.0 / p.q);
  const double u_star = std::pow(2.0 * a / p.q, 1.0 / (p.q - 1.0));
  const double young = a * (1.0 - 1.0 / p.q) * u_star;
  rep.slope = 2.0 * k;
  rep.offset = 2.0 * (k * (l0 + rep.load_dual * std::sqrt(3.0 * vol)) + b + young);

  rep.margin = std::numeric_limits<double>::infinity();
  bool ok = std::isfinite(rep.offset);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const double x = coercivity_lhs(traj.states[i], p);
    const double e = total_energy(traj.states[i], traj.times[i], p, pr.loads);
    rep.lhs.push_back(x);
    rep.energy.push_back(e);
    if (!(1.0 + e > 0.0)) ok = false;
    rep.c4_fit = std::max(rep.c4_fit, x / (1.0 + e));
    rep.margin = std::min(rep.margin, 1.0 - x / (rep.slope * e + rep.offset));
  }
  rep.passed = ok && rep.margin > 0.0;
  return rep;
}

struct GronwallReport {
  double c5 = 0.0;           ///< max(1, sup |dE/dt| / (1 + E)) over states and their active times
  double margin = 0.0;       ///< min over steps i >= 1 of the relative gap in 1 + E_i <= c5 (1 + E_0) e^(c5 t_i)
  double bound_margin = 0.0;  ///< same for E_i + Diss_[0,t_i] <= E_0 + (1 + E_0)(e^(c5 t_i) - 1)
  bool passed = false;
};

inline GronwallReport gronwall_check(const Trajectory& traj, const Problem& pr) {
  GronwallReport rep;
  const auto& r = traj.records;
  if (r.empty()) throw Error(ErrorKind::InvalidArgument, "empty trajectory");
  const MaterialParams& p = pr.params;
  double c5 = 1.0;
  bool ok = true;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const StateField& s = traj.states[i];
    // state i is active on [t_i, t_{i+1}]
    std::vector<double> ts{traj.times[i]};
    if (i + 1 < traj.times.size()) ts.push_back(traj.times[i + 1]);
    for (double t : ts) {
      const double e = total_energy(s, t, p, pr.loads);
      if (!(1.0 + e > 0.0)) {
        ok = false;
        continue;
      }
      c5 = std::max(c5, std::abs(pr.loads.power(s.y(), t)) / (1.0 + e));
    }
  }
  rep.c5 = c5;
  const double e0 = r[0].energy;
  rep.margin = std::numeric_limits<double>::infinity();
  rep.bound_margin = std::numeric_limits<double>::infinity();
  // at t_0 both bounds hold with equality once c5 = 1, so margins are taken over t > 0
  for (std::size_t i = 1; i < r.size(); ++i) {
    const double growth = std::exp(c5 * traj.times[i]);
    const double rhs = c5 * (1.0 + e0) * growth;
    rep.margin = std::min(rep.margin, (rhs - (1.0 + r[i].energy)) / rhs);
    const double rhs2 = 1.0 + e0 + (1.0 + e0) * (growth - 1.0);
    rep.bound_margin = std::min(rep.bound_margin, (rhs2 - (1.0 + r[i].energy + r[i].cum_dissipation)) / rhs2);
  }
  rep.passed = ok && rep.margin > 0.0 && rep.bound_margin > 0.0;
  return rep;
}

// ---- small-strain limit ----------------------------------------------------------------

struct LinearizationErrors {
  double sigma = 0.0;
  double force = 0.0;
  double dissipation = 0.0;
};

/// Errors of the rescaled finite-strain quantities at F = I + eps eta, P = exp(eps p),
/// Pdot = eps pdot P, with the gap constants scaled to (eps r_0, g_0, eps r_max).
inline LinearizationErrors linearization_errors(const MaterialParams& params, const LinearizedTensors& lt,
                                                const Mat3& eta, const Mat3& p, const Mat3& pdot, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be positive");
  const double tol = 1e-12 * std::max(1.0, norm(p));
  if (std::abs(trace(p)) > tol || std::abs(trace(pdot)) > 1e-12 * std::max(1.0, norm(pdot)))
    throw Error(ErrorKind::InvalidArgument, "p and pdot must be deviatoric");
  const Mat3 f = Mat3::identity() + eps * eta;
  const Mat3 pm = expm(eps * p);
  const Mat3 sigma = lt.stress(eta, p);
  const Mat3 n = lt.force(eta, p);
  LinearizationErrors e;
  e.sigma = norm(first_piola(f, pm, params) / eps - sigma);
  const Mat3 n_eps = thermo_force(f, pm, params);
  e.force = norm(n_eps / eps - n);
  const FlowConstants fc_eps{eps * params.flow.r_0, params.flow.g_0, eps * params.flow.r_max};
  const double r_eps = infinitesimal_R_at(pm, n_eps, eps * pdot * pm, fc_eps);
  e.dissipation = std::abs(r_eps / (eps * eps) - linearized_R0(n, pdot, params.flow));
  return e;
}

struct LinearizationRow {
  double eps = 0.0;
  LinearizationErrors max_error;
};

struct LinearizationStudy {
  std::vector<LinearizationRow> rows;
  double slope_sigma = std::numeric_limits<double>::quiet_NaN();
  double slope_force = std::numeric_limits<double>::quiet_NaN();
  double slope_dissipation = std::numeric_limits<double>::quiet_NaN();
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}

/// Max errors over n_samples random (eta, p, pdot) per eps, and the fitted slopes. eta and p have
/// norm `amplitude`; keep it small enough that r(I, n) stays below the r_max clamp, where the
/// dissipation error vanishes identically.
inline LinearizationStudy linearization_study(const MaterialParams& params, const std::vector<double>& epsilons,
                                              std::size_t n_samples = 20, std::uint64_t seed = 11,
                                              double amplitude = 0.1) {
  if (epsilons.empty()) throw Error(ErrorKind::InvalidArgument, "no eps values given");
  for (double e : epsilons)
    if (!(e > 0.0) || !std::isfinite(e)) throw Error(ErrorKind::InvalidArgument, "eps values must be positive");
  validate_params(params);
  const LinearizedTensors lt = linearized_tensors(params);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  struct Sample {
    Mat3 eta, p, pdot;
  };
  std::vector<Sample> samples;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Sample s;
    for (auto& v : s.eta.m) v = nd(rng);
    s.eta *= amplitude / norm(s.eta);
    s.p = amplitude * detail::random_traceless(rng);
    s.pdot = detail::random_traceless(rng);
    samples.push_back(s);
  }
  LinearizationStudy st;
  std::vector<double> xs, es, en, er;
  for (double eps : epsilons) {
    LinearizationRow row;
    row.eps = eps;
    for (const auto& s : samples) {
      const auto e = linearization_errors(params, lt, s.eta, s.p, s.pdot, eps);
      row.max_error.sigma = std::max(row.max_error.sigma, e.sigma);
      row.max_error.force = std::max(row.max_error.force, e.force);
      row.max_error.dissipation = std::max(row.max_error.dissipation, e.dissipation);
    }
    st.rows.push_back(row);
    xs.push_back(eps);
    es.push_back(row.max_error.sigma);
    en.push_back(row.max_error.force);
    er.push_back(row.max_error.dissipation);
  }
  st.slope_sigma = loglog_slope(xs, es);
  st.slope_force = loglog_slope(xs, en);
  st.slope_dissipation = loglog_slope(xs, er);
  return st;
}

// ---- metric properties of D ----------------------------------------------------------------

struct MetricSuite {
  std::size_t samples = 0;
  double symmetry = 0.0;         ///< max |D(F,P1,P2) - D(F,P2,P1)|
  double triangle = -std::numeric_limits<double>::infinity();  ///< max D13 - D12 - D23
  double self_distance = 0.0;    ///< max D(F,P,P)
  double min_distinct = std::numeric_limits<double>::infinity();  ///< min D over distinct pairs
  double lower_ratio = std::numeric_limits<double>::infinity();   ///< min D / (r1 dhat)
  double upper_ratio = 0.0;                                       ///< max D r1 / dhat
  double c3 = 0.0;               ///< max D / (1 + |P1| + |P2|)
  double runtime = 0.0;

  bool passed(double tol = 1e-8) const {
    return symmetry <= tol && triangle <= tol && self_distance <= tol && min_distinct > tol && lower_ratio >= 1.0 &&
           upper_ratio <= 1.0;
  }
};

/// Random plastic strain exp(A) with A traceless, |A| uniform in [0, max_log].
inline Mat3 random_sl3(std::mt19937_64& rng, double max_log) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const Mat3 a = detail::random_traceless(rng);
  return renormalize_sl3(expm((max_log * ud(rng)) * a));
}

/// Symmetry, triangle inequality, nondegeneracy and the two-sided bound on n random triples.
/// F is a standard Gaussian matrix, each P has |log P| <= max_log.
inline MetricSuite metric_suite(const MaterialParams& p, const PathPolicy& pol, std::size_t n, std::uint64_t seed,
                                double max_log = 1.0) {
  detail::Stopwatch sw;
  MetricSuite m;
  m.samples = n;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const double r1 = p.r_1();
  for (std::size_t k = 0; k < n; ++k) {
    Mat3 f;
    for (auto& v : f.m) v = nd(rng);
    const Mat3 p1 = random_sl3(rng, max_log), p2 = random_sl3(rng, max_log), p3 = random_sl3(rng, max_log);
    const double d12 = d_distance(f, p1, p2, p, pol), d21 = d_distance(f, p2, p1, p, pol);
    const double d23 = d_distance(f, p2, p3, p, pol), d13 = d_distance(f, p1, p3, p, pol);
    const double d11 = d_distance(f, p1, p1, p, pol);
    const double dh = dhat_distance(p1, p2);
    m.symmetry = std::max(m.symmetry, std::abs(d12 - d21));
    m.triangle = std::max(m.triangle, d13 - d12 - d23);
    m.self_distance = std::max(m.self_distance, d11);
    m.min_distinct = std::min(m.min_distinct, d12);
    m.lower_ratio = std::min(m.lower_ratio, d12 / (r1 * dh));
    m.upper_ratio = std::max(m.upper_ratio, d12 * r1 / dh);
    m.c3 = std::max(m.c3, d12 / (1.0 + norm(p1) + norm(p2)));
  }
  m.runtime = sw.seconds();
  return m;
}

struct GeodesicOracle {
  std::size_t samples = 0;
  double max_rel_error = 0.0;  ///< max |dhat(I, exp A) - |A|| / |A|
  double max_improvement = 0.0;  ///< max over A of |A| - best perturbed path length
  double runtime = 0.0;
  bool passed(double rel = 1e-4, double imp = 1e-6) const { return max_rel_error <= rel && max_improvement <= imp; }
};

/// Compares dhat(I, exp A) with |A| and with the unweighted length of n_paths perturbed
/// piecewise-exponential curves from I to exp(A) (m segments, interior nodes exp(B_k) exp(k A / m)).
inline GeodesicOracle geodesic_oracle(std::size_t n, std::size_t n_paths, std::uint64_t seed, int segments = 4) {
  detail::Stopwatch sw;
  GeodesicOracle o;
  o.samples = n;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd;
  const Mat3 id = Mat3::identity();
  for (std::size_t k = 0; k < n; ++k) {
    const double len = ud(rng);
    const Mat3 a = len * detail::random_traceless(rng);
    const Mat3 target = renormalize_sl3(expm(a));
    o.max_rel_error = std::max(o.max_rel_error, std::abs(dhat_distance(id, target) - len) / len);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_paths; ++j) {
      // perturbation scale spread over three decades
      const double scale = len * std::pow(10.0, -1.0 - 2.0 * ud(rng));
      std::vector<Mat3> nodes{id};
      for (int s = 1; s < segments; ++s) {
        Mat3 b;
        for (auto& v : b.m) v = nd(rng);
        b = scale * deviator(b);
        nodes.push_back(renormalize_sl3(expm(b) * expm((static_cast<double>(s) / segments) * a)));
      }
      nodes.push_back(target);
      double total = 0.0;
      for (std::size_t s = 0; s + 1 < nodes.size(); ++s) {
        const Mat3 rel = renormalize_sl3(nodes[s + 1] * inverse(nodes[s]));
        total += has_principal_log(rel) ? norm(mat_log(rel).mat()) : std::numeric_limits<double>::infinity();
      }
      best = std::min(best, total);
    }
    o.max_improvement = std::max(o.max_improvement, len - best);
  }
  o.runtime = sw.seconds();
  return o;
}


// ---- constitutive and mollifier property suites ------------------------------------------------

/// Central differences of W(F, P) = W_e(F P^-1) + W_p(P) against first_piola and -thermo_force.
/// The P-derivative is taken in all 9 entries, as thermo_force is the full matrix gradient.
struct GradientCheck {
  double piola_rel = 0.0;
  double force_rel = 0.0;
};

inline GradientCheck constitutive_gradient_check(const MaterialParams& p, std::size_t n, std::uint64_t seed,
                                                 double h = 1e-6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  GradientCheck gc;
  for (std::size_t k = 0; k < n; ++k) {
    Mat3 f = Mat3::identity();
    for (auto& v : f.m) v += 0.3 * nd(rng);
    const Mat3 pm = renormalize_sl3(expm(0.3 * detail::random_traceless(rng) * std::abs(nd(rng))));
    Mat3 gf, gp;
    for (std::size_t e = 0; e < 9; ++e) {
      Mat3 fp = f, fm = f, pp = pm, pq = pm;
      fp.m[e] += h;
      fm.m[e] -= h;
      pp.m[e] += h;
      pq.m[e] -= h;
      gf.m[e] = (local_density(fp, pm, p) - local_density(fm, pm, p)) / (2.0 * h);
      gp.m[e] = (local_density(f, pp, p) - local_density(f, pq, p)) / (2.0 * h);
    }
    gc.piola_rel = std::max(gc.piola_rel, norm(first_piola(f, pm, p) - gf) / std::max(norm(gf), 1e-8));
    gc.force_rel = std::max(gc.force_rel, norm(thermo_force(f, pm, p) + gp) / std::max(norm(gp), 1e-8));
  }
  return gc;
}

/// max |W_e(Q F) - W_e(F)| / max(1, |W_e(F)|) over random rotations Q and matrices F.
inline double frame_indifference_check(const MaterialParams& p, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    Mat3 f = Mat3::identity(), w;
    for (auto& v : f.m) v += 0.5 * nd(rng);
    for (auto& v : w.m) v = nd(rng);
    const Mat3 q = expm(w - transpose(w));
    const double a = elastic_density(f, p);
    worst = std::max(worst, std::abs(elastic_density(q * f, p) - a) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

/// Worst midpoint violation of convexity of the polyconvex envelope along segments between
/// random (F, cof F, det F) triples: max of W(mid) - (W(a) + W(b)) / 2, scaled by max(1, |W(a)| + |W(b)|).
inline double polyconvexity_check(const MaterialParams& p, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    Mat3 f0, f1;
    for (auto& v : f0.m) v = nd(rng);
    for (auto& v : f1.m) v = nd(rng);
    const Mat3 g0 = cofactor(f0), g1 = cofactor(f1);
    const double d0 = det(f0), d1 = det(f1);
    const double w0 = polyconvex_envelope(f0, g0, d0, p), w1 = polyconvex_envelope(f1, g1, d1, p);
    const double wm = polyconvex_envelope(0.5 * (f0 + f1), 0.5 * (g0 + g1), 0.5 * (d0 + d1), p);
    worst = std::max(worst, (wm - 0.5 * (w0 + w1)) / std::max(1.0, std::abs(w0) + std::abs(w1)));
  }
  return worst;
}

/// Largest change of (K_tau F)_i when history entries after i are mutated; zero for a causal K_tau.
inline double mollifier_causality_check(const Grid& g, const Kernels& k, double tau, std::size_t len,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto random_field = [&] {
    std::vector<Mat3> f(g.num_cells());
    for (auto& m : f)
      for (auto& v : m.m) v = nd(rng);
    return f;
  };
  std::vector<std::vector<Mat3>> hist;
  for (std::size_t j = 0; j < len; ++j) hist.push_back(random_field());
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < len; ++i) {
    const auto before = mollified_gradient(g, hist, i, tau, k);
    auto mutated = hist;
    for (std::size_t j = i + 1; j < len; ++j) mutated[j] = random_field();
    const auto after = mollified_gradient(g, mutated, i, tau, k);
    for (std::size_t c = 0; c < before.size(); ++c) worst = std::max(worst, max_abs(before[c] - after[c]));
  }
  return worst;
}

struct ConvolutionConsistency {
  std::vector<double> taus;
  std::vector<double> errors;  ///< |(kappa *_tau w)(t) - (kappa * w)(t)|
  std::vector<double> ratios;  ///< errors[k] / errors[k + 1]
};

/// Discrete causal convolution of kappa(t) = lambda exp(-lambda t) with w(t) = 1 + sin(3 t) at time t_end,
/// against the continuous integral evaluated in closed form.
inline ConvolutionConsistency convolution_consistency(double lambda, double t_end, const std::vector<double>& taus) {
  ConvolutionConsistency cc;
  // int_0^t lambda e^{-lambda s} (1 + sin(3 (t - s))) ds
  const double t = t_end;
  const double l = lambda;
  const double exact = (1.0 - std::exp(-l * t)) +
                       l * (l * std::sin(3.0 * t) - 3.0 * std::cos(3.0 * t) + 3.0 * std::exp(-l * t)) / (l * l + 9.0);
  for (double tau : taus) {
    const double n = t / tau;
    const auto steps = static_cast<std::size_t>(std::llround(n));
    if (std::abs(n - static_cast<double>(steps)) > 1e-9 * n)
      throw Error(ErrorKind::InvalidArgument, "tau must divide the evaluation time");
    double sum = 0.0;
    for (std::size_t j = 0; j <= steps; ++j) {
      const double s = tau * static_cast<double>(j);
      sum += tau * l * std::exp(-l * s) * (1.0 + std::sin(3.0 * (t - s)));
    }
    cc.taus.push_back(tau);
    cc.errors.push_back(std::abs(sum - exact));
  }
  for (std::size_t k = 0; k + 1 < cc.errors.size(); ++k) cc.ratios.push_back(cc.errors[k] / cc.errors[k + 1]);
  return cc;
}

// ---- trajectory report -------------------------------------------------------------------------

/// Step indices 1..n spread evenly, at most `count` of them, always including the last.
inline std::vector<std::size_t> sampled_steps(std::size_t nsteps, std::size_t count) {
  std::vector<std::size_t> out;
  if (nsteps == 0 || count == 0) return out;
  count = std::min(count, nsteps);
  for (std::size_t k = 1; k <= count; ++k) out.push_back((k * nsteps) / count);
  return out;
}

/// Energy bookkeeping, stability sampling, coercivity and Gronwall checks of one trajectory.
/// Runtimes are left at zero so that the report is a pure function of the trajectory.
inline DiagnosticsReport trajectory_report(const Trajectory& traj, const Problem& pr, std::size_t stability_steps = 5) {
  DiagnosticsReport rep;
  const std::size_t n = traj.steps();
  const double e0 = traj.records.front().energy;

  CheckResult diss{"dissipativity"};
  diss.slack = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= n; ++i) diss.slack = std::max(diss.slack, -energy_balance_residual(traj, i).upper_gap);
  const double diss_tol = 1e-6 * (1.0 + std::abs(e0));
  diss.constants["tolerance"] = diss_tol;
  diss.passed = diss.slack <= diss_tol;
  rep.add(diss);

  CheckResult bal{"energy_balance"};
  const auto eb = energy_balance_residual(traj, n);
  bal.slack = eb.residual;
  bal.constants["upper_gap"] = eb.upper_gap;
  bal.passed = true;
  bal.detail = "reported only; the trapezoid residual vanishes as tau -> 0";
  rep.add(bal);

  CheckResult stab{"stability"};
  const double stab_tol = 10.0 * pr.policy.inner_tol;
  stab.slack = -std::numeric_limits<double>::infinity();
  for (std::size_t i : sampled_steps(n, stability_steps)) {
    const auto s = stability_test(traj, pr, i, static_cast<std::size_t>(pr.policy.stability_competitors), pr.seed);
    stab.slack = std::max(stab.slack, s.worst_slack);
  }
  stab.constants["tolerance"] = stab_tol;
  stab.passed = stab.slack <= stab_tol;
  rep.add(stab);

  const auto co = coercivity_check(traj, pr);
  CheckResult coe{"coercivity"};
  coe.slack = co.margin;
  coe.constants["c4_fit"] = co.c4_fit;
  coe.constants["apriori_slope"] = co.slope;
  coe.constants["apriori_offset"] = co.offset;
  coe.constants["load_dual_norm"] = co.load_dual;
  coe.passed = co.passed;
  rep.add(coe);

  const auto gr = gronwall_check(traj, pr);
  CheckResult gro{"gronwall"};
  gro.slack = std::min(gr.margin, gr.bound_margin);
  gro.constants["c5"] = gr.c5;
  gro.constants["energy_margin"] = gr.margin;
  gro.constants["bound_margin"] = gr.bound_margin;
  gro.passed = gr.passed;
  rep.add(gro);

  CheckResult conv{"solver_convergence"};
  std::size_t flagged = 0;
  for (const auto& r : traj.records) flagged += r.converged ? 0 : 1;
  conv.slack = static_cast<double>(flagged);
  conv.passed = flagged == 0;
  conv.detail = "number of steps accepted without convergence";
  rep.add(conv);
  return rep;
}

}  // namespace finplast
