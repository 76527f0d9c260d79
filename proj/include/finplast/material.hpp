#pragma once

// Energy densities, constitutive forces, and the grid state (y, P).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/grid.hpp"
#include "finplast/tensor.hpp"

namespace finplast {

/// Von Mises flow constants: f = g_0 |dev(N P^T)| - r_0, gap clamped at r_max.
struct FlowConstants {
  double r_0 = 0.01;
  double g_0 = 1.0 / 3.0;
  double r_max = 1.0;

  FlowConstants() = default;
  FlowConstants(double r0, double g0, double rmax) : r_0(r0), g_0(g0), r_max(rmax) { validate(); }

  void validate() const {
    if (!(r_0 > 0.0)) throw Error(ErrorKind::InvalidFlowConstants, "r_0 must be positive");
    if (!(g_0 > 0.0) || 3.0 * g_0 > 1.0 + 1e-12)
      throw Error(ErrorKind::InvalidFlowConstants, "g_0 must lie in (0, 1/3]");
    if (!(r_max >= r_0)) throw Error(ErrorKind::InvalidFlowConstants, "r_max must be >= r_0");
  }

  /// Nondegeneracy constant of the infinitesimal dissipation.
  double r_1() const { return std::min(r_0, 1.0 / r_max); }
};

struct MaterialParams {
  // W_e = alpha|F|^2 + beta|cof F|^2 + gamma_det (det F - 1)^2 + delta|F|^q_e + zeta det F + w0
  double alpha = 0.5;
  double beta = 0.25;
  double gamma_det = 1.0;
  double delta = 1e-3;
  // W_p = h_p/2 |P - I|^2 + c_p/q_p |P|^q_p + s_p tr P + offset
  double h_p = 0.5;
  double c_p = 1e-3;
  double mu = 0.01;
  double q = 4.0;
  double q_e = 8.0;
  double q_p = 8.0;
  double q_r = 4.0;
  FlowConstants flow{};
  // hourglass control: (kappa/2) sum over modes |s|^2 per unit volume, see hourglass_y
  double hourglass = 0.5;

  /// Makes grad W_e(I) vanish.
  double zeta() const { return -(2.0 * alpha + 4.0 * beta + delta * q_e * std::pow(3.0, (q_e - 2.0) / 2.0)); }
  /// Makes W_e(I) vanish.
  double w0() const { return -(3.0 * alpha + 3.0 * beta + delta * std::pow(3.0, q_e / 2.0) + zeta()); }
  /// Makes grad W_p(I) vanish.
  double s_p() const { return -c_p * std::pow(3.0, (q_p - 2.0) / 2.0); }
  /// Makes W_p(I) vanish.
  double wp_offset() const { return -(c_p / q_p) * std::pow(3.0, q_p / 2.0) - 3.0 * s_p(); }
  double r_1() const { return flow.r_1(); }
};

// ---- densities ----------------------------------------------------------------

inline double elastic_density(const Mat3& fe, const MaterialParams& p) {
  const double n2 = dot(fe, fe);
  const Mat3 cf = cofactor(fe);
  const double d = det(fe);
  return p.alpha * n2 + p.beta * dot(cf, cf) + p.gamma_det * (d - 1.0) * (d - 1.0) +
         p.delta * std::pow(n2, p.q_e / 2.0) + p.zeta() * d + p.w0();
}

inline Mat3 elastic_gradient(const Mat3& fe, const MaterialParams& p) {
  const double n2 = dot(fe, fe);
  const Mat3 c = transpose(fe) * fe;
  const Mat3 cf = cofactor(fe);
  const double d = det(fe);
  Mat3 g = (2.0 * p.alpha) * fe;
  g += (2.0 * p.beta) * (trace(c) * fe - fe * c);
  g += (2.0 * p.gamma_det * (d - 1.0) + p.zeta()) * cf;
  if (n2 > 0.0) g += (p.delta * p.q_e * std::pow(n2, (p.q_e - 2.0) / 2.0)) * fe;
  return g;
}

inline double plastic_density(const Mat3& pm, const MaterialParams& p) {
  const Mat3 d = pm - Mat3::identity();
  return 0.5 * p.h_p * dot(d, d) + (p.c_p / p.q_p) * std::pow(dot(pm, pm), p.q_p / 2.0) + p.s_p() * trace(pm) +
         p.wp_offset();
}

inline Mat3 plastic_gradient(const Mat3& pm, const MaterialParams& p) {
  const double n2 = dot(pm, pm);
  Mat3 g = p.h_p * (pm - Mat3::identity());
  if (n2 > 0.0) g += (p.c_p * std::pow(n2, (p.q_p - 2.0) / 2.0)) * pm;
  g += p.s_p() * Mat3::identity();
  return g;
}

/// Density of the gradient term, (mu/q_r)|grad P|^q_r.
inline double gradient_term_density(const Mat33& dp, const MaterialParams& p) {
  return (p.mu / p.q_r) * std::pow(dp.norm(), p.q_r);
}

/// Derivative of gradient_term_density with respect to grad P.
inline Mat33 gradient_term_gradient(const Mat33& dp, const MaterialParams& p) {
  Mat33 g = dp;
  const double n = dp.norm();
  g *= (n > 0.0) ? p.mu * std::pow(n, p.q_r - 2.0) : 0.0;
  return g;
}

/// Convex function of (F, cof F, det F) whose restriction is W_e.
inline double polyconvex_envelope(const Mat3& f, const Mat3& g, double d, const MaterialParams& p) {
  const double n2 = dot(f, f);
  return p.alpha * n2 + p.beta * dot(g, g) + p.gamma_det * (d - 1.0) * (d - 1.0) +
         p.delta * std::pow(n2, p.q_e / 2.0) + p.zeta() * d + p.w0();
}

// ---- forces -------------------------------------------------------------------

namespace detail {
inline Mat3 checked_inverse(const Mat3& pm) {
  const double d = det(pm);
  if (!std::isfinite(d) || std::abs(d) < 1e-12) throw Error(ErrorKind::SingularP, "plastic strain is singular");
  return transpose(cofactor(pm)) / d;
}
}  // namespace detail

/// First Piola stress dW/dF = dW_e(F P^-1) P^-T.
inline Mat3 first_piola(const Mat3& f, const Mat3& pm, const MaterialParams& p) {
  const Mat3 pinv = detail::checked_inverse(pm);
  return elastic_gradient(f * pinv, p) * transpose(pinv);
}

/// Thermodynamic force N = -dW/dP = P^-T F^T dW_e(F_e) P^-T - dW_p(P).
inline Mat3 thermo_force(const Mat3& f, const Mat3& pm, const MaterialParams& p) {
  const Mat3 pinv = detail::checked_inverse(pm);
  const Mat3 fe = f * pinv;
  const Mat3 pit = transpose(pinv);
  return transpose(fe) * elastic_gradient(fe, p) * pit - plastic_gradient(pm, p);
}

/// Total local density W(F, P) = W_e(F P^-1) + W_p(P).
inline double local_density(const Mat3& f, const Mat3& pm, const MaterialParams& p) {
  return elastic_density(f * detail::checked_inverse(pm), p) + plastic_density(pm, p);
}

// ---- recession ----------------------------------------------------------------

/// Homogeneous large-argument limit of the stored-energy density along (z_e, z_p, z_r),
/// with |z_e|^q_e + |z_p|^q_p + |z_r|^q_r = 1.
inline double recession_density(const Mat3& ze, const Mat3& zp, const Mat33& zr, const MaterialParams& p) {
  const double ne = norm(ze), np = norm(zp), nr = zr.norm();
  const double sphere = std::pow(ne, p.q_e) + std::pow(np, p.q_p) + std::pow(nr, p.q_r);
  if (std::abs(sphere - 1.0) > 1e-8)
    throw Error(ErrorKind::InvalidArgument, "recession direction is not on the unit sphere");
  return p.delta * std::pow(ne, p.q_e) + (p.c_p / p.q_p) * std::pow(np, p.q_p) + (p.mu / p.q_r) * std::pow(nr, p.q_r);
}

// ---- validation ---------------------------------------------------------------

struct ParamsReport {
  double c1 = 0.0;  ///< -1/c1 + c1|F|^q_e <= W_e <= (1 + |F|^q_e)/c1
  double c2 = 0.0;  ///< -1/c2 + c2|P|^q_p <= W_p
  double r1 = 0.0;
  double min_elastic_curvature = 0.0;  ///< min over sampled unit symmetric H of C[H, H]
  double min_plastic_curvature = 0.0;  ///< min over sampled unit H of H[H, H]
};

namespace detail {

// Largest c <= cap with min_s (lower(s) - c s^qx) >= -1/c.
template <class Lower>
double growth_constant(Lower lower, double qx, double cap) {
  if (!(cap > 0.0)) return 0.0;
  double worst = 0.0;
  for (int k = 0; k <= 40000; ++k) {
    const double s = 1e-3 * k;  // |F| in [0, 40]
    worst = std::min(worst, lower(s) - cap * std::pow(s, qx));
  }
  // the minimum sits at moderate s; past 40 the q-power dominates every lower-order term
  worst *= 1.01;
  if (worst >= 0.0) return cap;
  return std::min(cap, -1.0 / worst);
}

}  // namespace detail

inline double coercivity_c1(const MaterialParams& p) {
  const double z = std::abs(p.zeta());
  const double w0 = p.w0();
  auto lower = [&](double s) {
    return p.alpha * s * s + p.delta * std::pow(s, p.q_e) - z * s * s * s / std::sqrt(27.0) + w0;
  };
  double c = detail::growth_constant(lower, p.q_e, 0.5 * p.delta);
  // upper bound W_e <= (1 + s^q_e)/c
  double ratio = 0.0;
  for (int k = 0; k <= 4000; ++k) {
    const double s = std::pow(10.0, -3.0 + 6.0 * k / 4000.0);
    const double d = s * s * s / std::sqrt(27.0);
    const double up = p.alpha * s * s + p.beta * s * s * s * s / 3.0 + p.gamma_det * (d + 1.0) * (d + 1.0) +
                      p.delta * std::pow(s, p.q_e) + z * d + std::abs(w0);
    ratio = std::max(ratio, up / (1.0 + std::pow(s, p.q_e)));
  }
  ratio *= 1.01;
  if (ratio > 0.0) c = std::min(c, 1.0 / ratio);
  return c;
}

inline double coercivity_c2(const MaterialParams& p) {
  const double sp = p.s_p(), off = p.wp_offset();
  // |P - I|^2 >= 0, tr P >= -sqrt(3)|P|
  auto lower = [&](double s) {
    return (p.c_p / p.q_p) * std::pow(s, p.q_p) - std::abs(sp) * std::sqrt(3.0) * s + off;
  };
  return detail::growth_constant(lower, p.q_p, 0.5 * p.c_p / p.q_p);
}

/// Checks the exponent chain, stationarity and positivity of the Hessians at I,
/// and reports feasible growth constants.
inline ParamsReport validate_params(const MaterialParams& p, std::uint64_t seed = 20240601) {
  p.flow.validate();
  if (!(1.0 / p.q_e + 1.0 / p.q_p <= 1.0 / p.q + 1e-12) || !(1.0 / p.q < 1.0 / 3.0))
    throw Error(ErrorKind::InvalidExponents, "need 1/q_e + 1/q_p <= 1/q < 1/3");
  if (!(p.q_r > 3.0)) throw Error(ErrorKind::InvalidExponents, "need q_r > 3");
  if (!(p.mu > 0.0)) throw Error(ErrorKind::InvalidParams, "gradient weight mu must be positive");
  for (double v : {p.alpha, p.beta, p.gamma_det, p.delta, p.h_p, p.c_p, p.hourglass})
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidParams, "density coefficients must be >= 0");

  const Mat3 id = Mat3::identity();
  if (max_abs(elastic_gradient(id, p)) > 1e-10 || std::abs(elastic_density(id, p)) > 1e-10)
    throw Error(ErrorKind::NonStationaryIdentity, "elastic density is not stationary at I");
  if (max_abs(plastic_gradient(id, p)) > 1e-10 || std::abs(plastic_density(id, p)) > 1e-10)
    throw Error(ErrorKind::NonStationaryIdentity, "plastic density is not stationary at I");

  ParamsReport rep;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const double h = 1e-4;
  rep.min_elastic_curvature = std::numeric_limits<double>::infinity();
  rep.min_plastic_curvature = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 200; ++s) {
    Mat3 dir;
    for (auto& v : dir.m) v = nd(rng);
    // frame indifference makes the elastic Hessian vanish on skew directions
    Mat3 hs = sym(dir);
    hs /= norm(hs);
    const double ce = dot(elastic_gradient(id + h * hs, p) - elastic_gradient(id - h * hs, p), hs) / (2.0 * h);
    dir /= norm(dir);
    const double cp = dot(plastic_gradient(id + h * dir, p) - plastic_gradient(id - h * dir, p), dir) / (2.0 * h);
    rep.min_elastic_curvature = std::min(rep.min_elastic_curvature, ce);
    rep.min_plastic_curvature = std::min(rep.min_plastic_curvature, cp);
  }
  if (!(rep.min_elastic_curvature > 0.0) || !(rep.min_plastic_curvature > 0.0))
    throw Error(ErrorKind::IndefiniteHessian, "Hessian at I is not positive definite");

  rep.c1 = coercivity_c1(p);
  rep.c2 = coercivity_c2(p);
  if (!(rep.c1 > 0.0)) throw Error(ErrorKind::GrowthFailure, "elastic density lacks q_e growth (delta > 0 and q_e >= 6 needed)");
  if (!(rep.c2 > 0.0)) throw Error(ErrorKind::GrowthFailure, "plastic density lacks q_p growth (c_p > 0 needed)");
  rep.r1 = p.r_1();
  return rep;
}

// ---- state on the grid --------------------------------------------------------

/// Nodal deformation y and cell-wise plastic strain P with cached gradients.
class StateField {
 public:
  StateField(std::shared_ptr<const Grid> grid, std::vector<Vec3> y, std::vector<Mat3> pm) : grid_(std::move(grid)) {
    if (!grid_) throw Error(ErrorKind::InvalidArgument, "state needs a grid");
    set_y(std::move(y));
    set_P(std::move(pm));
  }

  /// y = id, P = I.
  static StateField identity(std::shared_ptr<const Grid> grid) {
    auto y = grid->identity_deformation();
    std::vector<Mat3> pm(grid->num_cells(), Mat3::identity());
    return StateField(std::move(grid), std::move(y), std::move(pm));
  }

  const Grid& grid() const { return *grid_; }
  const std::shared_ptr<const Grid>& grid_ptr() const { return grid_; }
  const std::vector<Vec3>& y() const { return y_; }
  const std::vector<Mat3>& P() const { return p_; }

  /// Replaces y; clamped nodes must sit at their reference position.
  void set_y(std::vector<Vec3> y) {
    if (y.size() != grid_->num_nodes()) throw Error(ErrorKind::SizeMismatch, "y has the wrong number of nodes");
    for (std::size_t v = 0; v < y.size(); ++v)
      if (grid_->is_dirichlet(v) && y[v] != grid_->node_position(v))
        throw Error(ErrorKind::InvalidArgument, "y must equal the identity on the clamped boundary");
    y_ = std::move(y);
    stale_ = true;
  }

  /// Replaces P; every cell must lie in SL(3).
  void set_P(std::vector<Mat3> pm) {
    if (pm.size() != grid_->num_cells()) throw Error(ErrorKind::SizeMismatch, "P has the wrong number of cells");
    for (const auto& m : pm)
      if (!in_sl3(m)) throw Error(ErrorKind::NotInSL3, "plastic strain must satisfy det P = 1");
    p_ = std::move(pm);
    stale_ = true;
  }

  bool stale() const { return stale_; }

  void refresh() {
    grad_y_ = gradient_y(*grid_, y_);
    grad_p_ = gradient_P(*grid_, p_);
    stale_ = false;
  }

  const std::vector<Mat3>& grad_y() const {
    if (stale_) throw Error(ErrorKind::StaleCache, "gradients not refreshed after an update");
    return grad_y_;
  }
  const std::vector<Mat33>& grad_P() const {
    if (stale_) throw Error(ErrorKind::StaleCache, "gradients not refreshed after an update");
    return grad_p_;
  }

 private:
  std::shared_ptr<const Grid> grid_;
  std::vector<Vec3> y_;
  std::vector<Mat3> p_;
  std::vector<Mat3> grad_y_;
  std::vector<Mat33> grad_p_;
  bool stale_ = true;
};

/// Per-cell stored-energy density W_e(grad y P^-1) + W_p(P) + (mu/q_r)|grad P|^q_r.
inline double cell_energy_density(const Mat3& fy, const Mat3& pm, const Mat33& dp, const MaterialParams& p) {
  return local_density(fy, pm, p) + gradient_term_density(dp, p);
}

/// Hourglass control energy of a nodal field; zero on affine y.
inline double hourglass_energy(const Grid& g, const std::vector<Vec3>& y, const MaterialParams& p) {
  if (p.hourglass == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& hg : hourglass_y(g, y))
    for (const auto& m : hg) sum += dot(m, m);
  return 0.5 * p.hourglass * g.cell_volume() * sum;
}

/// One-point quadrature of the stored energy, plus hourglass control.
inline double stored_energy(const StateField& s, const MaterialParams& p) {
  const auto& fy = s.grad_y();
  const auto& dp = s.grad_P();
  const auto& pm = s.P();
  std::vector<double> cell(fy.size());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < fy.size(); ++c) cell[c] = cell_energy_density(fy[c], pm[c], dp[c], p);
  double sum = 0.0;
  for (double v : cell) sum += v;
  return sum * s.grid().cell_volume() + hourglass_energy(s.grid(), s.y(), p);
}

/// Total energy E(t, y, P) = stored energy - <l(t), y>.
inline double total_energy(const StateField& s, double t, const MaterialParams& p, const LoadProgram& loads) {
  return stored_energy(s, p) - loads.work(s.y(), t);
}

}  // namespace finplast
