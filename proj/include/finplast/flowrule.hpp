#pragma once

// Von Mises yield function, plastic potential, gap and infinitesimal dissipation.

#include <array>
#include <cmath>
#include <limits>

#include "finplast/errors.hpp"
#include "finplast/material.hpp"
#include "finplast/tensor.hpp"

namespace finplast {

/// Returned by infinitesimal_R for non-isochoric rates. Never feed it to arithmetic.
inline constexpr double kInfiniteDissipation = std::numeric_limits<double>::infinity();

inline bool is_infinite_sentinel(double v) { return std::isinf(v) && v > 0.0; }

/// |dev(N P^T)|
inline double deviatoric_force_norm(const Mat3& pm, const Mat3& n) { return norm(deviator(n * transpose(pm))); }

inline double yield_f(const Mat3& pm, const Mat3& n, const FlowConstants& fc) {
  return fc.g_0 * deviatoric_force_norm(pm, n) - fc.r_0;
}

inline double potential_g(const Mat3& pm, const Mat3& n) { return deviatoric_force_norm(pm, n); }

/// r = g - f, clamped to [r_0, r_max].
inline double gap_r(const Mat3& pm, const Mat3& n, const FlowConstants& fc) {
  return std::min(fc.r_0 + (1.0 - fc.g_0) * deviatoric_force_norm(pm, n), fc.r_max);
}

/// R for a given force N; the sentinel when tr(Pdot P^-1) is not zero.
inline double infinitesimal_R_at(const Mat3& pm, const Mat3& n, const Mat3& pdot, const FlowConstants& fc,
                                 double tol = 1e-10) {
  const Mat3 l = pdot * detail::checked_inverse(pm);
  const double nl = norm(l);
  if (std::abs(trace(l)) > tol * std::max(1.0, nl)) return kInfiniteDissipation;
  if (nl == 0.0) return 0.0;
  return gap_r(pm, n, fc) * nl;
}

inline double infinitesimal_R(const Mat3& f, const Mat3& pm, const Mat3& pdot, const MaterialParams& p,
                              double tol = 1e-10) {
  return infinitesimal_R_at(pm, thermo_force(f, pm, p), pdot, p.flow, tol);
}

/// dg/dN = dev(N P^T) P / |dev(N P^T)|.
inline Mat3 potential_gradient(const Mat3& pm, const Mat3& n) {
  const Mat3 d = deviator(n * transpose(pm));
  const double nd = norm(d);
  if (nd == 0.0) throw Error(ErrorKind::DegenerateGradient, "plastic potential is not differentiable at dev(N P^T) = 0");
  return (d * pm) / nd;
}

/// max(f, 0) + |zeta f| + |Pdot - zeta dg/dN|, zeta the nonnegative least-squares multiplier.
/// Zero iff Pdot = zeta dg/dN, zeta >= 0, f <= 0, zeta f = 0.
inline double complementarity_residual(const Mat3& pm, const Mat3& n, const Mat3& pdot, const FlowConstants& fc,
                                       double tol = 1e-12) {
  const double f = yield_f(pm, n, fc);
  const double pn = norm(pdot);
  const Mat3 d = deviator(n * transpose(pm));
  if (norm(d) < tol) {
    if (pn > 0.0) throw Error(ErrorKind::DegenerateGradient, "flow direction undefined at dev(N P^T) = 0");
    return std::max(f, 0.0);
  }
  const Mat3 g = potential_gradient(pm, n);
  const double zeta = std::max(0.0, dot(pdot, g) / dot(g, g));
  return std::max(f, 0.0) + std::abs(zeta * f) + norm(pdot - zeta * g);
}

// ---- small-strain limit -------------------------------------------------------

/// Fourth-order tensor acting on 3x3 matrices, T_{ijkl} at index ((i*3+j)*3+k)*3+l.
struct Tensor4 {
  std::array<double, 81> t{};
  double& operator()(int i, int j, int k, int l) { return t[static_cast<std::size_t>(((i * 3 + j) * 3 + k) * 3 + l)]; }
  double operator()(int i, int j, int k, int l) const {
    return t[static_cast<std::size_t>(((i * 3 + j) * 3 + k) * 3 + l)];
  }
  Mat3 apply(const Mat3& m) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) s += (*this)(i, j, k, l) * m(k, l);
        r(i, j) = s;
      }
    return r;
  }
};

struct LinearizedTensors {
  Tensor4 C;  ///< elastic Hessian at I
  Tensor4 H;  ///< plastic Hessian at I

  /// sigma = C (eta - p)^s
  Mat3 stress(const Mat3& eta, const Mat3& p) const { return C.apply(sym(eta - p)); }
  /// n = sigma - H p
  Mat3 force(const Mat3& eta, const Mat3& p) const { return stress(eta, p) - H.apply(p); }
};

namespace detail {
template <class Grad>
Tensor4 central_hessian(Grad grad, double h) {
  Tensor4 t;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      Mat3 e = Mat3::identity();
      Mat3 em = Mat3::identity();
      e(k, l) += h;
      em(k, l) -= h;
      const Mat3 col = (grad(e) - grad(em)) / (2.0 * h);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j, k, l) = col(i, j);
    }
  return t;
}
}  // namespace detail

/// Hessians of W_e and W_p at the identity by central differences of the analytic gradients.
inline LinearizedTensors linearized_tensors(const MaterialParams& p, double h = 1e-4) {
  LinearizedTensors lt;
  lt.C = detail::central_hessian([&](const Mat3& m) { return elastic_gradient(m, p); }, h);
  lt.H = detail::central_hessian([&](const Mat3& m) { return plastic_gradient(m, p); }, h);
  // positive definiteness: C on symmetric matrices, H on all of R^{3x3}
  for (int a = 0; a < 9; ++a) {
    Mat3 e;
    e.m[static_cast<std::size_t>(a)] = 1.0;
    const Mat3 es = sym(e);
    if (!(dot(lt.C.apply(es), es) > 0.0) || !(dot(lt.H.apply(e), e) > 0.0))
      throw Error(ErrorKind::IndefiniteHessian, "Hessian at I is not positive definite");
  }
  return lt;
}

/// R_0(n, pdot) = r(I, n)|pdot| for traceless pdot, the sentinel otherwise.
inline double linearized_R0(const Mat3& n, const Mat3& pdot, const FlowConstants& fc, double tol = 1e-10) {
  const double np = norm(pdot);
  if (std::abs(trace(pdot)) > tol * std::max(1.0, np)) return kInfiniteDissipation;
  if (np == 0.0) return 0.0;
  return gap_r(Mat3::identity(), n, fc) * np;
}

}  // namespace finplast
