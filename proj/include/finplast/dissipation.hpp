#pragma once

// Dissipation distance between plastic strains: unweighted dhat, state-weighted D
// by piecewise-exponential path optimization, and its spatial integral.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/flowrule.hpp"
#include "finplast/material.hpp"
#include "finplast/tensor.hpp"
#include "finplast/trajectory.hpp"

namespace finplast {

struct PathPolicy {
  int segments = 4;
  int refine_iterations = 8;
  int quadrature_points = 1;  ///< weight samples per segment; 1 is the midpoint rule
  std::uint64_t seed = 1234567;

  void validate() const {
    if (segments < 1) throw Error(ErrorKind::InvalidArgument, "path policy needs at least one segment");
    if (refine_iterations < 0 || quadrature_points < 1)
      throw Error(ErrorKind::InvalidArgument, "invalid path refinement settings");
  }
};

namespace detail {

/// Orthonormal basis of sl(3) in the Frobenius product; the first five span the symmetric part.
inline const std::array<Mat3, 8>& sl3_basis() {
  static const std::array<Mat3, 8> b = [] {
    std::array<Mat3, 8> e{};
    const double s2 = 1.0 / std::sqrt(2.0);
    e[0] = diag(s2, -s2, 0.0);
    e[1] = diag(1.0, 1.0, -2.0) / std::sqrt(6.0);
    int k = 2;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        e[static_cast<std::size_t>(k)](i, j) = s2;
        e[static_cast<std::size_t>(k)](j, i) = s2;
        ++k;
      }
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        e[static_cast<std::size_t>(k)](i, j) = s2;
        e[static_cast<std::size_t>(k)](j, i) = -s2;
        ++k;
      }
    return e;
  }();
  return b;
}

inline Mat3 sl3_combine(const double* x, int count) {
  Mat3 a;
  const auto& b = sl3_basis();
  for (int k = 0; k < count; ++k) a += x[k] * b[static_cast<std::size_t>(k)];
  return a;
}

inline void require_sl3(const Mat3& p, const char* what) {
  if (!in_sl3(p)) throw Error(ErrorKind::NotInSL3, what);
}

inline bool lex_less(const Mat3& a, const Mat3& b) {
  return std::lexicographical_compare(a.m.begin(), a.m.end(), b.m.begin(), b.m.end());
}

/// Quasi-Newton minimization with a caller-supplied gradient; only improving steps are taken.
/// Returns the best value after each iteration (entry 0 is the start).
inline std::vector<double> bfgs_descent(std::vector<double>& x, const std::function<double(const std::vector<double>&)>& f,
                                        const std::function<std::vector<double>(const std::vector<double>&, double)>& grad,
                                        int iterations, double step_scale) {
  const std::size_t n = x.size();
  double fx = f(x);
  std::vector<double> history{fx};
  if (n == 0 || !std::isfinite(fx)) return history;
  std::vector<double> g = grad(x, fx);
  std::vector<double> hinv(n * n, 0.0);
  double gn = 0.0;
  for (double v : g) gn += v * v;
  gn = std::sqrt(gn);
  const double h0 = gn > 0.0 ? step_scale / gn : 1.0;
  for (std::size_t i = 0; i < n; ++i) hinv[i * n + i] = h0;

  for (int it = 0; it < iterations; ++it) {
    double gnorm = 0.0;
    for (double v : g) gnorm += v * v;
    if (!(std::sqrt(gnorm) > 1e-14 * std::max(1.0, std::abs(fx)))) {
      history.push_back(fx);
      continue;
    }
    std::vector<double> d(n, 0.0);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i] -= hinv[i * n + j] * g[j];
      slope += d[i] * g[i];
    }
    if (!(slope < 0.0)) {  // lost descent: restart from a scaled gradient step
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) hinv[i * n + j] = (i == j) ? h0 : 0.0;
        d[i] = -h0 * g[i];
      }
      slope = 0.0;
      for (std::size_t i = 0; i < n; ++i) slope += d[i] * g[i];
    }
    // trust cap: interior nodes never move further than the path is long
    double dn = 0.0;
    for (double v : d) dn += v * v;
    dn = std::sqrt(dn);
    double t = dn > 20.0 * step_scale ? 20.0 * step_scale / dn : 1.0;
    std::vector<double> xn(n);
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + t * d[i];
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope && fn < fx) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      history.push_back(fx);
      break;
    }
    std::vector<double> gn2 = grad(xn, fn);
    std::vector<double> s(n), y(n);
    double sy = 0.0, ss = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      y[i] = gn2[i] - g[i];
      sy += s[i] * y[i];
      ss += s[i] * s[i];
      yy += y[i] * y[i];
    }
    if (sy > 1e-12 * std::sqrt(ss * yy)) {
      std::vector<double> hy(n, 0.0);
      double yhy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) hy[i] += hinv[i * n + j] * y[j];
        yhy += y[i] * hy[i];
      }
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          hinv[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
    }
    x = xn;
    fx = fn;
    g = gn2;
    history.push_back(fx);
  }
  return history;
}

/// Quadrature average of the gap r along s -> exp(sA) P_k, s in (0, 1).
inline double segment_weight(const Mat3& f, const Mat3& pk, const Mat3& a, const MaterialParams& p, int q) {
  double sum = 0.0;
  for (int j = 0; j < q; ++j) {
    const double s = (j + 0.5) / q;
    const Mat3 pm = expm(s * a) * pk;
    sum += gap_r(pm, thermo_force(f, pm, p), p.flow);
  }
  return sum / q;
}

inline double segment_cost(const Mat3& f, const Mat3& p0, const Mat3& p1, const MaterialParams& p, int q) {
  if (p0 == p1) return 0.0;
  const Mat3 a = mat_log(renormalize_sl3(p1 * inverse(p0)));
  const double na = norm(a);
  if (na == 0.0) return 0.0;
  return na * segment_weight(f, p0, a, p, q);
}

// dhat through an intermediate Q = exp(B) P1 with B traceless.
inline double detour_length(const Mat3& p1, const Mat3& p2, const Mat3& b) {
  const Mat3 q = renormalize_sl3(expm(b) * p1);
  try {
    return norm(b) + norm(mat_log(renormalize_sl3(p2 * inverse(q))).mat());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::LogUndefined) return std::numeric_limits<double>::infinity();
    throw;
  }
}

inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h) {
  std::vector<double> g(x.size());
  std::vector<double> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h) : 0.0;
  }
  return g;
}

/// Best traceless detour generator for a pair whose principal log does not exist.
inline Mat3 detour_generator(const Mat3& p1, const Mat3& p2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.1, 3.0);
  auto cost = [&](const std::vector<double>& x) { return detour_length(p1, p2, sl3_combine(x.data(), 8)); };
  std::vector<double> best(8, 0.0);
  double best_cost = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(8);
    double n2 = 0.0;
    for (auto& v : x) {
      v = nd(rng);
      n2 += v * v;
    }
    const double s = ud(rng) / std::sqrt(n2);
    for (auto& v : x) v *= s;
    const double cx = cost(x);
    if (cx < best_cost) {
      best_cost = cx;
      best = x;
    }
  }
  if (!std::isfinite(best_cost))
    throw Error(ErrorKind::LogUndefined, "no admissible two-segment detour found");
  bfgs_descent(best, cost, [&](const std::vector<double>& x, double) { return fd_gradient(cost, x, 1e-7); }, 20, 0.1);
  return sl3_combine(best.data(), 8);
}

}  // namespace detail

/// Unweighted distance |log(P2 P1^-1)|, or the cheapest found two-segment detour when the
/// principal logarithm does not exist.
inline double dhat_distance(const Mat3& p1, const Mat3& p2, std::uint64_t seed = 1234567) {
  detail::require_sl3(p1, "dhat_distance: P1 not in SL(3)");
  detail::require_sl3(p2, "dhat_distance: P2 not in SL(3)");
  if (p1 == p2) return 0.0;
  const bool swap = detail::lex_less(p2, p1);
  const Mat3& a = swap ? p2 : p1;
  const Mat3& b = swap ? p1 : p2;
  const Mat3 m = renormalize_sl3(b * inverse(a));
  if (has_principal_log(m)) return norm(mat_log(m).mat());
  return detail::detour_length(a, b, detail::detour_generator(a, b, seed));
}

/// Nodes of the starting path: exponential interpolation along the principal log,
/// or along a two-leg detour when that log does not exist.
inline std::vector<Mat3> initial_path(const Mat3& p1, const Mat3& p2, int m, std::uint64_t seed) {
  std::vector<Mat3> nodes;
  const Mat3 rel = renormalize_sl3(p2 * inverse(p1));
  if (has_principal_log(rel)) {
    const Mat3 a = mat_log(rel).mat();
    nodes.push_back(p1);
    for (int k = 1; k < m; ++k) nodes.push_back(renormalize_sl3(expm((static_cast<double>(k) / m) * a) * p1));
    nodes.push_back(p2);
    return nodes;
  }
  const Mat3 b = detail::detour_generator(p1, p2, seed);
  const Mat3 q = renormalize_sl3(expm(b) * p1);
  const Mat3 a2 = mat_log(renormalize_sl3(p2 * inverse(q))).mat();
  const int m1 = std::max(1, m / 2);
  const int m2 = std::max(1, m - m1);
  nodes.push_back(p1);
  for (int k = 1; k < m1; ++k) nodes.push_back(renormalize_sl3(expm((static_cast<double>(k) / m1) * b) * p1));
  nodes.push_back(q);
  for (int k = 1; k < m2; ++k) nodes.push_back(renormalize_sl3(expm((static_cast<double>(k) / m2) * a2) * q));
  nodes.push_back(p2);
  return nodes;
}

/// Sum over segments of |A_k| times the quadrature-averaged gap along the segment.
inline double path_cost(const Mat3& f, const std::vector<Mat3>& nodes, const MaterialParams& p, int q = 1) {
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) c += detail::segment_cost(f, nodes[k], nodes[k + 1], p, q);
  return c;
}

/// Weight of the single-exponential path P_prev -> exp(A) P_prev as seen by d_distance:
/// returns path cost / |A| for the m-segment split of that path.
inline double single_log_weight(const Mat3& f, const Mat3& p_prev, const Mat3& a, const MaterialParams& p,
                                const PathPolicy& pol) {
  const int m = pol.segments, q = pol.quadrature_points;
  double sum = 0.0;
  for (int k = 0; k < m; ++k) {
    const Mat3 pk = expm((static_cast<double>(k) / m) * a) * p_prev;
    sum += detail::segment_weight(f, pk, a / static_cast<double>(m), p, q);
  }
  return sum / m;
}

struct PathResult {
  double cost = 0.0;
  std::vector<Mat3> nodes;
  std::vector<double> history;  ///< best cost after each refinement iteration
};

/// Local optimization of the interior nodes P_k = exp(B_k) P_k^0, starting from initial_path.
inline PathResult optimize_path(const Mat3& f, const Mat3& p1, const Mat3& p2, const MaterialParams& p,
                                const PathPolicy& pol) {
  pol.validate();
  PathResult res;
  const std::vector<Mat3> base = initial_path(p1, p2, pol.segments, pol.seed);
  const int m = static_cast<int>(base.size()) - 1;
  const int q = pol.quadrature_points;

  auto nodes_of = [&](const std::vector<double>& x) {
    std::vector<Mat3> nodes = base;
    for (int k = 1; k < m; ++k)
      nodes[static_cast<std::size_t>(k)] =
          renormalize_sl3(expm(detail::sl3_combine(&x[static_cast<std::size_t>(8 * (k - 1))], 8)) * base[static_cast<std::size_t>(k)]);
    return nodes;
  };
  auto seg = [&](const std::vector<Mat3>& nodes, int k) {
    try {
      return detail::segment_cost(f, nodes[static_cast<std::size_t>(k)], nodes[static_cast<std::size_t>(k + 1)], p, q);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::LogUndefined || e.kind() == ErrorKind::NotInSL3)
        return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  auto cost = [&](const std::vector<double>& x) {
    const auto nodes = nodes_of(x);
    double c = 0.0;
    for (int k = 0; k < m; ++k) c += seg(nodes, k);
    return c;
  };
  const double len = dhat_distance(p1, p2, pol.seed);
  // node k only touches segments k-1 and k
  auto grad = [&](const std::vector<double>& x, double) {
    std::vector<double> g(x.size(), 0.0);
    const double h = 1e-7 * std::max(len, 1e-3);
    std::vector<Mat3> nodes = nodes_of(x);
    for (int k = 1; k < m; ++k) {
      const Mat3 keep = nodes[static_cast<std::size_t>(k)];
      for (int d = 0; d < 8; ++d) {
        const std::size_t idx = static_cast<std::size_t>(8 * (k - 1) + d);
        double local[2];
        for (int sgn = 0; sgn < 2; ++sgn) {
          std::vector<double> xs(x.begin() + 8 * (k - 1), x.begin() + 8 * k);
          xs[static_cast<std::size_t>(d)] += sgn == 0 ? h : -h;
          nodes[static_cast<std::size_t>(k)] =
              renormalize_sl3(expm(detail::sl3_combine(xs.data(), 8)) * base[static_cast<std::size_t>(k)]);
          local[sgn] = seg(nodes, k - 1) + seg(nodes, k);
        }
        nodes[static_cast<std::size_t>(k)] = keep;
        g[idx] = (std::isfinite(local[0]) && std::isfinite(local[1])) ? (local[0] - local[1]) / (2.0 * h) : 0.0;
      }
    }
    return g;
  };

  std::vector<double> x(static_cast<std::size_t>(8 * (m - 1)), 0.0);
  if (m > 1 && pol.refine_iterations > 0) {
    res.history = detail::bfgs_descent(x, cost, grad, pol.refine_iterations, 0.05 * len);
  } else {
    res.history = {cost(x)};
  }
  res.nodes = nodes_of(x);
  res.cost = res.history.back();
  return res;
}

/// State-weighted dissipation distance. Arguments are put in a canonical order first, so the
/// result is exactly symmetric in (P1, P2).
inline double d_distance(const Mat3& f, const Mat3& p1, const Mat3& p2, const MaterialParams& p,
                         const PathPolicy& pol = {}) {
  detail::require_sl3(p1, "d_distance: P1 not in SL(3)");
  detail::require_sl3(p2, "d_distance: P2 not in SL(3)");
  if (p1 == p2) return 0.0;
  if (detail::lex_less(p2, p1)) return optimize_path(f, p2, p1, p, pol).cost;
  return optimize_path(f, p1, p2, p, pol).cost;
}

/// Cell-volume-weighted sum of d_distance over the grid.
inline double dissipation_integral(const Grid& g, const std::vector<Mat3>& fhat, const std::vector<Mat3>& p1,
                                   const std::vector<Mat3>& p2, const MaterialParams& p, const PathPolicy& pol = {}) {
  if (fhat.size() != g.num_cells() || p1.size() != g.num_cells() || p2.size() != g.num_cells())
    throw Error(ErrorKind::GridMismatch, "dissipation_integral: fields are not on the same grid");
  std::vector<double> cell(p1.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < p1.size(); ++c) cell[c] = d_distance(fhat[c], p1[c], p2[c], p, pol);
  double sum = 0.0;
  for (double v : cell) sum += v;
  return sum * g.cell_volume();
}

}  // namespace finplast
