#pragma once

// Structured hexahedral grid on a box, discrete gradients, boundary faces and loads.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/tensor.hpp"

namespace finplast {

/// Boundary face of the box: axis 0..2, side 0 (minus) or 1 (plus).
struct BoxFace {
  int axis = 0;
  int side = 0;
  friend bool operator==(const BoxFace&, const BoxFace&) = default;
};

inline std::string to_string(BoxFace f) {
  return std::string(1, "xyz"[f.axis]) + (f.side == 0 ? "-" : "+");
}

/// One quadrilateral cell face on the boundary.
struct BoundaryFace {
  std::size_t cell = 0;
  BoxFace face;
  std::array<std::size_t, 4> nodes{};
  double area = 0.0;
};

class Grid {
 public:
  Grid(std::array<double, 3> extent, std::array<int, 3> cells, std::vector<BoxFace> dirichlet = {{0, 0}})
      : extent_(extent), n_(cells), dirichlet_faces_(std::move(dirichlet)) {
    for (int a = 0; a < 3; ++a) {
      if (n_[a] < 1) throw Error(ErrorKind::InvalidGrid, "cell count must be >= 1 on every axis");
      if (!(extent_[a] > 0.0)) throw Error(ErrorKind::InvalidGrid, "box extents must be positive");
      h_[a] = extent_[a] / n_[a];
    }
    if (dirichlet_faces_.empty()) throw Error(ErrorKind::InvalidGrid, "clamped boundary must be nonempty");
    for (const auto& f : dirichlet_faces_)
      if (f.axis < 0 || f.axis > 2 || f.side < 0 || f.side > 1)
        throw Error(ErrorKind::InvalidGrid, "invalid clamped face");

    dirichlet_.assign(num_nodes(), 0);
    for (std::size_t v = 0; v < num_nodes(); ++v) {
      const auto ijk = node_ijk(v);
      for (const auto& f : dirichlet_faces_)
        if (ijk[f.axis] == (f.side == 0 ? 0 : n_[f.axis])) dirichlet_[v] = 1;
    }
    for (std::size_t v = 0; v < num_nodes(); ++v)
      if (!dirichlet_[v]) free_nodes_.push_back(v);

    for (int axis = 0; axis < 3; ++axis)
      for (int side = 0; side < 2; ++side) {
        const BoxFace bf{axis, side};
        bool clamped = false;
        for (const auto& f : dirichlet_faces_) clamped = clamped || (f == bf);
        if (clamped) continue;
        const int u = (axis + 1) % 3, w = (axis + 2) % 3;
        for (int b = 0; b < n_[w]; ++b)
          for (int a = 0; a < n_[u]; ++a) {
            std::array<int, 3> c{};
            c[axis] = side == 0 ? 0 : n_[axis] - 1;
            c[u] = a;
            c[w] = b;
            BoundaryFace face;
            face.cell = cell_index(c[0], c[1], c[2]);
            face.face = bf;
            face.area = h_[u] * h_[w];
            int k = 0;
            for (int db = 0; db < 2; ++db)
              for (int da = 0; da < 2; ++da) {
                std::array<int, 3> v = c;
                v[axis] += side;
                v[u] += da;
                v[w] += db;
                face.nodes[static_cast<std::size_t>(k++)] = node_index(v[0], v[1], v[2]);
              }
            neumann_.push_back(face);
          }
      }
  }

  const std::array<double, 3>& extent() const { return extent_; }
  const std::array<int, 3>& cells() const { return n_; }
  double h(int axis) const { return h_[axis]; }
  double cell_volume() const { return h_[0] * h_[1] * h_[2]; }
  double volume() const { return extent_[0] * extent_[1] * extent_[2]; }

  std::size_t num_cells() const { return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2]; }
  std::size_t num_nodes() const { return static_cast<std::size_t>(n_[0] + 1) * (n_[1] + 1) * (n_[2] + 1); }

  std::size_t node_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i + (n_[0] + 1) * (j + (n_[1] + 1) * k));
  }
  std::size_t cell_index(int i, int j, int k) const { return static_cast<std::size_t>(i + n_[0] * (j + n_[1] * k)); }

  std::array<int, 3> node_ijk(std::size_t v) const {
    const int nx = n_[0] + 1, ny = n_[1] + 1;
    const int iv = static_cast<int>(v);
    return {iv % nx, (iv / nx) % ny, iv / (nx * ny)};
  }
  std::array<int, 3> cell_ijk(std::size_t c) const {
    const int ic = static_cast<int>(c);
    return {ic % n_[0], (ic / n_[0]) % n_[1], ic / (n_[0] * n_[1])};
  }

  Vec3 node_position(std::size_t v) const {
    const auto ijk = node_ijk(v);
    return {ijk[0] * h_[0], ijk[1] * h_[1], ijk[2] * h_[2]};
  }
  Vec3 cell_center(std::size_t c) const {
    const auto ijk = cell_ijk(c);
    return {(ijk[0] + 0.5) * h_[0], (ijk[1] + 0.5) * h_[1], (ijk[2] + 0.5) * h_[2]};
  }

  /// The 8 corner nodes of a cell, ordered by (dx, dy, dz) bits.
  std::array<std::size_t, 8> cell_nodes(std::size_t c) const {
    const auto ijk = cell_ijk(c);
    std::array<std::size_t, 8> out{};
    for (int b = 0; b < 8; ++b)
      out[static_cast<std::size_t>(b)] = node_index(ijk[0] + (b & 1), ijk[1] + ((b >> 1) & 1), ijk[2] + ((b >> 2) & 1));
    return out;
  }

  /// Trilinear shape-function gradients at the cell center, same ordering as cell_nodes.
  std::array<Vec3, 8> shape_gradients() const {
    std::array<Vec3, 8> g{};
    for (int b = 0; b < 8; ++b) {
      const double sx = (b & 1) ? 1.0 : -1.0;
      const double sy = ((b >> 1) & 1) ? 1.0 : -1.0;
      const double sz = ((b >> 2) & 1) ? 1.0 : -1.0;
      g[static_cast<std::size_t>(b)] = {sx / (4.0 * h_[0]), sy / (4.0 * h_[1]), sz / (4.0 * h_[2])};
    }
    return g;
  }

  bool is_dirichlet(std::size_t v) const { return dirichlet_[v] != 0; }
  const std::vector<std::size_t>& free_nodes() const { return free_nodes_; }
  const std::vector<BoxFace>& dirichlet_faces() const { return dirichlet_faces_; }
  const std::vector<BoundaryFace>& neumann_faces() const { return neumann_; }

  std::vector<Vec3> identity_deformation() const {
    std::vector<Vec3> y(num_nodes());
    for (std::size_t v = 0; v < y.size(); ++v) y[v] = node_position(v);
    return y;
  }

  bool operator==(const Grid& o) const { return extent_ == o.extent_ && n_ == o.n_ && dirichlet_faces_ == o.dirichlet_faces_; }

 private:
  std::array<double, 3> extent_;
  std::array<int, 3> n_;
  std::array<double, 3> h_{};
  std::vector<BoxFace> dirichlet_faces_;
  std::vector<char> dirichlet_;
  std::vector<std::size_t> free_nodes_;
  std::vector<BoundaryFace> neumann_;
};

/// Cell-centred gradient of the trilinear interpolant of y; exact for affine y.
inline std::vector<Mat3> gradient_y(const Grid& g, const std::vector<Vec3>& y) {
  if (y.size() != g.num_nodes()) throw Error(ErrorKind::SizeMismatch, "gradient_y: nodal field size");
  const auto dn = g.shape_gradients();
  std::vector<Mat3> out(g.num_cells());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto nodes = g.cell_nodes(c);
    Mat3 f;
    for (std::size_t a = 0; a < 8; ++a) {
      const Vec3& ya = y[nodes[a]];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) f(i, j) += ya[static_cast<std::size_t>(i)] * dn[a][static_cast<std::size_t>(j)];
    }
    out[c] = f;
  }
  return out;
}

/// Adjoint of gradient_y: maps per-cell stresses to nodal forces.
inline std::vector<Vec3> gradient_y_adjoint(const Grid& g, const std::vector<Mat3>& s) {
  if (s.size() != g.num_cells()) throw Error(ErrorKind::SizeMismatch, "gradient_y_adjoint: cell field size");
  const auto dn = g.shape_gradients();
  std::vector<Vec3> out(g.num_nodes(), Vec3{0, 0, 0});
  for (std::size_t c = 0; c < s.size(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (std::size_t a = 0; a < 8; ++a) {
      Vec3& o = out[nodes[a]];
      for (int i = 0; i < 3; ++i) {
        double v = 0.0;
        for (int j = 0; j < 3; ++j) v += s[c](i, j) * dn[a][static_cast<std::size_t>(j)];
        o[static_cast<std::size_t>(i)] += v;
      }
    }
  }
  return out;
}

/// Per cell, the four trilinear modes the cell-centre gradient does not see (sign patterns
/// xy, yz, zx, xyz over the corners), each scaled by 1/(8 h) with h the mean spacing.
using Hourglass = std::array<Vec3, 4>;

namespace detail {
inline std::array<std::array<double, 4>, 8> hourglass_weights(const Grid& g) {
  const double h = (g.h(0) + g.h(1) + g.h(2)) / 3.0;
  std::array<std::array<double, 4>, 8> w{};
  for (int b = 0; b < 8; ++b) {
    const double sx = (b & 1) ? 1.0 : -1.0;
    const double sy = ((b >> 1) & 1) ? 1.0 : -1.0;
    const double sz = ((b >> 2) & 1) ? 1.0 : -1.0;
    w[static_cast<std::size_t>(b)] = {sx * sy / (8.0 * h), sy * sz / (8.0 * h), sz * sx / (8.0 * h),
                                      sx * sy * sz / (8.0 * h)};
  }
  return w;
}
}  // namespace detail

inline std::vector<Hourglass> hourglass_y(const Grid& g, const std::vector<Vec3>& y) {
  if (y.size() != g.num_nodes()) throw Error(ErrorKind::SizeMismatch, "hourglass_y: nodal field size");
  const auto w = detail::hourglass_weights(g);
  std::vector<Hourglass> out(g.num_cells());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto nodes = g.cell_nodes(c);
    Hourglass hg{};
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t m = 0; m < 4; ++m) hg[m] += w[a][m] * y[nodes[a]];
    out[c] = hg;
  }
  return out;
}

/// Adjoint of hourglass_y.
inline std::vector<Vec3> hourglass_y_adjoint(const Grid& g, const std::vector<Hourglass>& h) {
  if (h.size() != g.num_cells()) throw Error(ErrorKind::SizeMismatch, "hourglass_y_adjoint: cell field size");
  const auto w = detail::hourglass_weights(g);
  std::vector<Vec3> out(g.num_nodes(), Vec3{0, 0, 0});
  for (std::size_t c = 0; c < h.size(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t m = 0; m < 4; ++m) out[nodes[a]] += w[a][m] * h[c][m];
  }
  return out;
}

namespace detail {

// Stencil of d/dx_axis at a cell: (lo, hi, 1/spacing); lo == hi means zero.
inline void diff_stencil(const Grid& g, std::size_t c, int axis, std::size_t& lo, std::size_t& hi, double& w) {
  auto ijk = g.cell_ijk(c);
  const int n = g.cells()[axis];
  if (n == 1) {
    lo = hi = c;
    w = 0.0;
    return;
  }
  auto at = [&](int shift) {
    auto p = ijk;
    p[axis] += shift;
    return g.cell_index(p[0], p[1], p[2]);
  };
  const int i = ijk[axis];
  if (i == 0) {
    lo = c;
    hi = at(1);
    w = 1.0 / g.h(axis);
  } else if (i == n - 1) {
    lo = at(-1);
    hi = c;
    w = 1.0 / g.h(axis);
  } else {
    lo = at(-1);
    hi = at(1);
    w = 0.5 / g.h(axis);
  }
}

}  // namespace detail

/// (grad P)_{ijk} = dP_ij/dx_k by central differences inside, one-sided at the boundary.
inline std::vector<Mat33> gradient_P(const Grid& g, const std::vector<Mat3>& p) {
  if (p.size() != g.num_cells()) throw Error(ErrorKind::SizeMismatch, "gradient_P: cell field size");
  std::vector<Mat33> out(p.size());
  for (std::size_t c = 0; c < p.size(); ++c)
    for (int k = 0; k < 3; ++k) {
      std::size_t lo = 0, hi = 0;
      double w = 0.0;
      detail::diff_stencil(g, c, k, lo, hi, w);
      if (w == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[c](i, j, k) = w * (p[hi](i, j) - p[lo](i, j));
    }
  return out;
}

/// Adjoint of gradient_P.
inline std::vector<Mat3> gradient_P_adjoint(const Grid& g, const std::vector<Mat33>& t) {
  if (t.size() != g.num_cells()) throw Error(ErrorKind::SizeMismatch, "gradient_P_adjoint: cell field size");
  std::vector<Mat3> out(t.size());
  for (std::size_t c = 0; c < t.size(); ++c)
    for (int k = 0; k < 3; ++k) {
      std::size_t lo = 0, hi = 0;
      double w = 0.0;
      detail::diff_stencil(g, c, k, lo, hi, w);
      if (w == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          out[hi](i, j) += w * t[c](i, j, k);
          out[lo](i, j) -= w * t[c](i, j, k);
        }
    }
  return out;
}

enum class LoadInterpolation { Linear, Smooth };

/// Body force b (per cell, force/volume) and traction (per Neumann face, force/area)
/// tabulated at time knots; linear or C1 cubic-Hermite in between.
class LoadProgram {
 public:
  struct Knot {
    double t = 0.0;
    std::vector<Vec3> body;      // per cell
    std::vector<Vec3> traction;  // per Neumann face
  };

  LoadProgram() = default;

  LoadProgram(const Grid& g, std::vector<Knot> knots, LoadInterpolation mode = LoadInterpolation::Linear)
      : knots_(std::move(knots)), mode_(mode) {
    if (knots_.empty()) throw Error(ErrorKind::InvalidArgument, "load program needs at least one knot");
    for (std::size_t k = 0; k < knots_.size(); ++k) {
      auto& kn = knots_[k];
      if (k > 0 && !(kn.t > knots_[k - 1].t)) throw Error(ErrorKind::InvalidArgument, "load knots must increase");
      if (kn.body.empty()) kn.body.assign(g.num_cells(), Vec3{0, 0, 0});
      if (kn.traction.empty()) kn.traction.assign(g.neumann_faces().size(), Vec3{0, 0, 0});
      if (kn.body.size() != g.num_cells() || kn.traction.size() != g.neumann_faces().size())
        throw Error(ErrorKind::SizeMismatch, "load knot field sizes do not match the grid");
      nodal_.push_back(assemble(g, kn));
    }
  }

  /// Spatially uniform body force and traction on one box face, scaled per knot.
  static LoadProgram uniform(const Grid& g, const std::vector<double>& times, const std::vector<Vec3>& body,
                             const std::vector<Vec3>& traction, BoxFace face,
                             LoadInterpolation mode = LoadInterpolation::Linear) {
    if (body.size() != times.size() || traction.size() != times.size())
      throw Error(ErrorKind::SizeMismatch, "uniform load: one body and traction vector per knot");
    std::vector<Knot> knots;
    for (std::size_t k = 0; k < times.size(); ++k) {
      Knot kn;
      kn.t = times[k];
      kn.body.assign(g.num_cells(), body[k]);
      kn.traction.resize(g.neumann_faces().size());
      for (std::size_t f = 0; f < kn.traction.size(); ++f)
        kn.traction[f] = g.neumann_faces()[f].face == face ? traction[k] : Vec3{0, 0, 0};
      knots.push_back(std::move(kn));
    }
    return LoadProgram(g, std::move(knots), mode);
  }

  double t_begin() const { return knots_.front().t; }
  double t_end() const { return knots_.back().t; }
  LoadInterpolation mode() const { return mode_; }
  const std::vector<Knot>& knots() const { return knots_; }

  /// Nodal force vector l(t).
  std::vector<Vec3> nodal_force(double t) const { return combine(weights(t, false)); }
  /// Nodal rate l'(t).
  std::vector<Vec3> nodal_rate(double t) const { return combine(weights(t, true)); }

  double work(const std::vector<Vec3>& y, double t) const { return pair(weights(t, false), y); }
  double power(const std::vector<Vec3>& y, double t) const { return pair(weights(t, true), y); }

  /// sup_t of the nodal l2 norm of l'(t), sampled at knots and segment midpoints.
  double max_rate_norm() const {
    double best = 0.0;
    auto probe = [&](double t) {
      double s = 0.0;
      for (const auto& f : nodal_rate(t)) s += dot(f, f);
      best = std::max(best, std::sqrt(s));
    };
    for (std::size_t k = 0; k < knots_.size(); ++k) {
      probe(knots_[k].t);
      if (k + 1 < knots_.size()) {
        probe(0.5 * (knots_[k].t + knots_[k + 1].t));
        probe(knots_[k].t + 1e-9 * (knots_[k + 1].t - knots_[k].t));
        probe(knots_[k + 1].t - 1e-9 * (knots_[k + 1].t - knots_[k].t));
      }
    }
    return best;
  }

  /// Interpolation weights of the knot values (or their time derivatives) at t.
  std::vector<double> weights(double t, bool derivative) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t_end()));
    if (t < t_begin() - tol || t > t_end() + tol) throw Error(ErrorKind::TimeOutOfRange, "load time out of range");
    const std::size_t n = knots_.size();
    std::vector<double> w(n, 0.0);
    if (n == 1) {
      if (!derivative) w[0] = 1.0;
      return w;
    }
    t = std::clamp(t, t_begin(), t_end());
    std::size_t k = 0;
    while (k + 2 < n && t >= knots_[k + 1].t) ++k;
    const double t0 = knots_[k].t, t1 = knots_[k + 1].t, dt = t1 - t0;
    const double s = (t - t0) / dt;
    if (mode_ == LoadInterpolation::Linear) {
      if (derivative) {
        w[k] = -1.0 / dt;
        w[k + 1] = 1.0 / dt;
      } else {
        w[k] = 1.0 - s;
        w[k + 1] = s;
      }
      return w;
    }
    // cubic Hermite with finite-difference slopes (linear in the knot values)
    auto slope = [&](std::size_t j) {
      std::vector<double> m(n, 0.0);
      const std::size_t a = j == 0 ? 0 : j - 1;
      const std::size_t b = j + 1 == n ? j : j + 1;
      const double span = knots_[b].t - knots_[a].t;
      m[a] -= 1.0 / span;
      m[b] += 1.0 / span;
      return m;
    };
    double h00, h10, h01, h11;
    if (derivative) {
      h00 = (6 * s * s - 6 * s) / dt;
      h10 = 3 * s * s - 4 * s + 1;
      h01 = (-6 * s * s + 6 * s) / dt;
      h11 = 3 * s * s - 2 * s;
    } else {
      h00 = 2 * s * s * s - 3 * s * s + 1;
      h10 = (s * s * s - 2 * s * s + s) * dt;
      h01 = -2 * s * s * s + 3 * s * s;
      h11 = (s * s * s - s * s) * dt;
    }
    const auto m0 = slope(k), m1 = slope(k + 1);
    w[k] += h00;
    w[k + 1] += h01;
    for (std::size_t j = 0; j < n; ++j) w[j] += h10 * m0[j] + h11 * m1[j];
    return w;
  }

 private:
  static std::vector<Vec3> assemble(const Grid& g, const Knot& kn) {
    std::vector<Vec3> f(g.num_nodes(), Vec3{0, 0, 0});
    const double share = g.cell_volume() / 8.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      for (auto v : g.cell_nodes(c)) f[v] += share * kn.body[c];
    const auto& faces = g.neumann_faces();
    for (std::size_t i = 0; i < faces.size(); ++i)
      for (auto v : faces[i].nodes) f[v] += (faces[i].area / 4.0) * kn.traction[i];
    return f;
  }

  std::vector<Vec3> combine(const std::vector<double>& w) const {
    std::vector<Vec3> out(nodal_.front().size(), Vec3{0, 0, 0});
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] == 0.0) continue;
      for (std::size_t v = 0; v < out.size(); ++v) out[v] += w[k] * nodal_[k][v];
    }
    return out;
  }

  double pair(const std::vector<double>& w, const std::vector<Vec3>& y) const {
    if (y.size() != nodal_.front().size()) throw Error(ErrorKind::SizeMismatch, "load pairing: nodal field size");
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] == 0.0) continue;
      double sk = 0.0;
      for (std::size_t v = 0; v < y.size(); ++v) sk += dot(nodal_[k][v], y[v]);
      s += w[k] * sk;
    }
    return s;
  }

  std::vector<Knot> knots_;
  std::vector<std::vector<Vec3>> nodal_;
  LoadInterpolation mode_ = LoadInterpolation::Linear;
};

}  // namespace finplast
