#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finplast/grid.hpp"

using namespace finplast;

namespace {

Grid box(int n = 3) { return Grid({1.0, 2.0, 1.5}, {n, n + 1, n + 2}); }

std::vector<Vec3> affine(const Grid& g, const Mat3& a, const Vec3& c) {
  std::vector<Vec3> y(g.num_nodes());
  for (std::size_t v = 0; v < y.size(); ++v) y[v] = a * g.node_position(v) + c;
  return y;
}

}  // namespace

TEST(Grid, CountsAndBoundary) {
  const Grid g({1, 1, 1}, {2, 3, 4});
  EXPECT_EQ(g.num_cells(), 24u);
  EXPECT_EQ(g.num_nodes(), 3u * 4u * 5u);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 1.0 / 24.0);
  // default clamp x-: 4*5 nodes
  EXPECT_EQ(g.num_nodes() - g.free_nodes().size(), 20u);
  // Neumann faces: every boundary face but x-
  const std::size_t expected = 3 * 4 + 2 * (2 * 4) + 2 * (2 * 3);
  EXPECT_EQ(g.neumann_faces().size(), expected);
  for (const auto& f : g.neumann_faces()) EXPECT_FALSE(f.face == (BoxFace{0, 0}));
  double area = 0.0;
  for (const auto& f : g.neumann_faces()) area += f.area;
  EXPECT_NEAR(area, 5.0, 1e-14);
}

TEST(Grid, RejectsInvalid) {
  EXPECT_THROW(Grid({1, 1, 1}, {0, 1, 1}), Error);
  EXPECT_THROW(Grid({1, -1, 1}, {1, 1, 1}), Error);
  EXPECT_THROW(Grid({1, 1, 1}, {1, 1, 1}, {}), Error);
  EXPECT_THROW(Grid({1, 1, 1}, {1, 1, 1}, {{3, 0}}), Error);
}

TEST(GradientY, IdentityAndAffineExact) {
  const Grid g = box();
  for (const auto& m : gradient_y(g, g.identity_deformation())) EXPECT_LT(norm(m - Mat3::identity()), 1e-13);
  const Mat3 a{{1.2, 0.3, -0.1, 0.05, 0.9, 0.2, -0.3, 0.4, 1.1}};
  for (const auto& m : gradient_y(g, affine(g, a, {0.5, -1, 2}))) EXPECT_LT(norm(m - a), 1e-13);
}

TEST(GradientY, MatchesInterpolantDerivative) {
  // trilinear interpolant of random nodal values, differentiated by central differences at the cell centre
  const Grid g({1, 1, 1}, {2, 2, 2});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<Vec3> y(g.num_nodes());
  for (auto& v : y) v = {nd(rng), nd(rng), nd(rng)};
  auto interp = [&](std::size_t c, const Vec3& x) {
    const auto nodes = g.cell_nodes(c);
    const Vec3 x0 = g.node_position(nodes[0]);
    Vec3 out{0, 0, 0};
    for (int b = 0; b < 8; ++b) {
      double w = 1.0;
      for (int a = 0; a < 3; ++a) {
        const double s = (x[a] - x0[a]) / g.h(a);
        w *= ((b >> a) & 1) ? s : 1.0 - s;
      }
      out += w * y[nodes[static_cast<std::size_t>(b)]];
    }
    return out;
  };
  const auto gy = gradient_y(g, y);
  const double h = 1e-6;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec3 xc = g.cell_center(c);
    for (int k = 0; k < 3; ++k) {
      Vec3 xp = xc, xm = xc;
      xp[k] += h;
      xm[k] -= h;
      const Vec3 d = (1.0 / (2 * h)) * (interp(c, xp) - interp(c, xm));
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(gy[c](i, k), d[i], 1e-8);
    }
  }
}

TEST(GradientY, AdjointIdentity) {
  const Grid g = box(2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<Vec3> y(g.num_nodes());
  for (auto& v : y) v = {nd(rng), nd(rng), nd(rng)};
  std::vector<Mat3> s(g.num_cells());
  for (auto& m : s)
    for (auto& e : m.m) e = nd(rng);
  const auto gy = gradient_y(g, y);
  const auto gt = gradient_y_adjoint(g, s);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t c = 0; c < s.size(); ++c) lhs += dot(gy[c], s[c]);
  for (std::size_t v = 0; v < y.size(); ++v) rhs += dot(y[v], gt[v]);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(GradientP, ConstantAndAffine) {
  const Grid g = box();
  std::vector<Mat3> pc(g.num_cells(), Mat3{{1, 2, 3, 4, 5, 6, 7, 8, 9}});
  for (const auto& t : gradient_P(g, pc)) EXPECT_EQ(t.norm(), 0.0);

  Mat33 slope;
  for (std::size_t n = 0; n < 27; ++n) slope.t[n] = 0.1 * static_cast<double>(n) - 1.0;
  std::vector<Mat3> pa(g.num_cells());
  for (std::size_t c = 0; c < pa.size(); ++c) {
    const Vec3 x = g.cell_center(c);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) pa[c](i, j) = slope(i, j, 0) * x[0] + slope(i, j, 1) * x[1] + slope(i, j, 2) * x[2];
  }
  for (const auto& t : gradient_P(g, pa))
    for (std::size_t n = 0; n < 27; ++n) EXPECT_NEAR(t.t[n], slope.t[n], 1e-12);
}

TEST(GradientP, SecondOrderInteriorError) {
  // P_00 = sin(3x): the interior central difference is exactly sin(3h)/h cos(3x),
  // so its error relative to 3 cos(3x) is 1 - sin(3h)/(3h) = O(h^2)
  auto rel = [](int n) {
    const Grid g({1, 1, 1}, {n, 1, 1});
    const double h = 1.0 / n;
    std::vector<Mat3> p(g.num_cells());
    for (std::size_t c = 0; c < p.size(); ++c) p[c](0, 0) = std::sin(3.0 * g.cell_center(c)[0]);
    const auto t = gradient_P(g, p);
    double worst = 0.0;
    for (std::size_t c = 1; c + 1 < p.size(); ++c) {
      const double x = g.cell_center(c)[0];
      EXPECT_NEAR(t[c](0, 0, 0), std::sin(3.0 * h) / h * std::cos(3.0 * x), 1e-12);
      if (std::abs(std::cos(3.0 * x)) > 0.1)
        worst = std::max(worst, std::abs(t[c](0, 0, 0) / (3.0 * std::cos(3.0 * x)) - 1.0));
    }
    return worst;
  };
  const double e1 = rel(8), e2 = rel(16), e3 = rel(32);
  EXPECT_NEAR(e1 / e2, 4.0, 0.4);
  EXPECT_NEAR(e2 / e3, 4.0, 0.4);
}

TEST(GradientP, AdjointIdentity) {
  const Grid g = box(2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<Mat3> p(g.num_cells());
  for (auto& m : p)
    for (auto& e : m.m) e = nd(rng);
  std::vector<Mat33> t(g.num_cells());
  for (auto& m : t)
    for (auto& e : m.t) e = nd(rng);
  const auto gp = gradient_P(g, p);
  const auto gt = gradient_P_adjoint(g, t);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    for (std::size_t n = 0; n < 27; ++n) lhs += gp[c].t[n] * t[c].t[n];
    rhs += dot(p[c], gt[c]);
  }
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Loads, ZeroLoadsGiveZeroWork) {
  const Grid g = box(2);
  const auto l = LoadProgram::uniform(g, {0, 1}, {Vec3{0, 0, 0}, Vec3{0, 0, 0}}, {Vec3{0, 0, 0}, Vec3{0, 0, 0}}, {0, 1});
  EXPECT_EQ(l.work(g.identity_deformation(), 0.5), 0.0);
  EXPECT_EQ(l.power(g.identity_deformation(), 0.5), 0.0);
}

TEST(Loads, UniformBodyForceWork) {
  const Grid g({1, 1, 1}, {3, 3, 3});
  const Vec3 e1{1, 0, 0}, z{0, 0, 0};
  const auto l = LoadProgram::uniform(g, {0, 1}, {e1, e1}, {z, z}, {0, 1});
  EXPECT_NEAR(l.work(g.identity_deformation(), 0.3), 0.5, 1e-14);
}

TEST(Loads, TractionWorkAndPiecewiseLinearPower) {
  const Grid g({1, 1, 1}, {2, 2, 2});
  const Vec3 z{0, 0, 0};
  // traction (0, s(t), 0) on x+, s ramps 0 -> 2 on [0,1] then back to 1 on [1,2]
  const auto l = LoadProgram::uniform(g, {0, 1, 2}, {z, z, z}, {z, Vec3{0, 2, 0}, Vec3{0, 1, 0}}, {0, 1});
  const auto y = g.identity_deformation();
  // int_{x=1} y_2 dA = 1/2
  EXPECT_NEAR(l.work(y, 0.5), 1.0 * 0.5, 1e-14);
  EXPECT_NEAR(l.power(y, 0.5), 2.0 * 0.5, 1e-14);
  EXPECT_NEAR(l.power(y, 1.5), -1.0 * 0.5, 1e-14);
  // derivative of work by differences
  EXPECT_NEAR((l.work(y, 0.6) - l.work(y, 0.4)) / 0.2, l.power(y, 0.5), 1e-12);
  EXPECT_THROW(l.work(y, 2.5), Error);
  EXPECT_THROW(l.work(y, -0.1), Error);
}

TEST(Loads, SmoothInterpolationHasContinuousRate) {
  const Grid g({1, 1, 1}, {2, 2, 2});
  const Vec3 z{0, 0, 0};
  const auto l = LoadProgram::uniform(g, {0, 1, 2}, {z, z, z}, {z, Vec3{0, 2, 0}, Vec3{0, 1, 0}}, {0, 1},
                                      LoadInterpolation::Smooth);
  const auto y = g.identity_deformation();
  EXPECT_NEAR(l.work(y, 1.0), 1.0, 1e-14);
  EXPECT_NEAR(l.power(y, 1.0 - 1e-9), l.power(y, 1.0 + 1e-9), 1e-6);
  const double h = 1e-6;
  for (double t : {0.3, 0.9, 1.4})
    EXPECT_NEAR((l.work(y, t + h) - l.work(y, t - h)) / (2 * h), l.power(y, t), 1e-7);
}

TEST(Loads, RejectsMismatchedTables) {
  const Grid g({1, 1, 1}, {2, 2, 2});
  LoadProgram::Knot k;
  k.t = 0;
  k.body.assign(3, Vec3{0, 0, 0});
  EXPECT_THROW(LoadProgram(g, {k}), Error);
  LoadProgram::Knot a, b;
  a.t = 1;
  b.t = 0.5;
  EXPECT_THROW(LoadProgram(g, {a, b}), Error);
}

TEST(Hourglass, ZeroOnAffineFields) {
  const Grid g = box(2);
  const Mat3 a{{1.1, 0.2, -0.3, 0.0, 0.9, 0.4, 0.5, -0.1, 1.2}};
  for (const auto& hg : hourglass_y(g, affine(g, a, {1, 2, 3})))
    for (const auto& m : hg) EXPECT_LT(norm(m), 1e-13);
}

TEST(Hourglass, CompletesTheCellCenterGradient) {
  // unit cube: the 8 corner sign patterns are orthogonal, so
  // sum_b |y_b - mean|^2 = 2 |grad y|^2 + 8 |s|^2 and only translations are invisible
  const Grid g({1, 1, 1}, {1, 1, 1});
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int s = 0; s < 20; ++s) {
    std::vector<Vec3> y(8);
    for (auto& v : y) v = {nd(rng), nd(rng), nd(rng)};
    Vec3 mean{0, 0, 0};
    for (const auto& v : y) mean += 0.125 * v;
    double spread = 0.0;
    for (const auto& v : y) spread += dot(v - mean, v - mean);
    const Mat3 f = gradient_y(g, y)[0];
    double hg2 = 0.0;
    const auto hg = hourglass_y(g, y);
    for (const auto& m : hg[0]) hg2 += dot(m, m);
    EXPECT_NEAR(spread, 2.0 * dot(f, f) + 8.0 * hg2, 1e-12 * spread);
  }
}

TEST(Hourglass, AdjointIdentityAndFrameInvariance) {
  const Grid g = box(2);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<Vec3> y(g.num_nodes());
  for (auto& v : y) v = {nd(rng), nd(rng), nd(rng)};
  std::vector<Hourglass> h(g.num_cells());
  for (auto& cell : h)
    for (auto& m : cell) m = {nd(rng), nd(rng), nd(rng)};
  const auto hy = hourglass_y(g, y);
  const auto ht = hourglass_y_adjoint(g, h);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t c = 0; c < h.size(); ++c)
    for (std::size_t m = 0; m < 4; ++m) lhs += dot(hy[c][m], h[c][m]);
  for (std::size_t v = 0; v < y.size(); ++v) rhs += dot(y[v], ht[v]);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));

  // rotated field: each mode rotates, so |s| is unchanged
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Mat3 r{{c, -s, 0, s, c, 0, 0, 0, 1}};
  std::vector<Vec3> ry(y.size());
  for (std::size_t v = 0; v < y.size(); ++v) ry[v] = r * y[v] + Vec3{1, -2, 3};
  const auto hr = hourglass_y(g, ry);
  for (std::size_t k = 0; k < hy.size(); ++k)
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(norm(hr[k][m]), norm(hy[k][m]), 1e-12);
}
