#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finplast/solver.hpp"

using namespace finplast;

namespace {

std::shared_ptr<const Grid> cube(int n) {
  return std::make_shared<const Grid>(std::array<double, 3>{1, 1, 1}, std::array<int, 3>{n, n, n});
}

Problem shear_problem(int n, std::size_t steps, double traction, const MaterialParams& params = {}) {
  Problem pr;
  pr.grid = cube(n);
  pr.params = params;
  pr.tau = 1.0 / static_cast<double>(steps);
  pr.nsteps = steps;
  const Vec3 z{0, 0, 0};
  pr.loads = LoadProgram::uniform(*pr.grid, {0, 1}, {z, z}, {z, Vec3{0, traction, 0}}, BoxFace{0, 1});
  pr.kernels = Kernels::exponential_gaussian(*pr.grid, 10.0, pr.tau, steps, n > 1 ? 1.0 : 0.0);
  return pr;
}

Mat3 shear(double g) {
  Mat3 f = Mat3::identity();
  f(1, 0) = g;
  return f;
}

// y = F x on a grid clamped at x = 0, valid for F = shear(g)
std::vector<Vec3> sheared(const Grid& g, double gam) {
  std::vector<Vec3> y(g.num_nodes());
  for (std::size_t v = 0; v < y.size(); ++v) y[v] = shear(gam) * g.node_position(v);
  return y;
}

}  // namespace

TEST(Lbfgs, QuadraticAndRosenbrock) {
  std::vector<double> x{3.0, -2.0, 1.0};
  const std::vector<double> c{1.0, 2.0, -3.0};
  ObjectiveFn q = [&](const std::vector<double>& v, std::vector<double>& g) {
    double f = 0.0;
    g.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double w = static_cast<double>(i + 1);
      f += 0.5 * w * (v[i] - c[i]) * (v[i] - c[i]);
      g[i] = w * (v[i] - c[i]);
    }
    return f;
  };
  auto r = lbfgs_minimize(x, q);
  EXPECT_TRUE(r.converged);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], c[i], 1e-9);

  std::vector<double> z{-1.2, 1.0};
  ObjectiveFn rosen = [](const std::vector<double>& v, std::vector<double>& g) {
    g = {-2 * (1 - v[0]) - 400 * v[0] * (v[1] - v[0] * v[0]), 200 * (v[1] - v[0] * v[0])};
    return (1 - v[0]) * (1 - v[0]) + 100 * (v[1] - v[0] * v[0]) * (v[1] - v[0] * v[0]);
  };
  r = lbfgs_minimize(z, rosen);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(z[0], 1.0, 1e-6);
  EXPECT_NEAR(z[1], 1.0, 1e-6);
}

TEST(InitialState, ZeroLoadsGiveIdentity) {
  const Problem pr = shear_problem(2, 2, 0.0);
  const StateField s =
      initial_state(std::vector<Mat3>(pr.grid->num_cells(), Mat3::identity()), pr.params, pr.grid, pr.loads, pr.policy);
  for (std::size_t v = 0; v < s.y().size(); ++v) EXPECT_LT(norm(s.y()[v] - pr.grid->node_position(v)), 1e-12);
  EXPECT_NEAR(total_energy(s, 0.0, pr.params, pr.loads), 0.0, 1e-14);
}

TEST(InitialState, LinearResponseToSmallBodyForce) {
  auto g = cube(2);
  const MaterialParams p;
  SolverPolicy pol;
  auto dev = [&](double b) {
    const Vec3 z{0, 0, 0}, f{0, b, 0};
    const auto loads = LoadProgram::uniform(*g, {0, 1}, {f, f}, {z, z}, BoxFace{0, 1});
    const StateField s = initial_state(std::vector<Mat3>(g->num_cells(), Mat3::identity()), p, g, loads, pol);
    double m = 0.0;
    for (const auto& fy : s.grad_y()) m = std::max(m, norm(fy - Mat3::identity()));
    return m;
  };
  const double d1 = dev(1e-4), d2 = dev(2e-4);
  EXPECT_GT(d1, 0.0);
  EXPECT_NEAR(d2 / d1, 2.0, 0.01);
}

TEST(InitialState, RejectsNonUnimodularP0) {
  const Problem pr = shear_problem(1, 1, 0.0);
  try {
    initial_state({diag(1.1, 1, 1)}, pr.params, pr.grid, pr.loads, pr.policy);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotInSL3);
  }
}

TEST(MinimizeY, StartAtMinimizer) {
  const Problem pr = shear_problem(2, 1, 0.0);
  StateField s = StateField::identity(pr.grid);
  s.refresh();
  const SolveInfo info = minimize_y(s, 0.0, pr.params, pr.loads, pr.policy);
  EXPECT_TRUE(info.converged);
  EXPECT_EQ(info.iterations, 0);
}

TEST(MinimizeY, ManufacturedQuadratic) {
  const Problem pr = shear_problem(2, 1, 0.0);
  StateField s = StateField::identity(pr.grid);
  s.refresh();
  const auto& free = pr.grid->free_nodes();
  std::vector<double> target(3 * free.size());
  for (std::size_t k = 0; k < target.size(); ++k) target[k] = 0.01 * static_cast<double>(k % 7);
  ObjectiveFn q = [&](const std::vector<double>& x, std::vector<double>& g) {
    double f = 0.0;
    g.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      f += 0.5 * (x[k] - target[k]) * (x[k] - target[k]);
      g[k] = x[k] - target[k];
    }
    return f;
  };
  const SolveInfo info = minimize_y(s, 0.0, pr.params, pr.loads, pr.policy, &q);
  EXPECT_TRUE(info.converged);
  for (std::size_t k = 0; k < free.size(); ++k)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(s.y()[free[k]][d], target[3 * k + d], 1e-9);
}

TEST(MinimizeY, DecreasesEnergyFromRandomStart) {
  const Problem pr = shear_problem(2, 1, 0.05);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  auto y = pr.grid->identity_deformation();
  for (std::size_t v : pr.grid->free_nodes()) y[v] += 0.05 * Vec3{nd(rng), nd(rng), nd(rng)};
  StateField s(pr.grid, y, std::vector<Mat3>(pr.grid->num_cells(), Mat3::identity()));
  s.refresh();
  const double e0 = total_energy(s, 0.5, pr.params, pr.loads);
  const SolveInfo info = minimize_y(s, 0.5, pr.params, pr.loads, pr.policy);
  EXPECT_TRUE(info.converged);
  EXPECT_LT(total_energy(s, 0.5, pr.params, pr.loads), e0);
  for (std::size_t v = 0; v < y.size(); ++v)
    if (pr.grid->is_dirichlet(v)) {
      EXPECT_EQ(s.y()[v], pr.grid->node_position(v));
    }
}

TEST(MinimizeP, ElasticRegimeLeavesPUnchanged) {
  auto g = cube(1);
  const MaterialParams p;
  StateField s(g, sheared(*g, 1e-3), {Mat3::identity()});
  s.refresh();
  ASSERT_LT(yield_f(Mat3::identity(), thermo_force(shear(1e-3), Mat3::identity(), p), p.flow), 0.0);
  std::vector<Mat3> a;
  const PSolveInfo info = minimize_P(s, {Mat3::identity()}, {shear(1e-3)}, p, SolverPolicy{}, a);
  EXPECT_TRUE(info.converged);
  EXPECT_EQ(norm(a[0]), 0.0);
  EXPECT_EQ(s.P()[0], Mat3::identity());
}

TEST(MinimizeP, SingleCellPastYieldSatisfiesComplementarity) {
  auto g = cube(1);
  const MaterialParams p;
  const Mat3 id = Mat3::identity();
  // shear at which the yield surface is reached from P = I
  double lo = 0.0, hi = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (yield_f(id, thermo_force(shear(mid), id, p), p.flow) < 0.0 ? lo : hi) = mid;
  }
  const double gam = 1.01 * hi;
  StateField s(g, sheared(*g, gam), {id});
  s.refresh();
  std::vector<Mat3> a;
  SolverPolicy pol;
  pol.p_tol = 1e-11;
  const PSolveInfo info = minimize_P(s, {id}, {shear(gam)}, p, pol, a);
  EXPECT_TRUE(info.converged);
  EXPECT_GT(norm(a[0]), 0.0);
  const Mat3 pm = s.P()[0];
  EXPECT_NEAR(det(pm), 1.0, 1e-8);
  const Mat3 n = conjugate_update_force(shear(gam), id, a[0], p);
  const double res = complementarity_residual(pm, n, a[0] * pm, p.flow);
  EXPECT_LE(res, 1e-6) << "|A| = " << norm(a[0]);
}

TEST(MinimizeP, AssociativeShearStaysOnYieldSurface) {
  MaterialParams p;
  p.flow = FlowConstants(0.01, 1.0 / 3.0, 0.01);
  const Problem pr = shear_problem(1, 8, 0.08, p);
  const Trajectory traj = run_evolution(pr);
  double worst = 0.0;
  for (const auto& s : traj.states) {
    const Mat3 n = thermo_force(s.grad_y()[0], s.P()[0], p);
    worst = std::max(worst, norm(deviator(n * transpose(s.P()[0]))));
  }
  EXPECT_LE(worst, p.flow.r_0 / (1.0 - p.flow.g_0) + 1e-6);
  EXPECT_GT(traj.records.back().cum_dissipation, 0.0);
}

TEST(IncrementalStep, ZeroLoadKeepsStateAndDissipatesNothing) {
  const Problem pr = shear_problem(2, 3, 0.0);
  const Trajectory traj = run_evolution(pr);
  ASSERT_EQ(traj.states.size(), 4u);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    EXPECT_EQ(traj.records[i].dissipation, 0.0);
    EXPECT_EQ(traj.states[i].P(), traj.states[0].P());
    for (std::size_t v = 0; v < traj.states[i].y().size(); ++v)
      EXPECT_LT(norm(traj.states[i].y()[v] - traj.states[0].y()[v]), 1e-12);
    EXPECT_NEAR(traj.records[i].energy, 0.0, 1e-14);
  }
}

class RampRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    pr_ = new Problem(shear_problem(2, 6, 0.05));
    traj_ = new Trajectory(run_evolution(*pr_));
  }
  static void TearDownTestSuite() {
    delete traj_;
    delete pr_;
  }
  static Problem* pr_;
  static Trajectory* traj_;
};
Problem* RampRun::pr_ = nullptr;
Trajectory* RampRun::traj_ = nullptr;

TEST_F(RampRun, Bookkeeping) {
  const Trajectory& t = *traj_;
  EXPECT_EQ(t.steps(), 6u);
  EXPECT_EQ(t.records.size(), 7u);
  EXPECT_EQ(t.grad_y_history.size(), 7u);
  EXPECT_EQ(t.mollified.size(), 7u);
  for (std::size_t i = 0; i < t.times.size(); ++i) EXPECT_NEAR(t.times[i], i * pr_->tau, 1e-15);
  for (const auto& m : t.mollified[0]) EXPECT_EQ(max_abs(m), 0.0);
  for (std::size_t i = 1; i < t.times.size(); ++i) {
    const auto expect = mollified_gradient(*pr_->grid, t.grad_y_history, i, pr_->tau, pr_->kernels);
    for (std::size_t c = 0; c < expect.size(); ++c) EXPECT_EQ(t.mollified[i][c], expect[c]);
  }
}

TEST_F(RampRun, StepwiseUpperEstimate) {
  const Trajectory& t = *traj_;
  double cum = 0.0;
  for (std::size_t i = 1; i < t.records.size(); ++i) {
    const auto& r = t.records[i];
    EXPECT_TRUE(r.converged) << "step " << i;
    EXPECT_GE(r.dissipation, 0.0);
    cum += r.dissipation;
    EXPECT_DOUBLE_EQ(r.cum_dissipation, cum);
    // E_i + D_i <= E(t_i, y_{i-1}, P_{i-1}) = E_{i-1} + power increment
    EXPECT_LE(r.energy + r.dissipation, t.records[i - 1].energy + r.power_increment + 1e-8) << "step " << i;
    for (const auto& m : t.states[i].P()) EXPECT_NEAR(det(m), 1.0, 1e-8);
  }
  EXPECT_GT(t.records.back().cum_dissipation, 0.0);
}

TEST_F(RampRun, StepOneIgnoresInitialDeformationThroughKernel) {
  // (K grad y)_0 = 0, so step 1 sees the same dissipation weights for any y_0
  Problem pr = *pr_;
  Trajectory a = start_trajectory(pr);
  Trajectory b = a;
  auto y = b.states[0].y();
  for (std::size_t v : pr.grid->free_nodes()) y[v] += Vec3{0.01, 0.0, 0.0};
  b.states[0].set_y(y);
  b.states[0].refresh();
  b.grad_y_history[0] = b.states[0].grad_y();
  EXPECT_EQ(a.mollified[0], b.mollified[0]);
  incremental_step(a, pr);
  incremental_step(b, pr);
  for (std::size_t c = 0; c < pr.grid->num_cells(); ++c) EXPECT_LT(norm(a.states[1].P()[c] - b.states[1].P()[c]), 1e-6);
}

TEST_F(RampRun, Deterministic) {
  const Trajectory again = run_evolution(*pr_);
  for (std::size_t i = 0; i < again.records.size(); ++i) {
    EXPECT_EQ(again.records[i].energy, traj_->records[i].energy);
    EXPECT_EQ(again.records[i].dissipation, traj_->records[i].dissipation);
    EXPECT_EQ(again.states[i].P(), traj_->states[i].P());
  }
}

TEST_F(RampRun, TotalDissipationWindows) {
  const Trajectory& t = *traj_;
  const double all = total_dissipation(t, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(all, t.records.back().cum_dissipation);
  const double u = t.times[3];
  EXPECT_DOUBLE_EQ(total_dissipation(t, 0.0, u) + total_dissipation(t, u, 1.0), all);
  EXPECT_EQ(total_dissipation(t, u, u), 0.0);
  EXPECT_DOUBLE_EQ(total_dissipation(t, t.times[2], t.times[3]), t.records[3].dissipation);
  double prev = 0.0;
  for (double s : t.times) {
    const double d = total_dissipation(t, 0.0, s);
    EXPECT_GE(d, prev);
    prev = d;
  }
  EXPECT_THROW(total_dissipation(t, 0.0, 1.5), Error);
  EXPECT_THROW(total_dissipation(t, 0.6, 0.2), Error);
}

TEST(SolverPolicy, Validation) {
  SolverPolicy p;
  p.inner_tol = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.max_outer = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(RunEvolution, HorizonBeyondLoads) {
  Problem pr = shear_problem(1, 2, 0.0);
  pr.nsteps = 4;
  try {
    run_evolution(pr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TimeOutOfRange);
  }
}
