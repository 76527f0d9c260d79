#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finplast/tensor.hpp"

using namespace finplast;

namespace {

Mat3 random_mat(std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> nd;
  Mat3 a;
  for (auto& v : a.m) v = s * nd(rng);
  return a;
}

Mat3 random_traceless(std::mt19937_64& rng, double len) {
  Mat3 a = deviator(random_mat(rng));
  return (len / norm(a)) * a;
}

// Taylor series, summed until the terms vanish; independent of the Pade code.
Mat3 exp_series(const Mat3& a) {
  Mat3 sum = Mat3::identity(), term = Mat3::identity();
  for (int k = 1; k < 80; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

double rel(const Mat3& a, const Mat3& b) { return norm(a - b) / std::max(1.0, norm(b)); }

}  // namespace

TEST(Cofactor, Identity) { EXPECT_EQ(cofactor(Mat3::identity()), Mat3::identity()); }

TEST(Cofactor, DiagonalMinors) { EXPECT_LT(norm(cofactor(diag(2, 1, 1)) - diag(1, 2, 2)), 1e-15); }

TEST(Cofactor, EqualsDetTimesInverseTranspose) {
  std::mt19937_64 rng(1);
  for (int s = 0; s < 100; ++s) {
    const Mat3 a = random_mat(rng) + 2.0 * Mat3::identity();
    EXPECT_LT(rel(cofactor(a), det(a) * transpose(inverse(a))), 1e-12);
  }
}

TEST(Cofactor, IsDerivativeOfDet) {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int s = 0; s < 50; ++s) {
    const Mat3 a = random_mat(rng), d = random_mat(rng);
    const double fd = (det(a + h * d) - det(a - h * d)) / (2 * h);
    EXPECT_NEAR(dot(cofactor(a), d), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Deviator, Examples) {
  EXPECT_LT(norm(deviator(Mat3::identity())), 1e-15);
  EXPECT_LT(norm(deviator(diag(3, 0, 0)) - diag(2, -1, -1)), 1e-15);
  std::mt19937_64 rng(3);
  const Mat3 a = random_traceless(rng, 1.3);
  EXPECT_LT(norm(deviator(a) - a), 1e-15);
}

TEST(Deviator, IsProjector) {
  std::mt19937_64 rng(4);
  for (int s = 0; s < 50; ++s) {
    const Mat3 a = random_mat(rng);
    EXPECT_LT(norm(deviator(deviator(a)) - deviator(a)), 1e-14);
    EXPECT_LT(std::abs(trace(deviator(a))), 1e-14);
  }
}

TEST(TracelessMat3, ProjectsOnConstruction) {
  std::mt19937_64 rng(5);
  const Mat3 a = random_mat(rng, 10.0);
  const TracelessMat3 t(a);
  EXPECT_LE(std::abs(trace(t.mat())), 1e-12 * max_abs(t.mat()));
}

TEST(MatExp, ZeroIsIdentity) { EXPECT_EQ(mat_exp(TracelessMat3()), Mat3::identity()); }

TEST(MatExp, MatchesTaylorSeries) {
  std::mt19937_64 rng(6);
  for (int s = 0; s < 50; ++s) {
    const Mat3 a = random_traceless(rng, 0.2 + 1.8 * s / 50.0);
    EXPECT_LT(rel(expm(a), exp_series(a)), 1e-13);
  }
}

TEST(MatExp, InversePairAndDeterminant) {
  std::mt19937_64 rng(7);
  for (int s = 0; s < 100; ++s) {
    const TracelessMat3 a(random_traceless(rng, 2.0 * (s + 1) / 100.0));
    const TracelessMat3 na(-1.0 * a.mat());
    EXPECT_LT(norm(mat_exp(a) * mat_exp(na) - Mat3::identity()), 1e-10);
    EXPECT_NEAR(det(mat_exp(a)), 1.0, 1e-10);
  }
}

TEST(MatExp, CommutingSumSplits) {
  const Mat3 a = diag(0.3, -0.1, -0.2), b = diag(-0.7, 0.5, 0.2);
  EXPECT_LT(rel(expm(a + b), expm(a) * expm(b)), 1e-14);
}

TEST(MatExp, NormBound) {
  std::mt19937_64 rng(8);
  for (int s = 0; s < 100; ++s) {
    const Mat3 a = random_traceless(rng, 3.0 * (s + 1) / 100.0);
    EXPECT_LE(norm(expm(a)), std::exp(norm(a)) * std::sqrt(3.0) * (1 + 1e-14));
  }
}

TEST(MatExp, FrechetDerivativeMatchesDifferences) {
  std::mt19937_64 rng(9);
  const Mat3 a = random_traceless(rng, 1.0), e = random_mat(rng);
  const double h = 1e-6;
  const Mat3 fd = (expm(a + h * e) - expm(a - h * e)) / (2 * h);
  EXPECT_LT(rel(expm_frechet(a, e), fd), 1e-8);
  // adjoint: <L(A,E), G> = <E, L*(A,G)>
  const Mat3 g = random_mat(rng);
  EXPECT_NEAR(dot(expm_frechet(a, e), g), dot(e, expm_frechet_adjoint(a, g)), 1e-12);
}

TEST(MatLog, Identity) { EXPECT_EQ(mat_log(Mat3::identity()).norm(), 0.0); }

TEST(MatLog, RoundTrip) {
  std::mt19937_64 rng(10);
  for (int s = 0; s < 100; ++s) {
    const Mat3 a = random_traceless(rng, (s + 1) / 100.0);
    const TracelessMat3 l = mat_log(expm(a));
    EXPECT_LT(norm(l.mat() - a), 1e-8);
    EXPECT_LT(std::abs(trace(l.mat())), 1e-10);
  }
}

TEST(MatLog, LargerArgumentsRoundTripThroughExp) {
  std::mt19937_64 rng(11);
  for (int s = 0; s < 50; ++s) {
    const Mat3 m = expm(random_traceless(rng, 2.5));
    EXPECT_LT(rel(mat_exp(mat_log(m)), m), 1e-8);
  }
}

TEST(MatLog, RotationByPiIsUndefined) {
  const Mat3 r = diag(-1.0, -1.0, 1.0);
  try {
    mat_log(r);
    FAIL() << "expected LogUndefined";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LogUndefined);
  }
}

TEST(MatLog, RejectsNonUnimodular) {
  try {
    mat_log(diag(2, 1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotInSL3);
  }
}

TEST(SL3, RenormalizeRemovesDrift) {
  const Mat3 p = diag(1.0 + 1e-6, 1.0, 1.0);
  EXPECT_FALSE(in_sl3(p));
  const Mat3 q = renormalize_sl3(p);
  EXPECT_TRUE(in_sl3(q));
  EXPECT_NEAR(det(q), 1.0, 1e-14);
  EXPECT_THROW(renormalize_sl3(diag(-1, 1, 1)), Error);
}

TEST(Solve, SolvesLinearSystem) {
  std::mt19937_64 rng(12);
  const Mat3 a = random_mat(rng) + 3.0 * Mat3::identity(), x = random_mat(rng);
  EXPECT_LT(rel(solve(a, a * x), x), 1e-13);
}
