#pragma once

// Dense small-matrix algebra and SL(3) manifold operations.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>

#include "finplast/errors.hpp"

namespace finplast {

/// Tolerance on |det P - 1| shared by every module.
inline constexpr double kSL3Tolerance = 1e-8;

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b) {
  a[0] += b[0];
  a[1] += b[1];
  a[2] += b[2];
  return a;
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Row-major N x N real matrix.
template <int N>
struct Mat {
  static_assert(N > 0);
  std::array<double, N * N> m{};

  static constexpr Mat zero() { return Mat{}; }
  static constexpr Mat identity() {
    Mat r;
    for (int i = 0; i < N; ++i) r(i, i) = 1.0;
    return r;
  }

  constexpr double& operator()(int i, int j) { return m[static_cast<std::size_t>(i * N + j)]; }
  constexpr double operator()(int i, int j) const { return m[static_cast<std::size_t>(i * N + j)]; }

  constexpr Mat& operator+=(const Mat& o) {
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += o.m[k];
    return *this;
  }
  constexpr Mat& operator-=(const Mat& o) {
    for (std::size_t k = 0; k < m.size(); ++k) m[k] -= o.m[k];
    return *this;
  }
  constexpr Mat& operator*=(double s) {
    for (auto& v : m) v *= s;
    return *this;
  }
  constexpr Mat& operator/=(double s) { return *this *= (1.0 / s); }

  friend constexpr bool operator==(const Mat&, const Mat&) = default;
};

using Mat3 = Mat<3>;

template <int N>
constexpr Mat<N> operator+(Mat<N> a, const Mat<N>& b) { return a += b; }
template <int N>
constexpr Mat<N> operator-(Mat<N> a, const Mat<N>& b) { return a -= b; }
template <int N>
constexpr Mat<N> operator-(Mat<N> a) { return a *= -1.0; }
template <int N>
constexpr Mat<N> operator*(double s, Mat<N> a) { return a *= s; }
template <int N>
constexpr Mat<N> operator*(Mat<N> a, double s) { return a *= s; }
template <int N>
constexpr Mat<N> operator/(Mat<N> a, double s) { return a /= s; }

template <int N>
constexpr Mat<N> operator*(const Mat<N>& a, const Mat<N>& b) {
  Mat<N> r;
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < N; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < N; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

inline Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a(0, 0) * v[0] + a(0, 1) * v[1] + a(0, 2) * v[2],
          a(1, 0) * v[0] + a(1, 1) * v[1] + a(1, 2) * v[2],
          a(2, 0) * v[0] + a(2, 1) * v[1] + a(2, 2) * v[2]};
}

template <int N>
constexpr Mat<N> transpose(const Mat<N>& a) {
  Mat<N> r;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) r(i, j) = a(j, i);
  return r;
}

template <int N>
constexpr double trace(const Mat<N>& a) {
  double t = 0.0;
  for (int i = 0; i < N; ++i) t += a(i, i);
  return t;
}

/// Frobenius inner product A : B.
template <int N>
constexpr double dot(const Mat<N>& a, const Mat<N>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.m.size(); ++k) s += a.m[k] * b.m[k];
  return s;
}

template <int N>
double norm(const Mat<N>& a) { return std::sqrt(dot(a, a)); }

/// Induced 1-norm (max column sum).
template <int N>
double norm1(const Mat<N>& a) {
  double best = 0.0;
  for (int j = 0; j < N; ++j) {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += std::abs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

template <int N>
double max_abs(const Mat<N>& a) {
  double best = 0.0;
  for (double v : a.m) best = std::max(best, std::abs(v));
  return best;
}

template <int N>
bool all_finite(const Mat<N>& a) {
  return std::all_of(a.m.begin(), a.m.end(), [](double v) { return std::isfinite(v); });
}

inline Mat3 outer(const Vec3& a, const Vec3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
  return r;
}

inline Mat3 diag(double a, double b, double c) {
  Mat3 r;
  r(0, 0) = a;
  r(1, 1) = b;
  r(2, 2) = c;
  return r;
}

/// Solves A X = B by Gaussian elimination with partial pivoting.
template <int N>
Mat<N> solve(Mat<N> a, Mat<N> b) {
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (a(piv, col) == 0.0 || !std::isfinite(a(piv, col)))
      throw Error(ErrorKind::SingularMatrix, "solve: singular matrix");
    if (piv != col)
      for (int j = 0; j < N; ++j) {
        std::swap(a(col, j), a(piv, j));
        std::swap(b(col, j), b(piv, j));
      }
    const double inv = 1.0 / a(col, col);
    for (int r = col + 1; r < N; ++r) {
      const double f = a(r, col) * inv;
      if (f == 0.0) continue;
      for (int j = col; j < N; ++j) a(r, j) -= f * a(col, j);
      for (int j = 0; j < N; ++j) b(r, j) -= f * b(col, j);
    }
  }
  for (int col = N - 1; col >= 0; --col) {
    const double inv = 1.0 / a(col, col);
    for (int j = 0; j < N; ++j) {
      double s = b(col, j);
      for (int k = col + 1; k < N; ++k) s -= a(col, k) * b(k, j);
      b(col, j) = s * inv;
    }
  }
  return b;
}

// ---- 3 x 3 specifics --------------------------------------------------------

inline double det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

/// Cofactor matrix; equals det(A) A^{-T} whenever A is invertible.
inline Mat3 cofactor(const Mat3& a) {
  Mat3 c;
  c(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  c(0, 1) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
  c(0, 2) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  c(1, 0) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
  c(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  c(1, 2) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
  c(2, 0) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
  c(2, 1) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
  c(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  return c;
}

inline Mat3 inverse(const Mat3& a) {
  const double d = det(a);
  if (!(std::abs(d) > 1e-300) || !std::isfinite(d))
    throw Error(ErrorKind::SingularMatrix, "inverse: matrix is singular");
  return transpose(cofactor(a)) / d;
}

inline Mat3 deviator(const Mat3& a) {
  Mat3 r = a;
  const double t = trace(a) / 3.0;
  for (int i = 0; i < 3; ++i) r(i, i) -= t;
  return r;
}

inline Mat3 sym(const Mat3& a) { return 0.5 * (a + transpose(a)); }

/// sl(3) element: trace removed at construction.
class TracelessMat3 {
 public:
  TracelessMat3() = default;
  explicit TracelessMat3(const Mat3& a) : a_(deviator(a)) {}

  const Mat3& mat() const { return a_; }
  operator const Mat3&() const { return a_; }  // NOLINT(google-explicit-constructor)
  double norm() const { return finplast::norm(a_); }

 private:
  Mat3 a_{};
};

/// Third-order tensor T_{ijk}, used for dP_{ij}/dx_k.
struct Mat33 {
  std::array<double, 27> t{};

  constexpr double& operator()(int i, int j, int k) { return t[static_cast<std::size_t>((i * 3 + j) * 3 + k)]; }
  constexpr double operator()(int i, int j, int k) const {
    return t[static_cast<std::size_t>((i * 3 + j) * 3 + k)];
  }
  Mat33& operator+=(const Mat33& o) {
    for (std::size_t n = 0; n < 27; ++n) t[n] += o.t[n];
    return *this;
  }
  Mat33& operator*=(double s) {
    for (auto& v : t) v *= s;
    return *this;
  }
  double norm() const {
    double s = 0.0;
    for (double v : t) s += v * v;
    return std::sqrt(s);
  }
  friend bool operator==(const Mat33&, const Mat33&) = default;
};

// ---- exponential ------------------------------------------------------------

/// Matrix exponential by scaling and squaring with the diagonal [6/6] Pade approximant.
template <int N>
Mat<N> expm(const Mat<N>& a) {
  constexpr int kDeg = 6;
  const double nrm = norm1(a);
  if (!std::isfinite(nrm)) throw Error(ErrorKind::InvalidArgument, "expm: non-finite argument");
  int s = 0;
  if (nrm > 0.5) s = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
  const Mat<N> x = a * std::ldexp(1.0, -s);

  std::array<double, kDeg + 1> c{};
  c[0] = 1.0;
  for (int k = 0; k < kDeg; ++k)
    c[static_cast<std::size_t>(k + 1)] =
        c[static_cast<std::size_t>(k)] * (kDeg - k) / ((k + 1.0) * (2.0 * kDeg - k));

  Mat<N> pw = Mat<N>::identity();
  Mat<N> num = Mat<N>::identity();
  Mat<N> den = Mat<N>::identity();
  for (int k = 1; k <= kDeg; ++k) {
    pw = pw * x;
    const double ck = c[static_cast<std::size_t>(k)];
    num += ck * pw;
    den += ((k % 2 == 0) ? ck : -ck) * pw;
  }
  Mat<N> e = solve(den, num);
  for (int k = 0; k < s; ++k) e = e * e;
  return e;
}

inline Mat3 mat_exp(const TracelessMat3& a) { return expm(a.mat()); }

/// Frechet derivative L(A, E) of the exponential, read off the block exponential
/// exp([[A, E], [0, A]]) = [[e^A, L(A,E)], [0, e^A]].
inline Mat3 expm_frechet(const Mat3& a, const Mat3& e) {
  Mat<6> big;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      big(i, j) = a(i, j);
      big(i + 3, j + 3) = a(i, j);
      big(i, j + 3) = e(i, j);
    }
  const Mat<6> ex = expm(big);
  Mat3 l;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) l(i, j) = ex(i, j + 3);
  return l;
}

/// Gradient of A -> G : exp(A), i.e. the adjoint L(A^T, G).
inline Mat3 expm_frechet_adjoint(const Mat3& a, const Mat3& g) { return expm_frechet(transpose(a), g); }

// ---- spectrum and logarithm -------------------------------------------------

/// Eigenvalues of a real 3x3 matrix from its characteristic cubic.
inline std::array<std::complex<double>, 3> eigenvalues(const Mat3& m) {
  const double tr = trace(m);
  const double i2 = trace(cofactor(m));
  const double d = det(m);
  // lambda^3 + a lambda^2 + b lambda + c
  const double a = -tr, b = i2, c = -d;
  auto poly = [&](double x) { return ((x + a) * x + b) * x + c; };
  auto dpoly = [&](double x) { return (3.0 * x + 2.0 * a) * x + b; };
  auto polish = [&](double x) {
    for (int it = 0; it < 3; ++it) {
      const double dp = dpoly(x);
      if (dp == 0.0) break;
      x -= poly(x) / dp;
    }
    return x;
  };

  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  std::array<std::complex<double>, 3> out;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    const double t = std::cbrt(-q / 2.0 + sq) + std::cbrt(-q / 2.0 - sq);
    const double r = polish(t - a / 3.0);
    // deflate: lambda^2 + (a + r) lambda + (b + r (a + r))
    const double bb = a + r;
    const double cc = b + r * bb;
    const double dd = bb * bb / 4.0 - cc;
    out[0] = r;
    if (dd >= 0.0) {
      out[1] = -bb / 2.0 + std::sqrt(dd);
      out[2] = -bb / 2.0 - std::sqrt(dd);
    } else {
      out[1] = std::complex<double>(-bb / 2.0, std::sqrt(-dd));
      out[2] = std::complex<double>(-bb / 2.0, -std::sqrt(-dd));
    }
  } else {
    const double mp = std::max(-p / 3.0, 0.0);
    const double rr = 2.0 * std::sqrt(mp);
    double arg = (mp > 0.0) ? (-q / 2.0) / std::pow(mp, 1.5) : 0.0;
    arg = std::clamp(arg, -1.0, 1.0);
    const double phi = std::acos(arg);
    for (int k = 0; k < 3; ++k)
      out[static_cast<std::size_t>(k)] =
          polish(rr * std::cos((phi - 2.0 * std::numbers::pi * k) / 3.0) - a / 3.0);
  }
  return out;
}

/// True when no eigenvalue lies on the closed negative real axis.
inline bool has_principal_log(const Mat3& m) {
  for (const auto& l : eigenvalues(m)) {
    const double mag = std::abs(l);
    if (mag == 0.0) return false;
    if (l.real() <= 0.0 && std::abs(l.imag()) <= 1e-6 * mag) return false;
  }
  return true;
}

inline bool in_sl3(const Mat3& p) { return std::abs(det(p) - 1.0) <= kSL3Tolerance && all_finite(p); }

/// Rescales by det^(-1/3) when the determinant drifted past the SL(3) tolerance.
inline Mat3 renormalize_sl3(const Mat3& p) {
  const double d = det(p);
  if (std::abs(d - 1.0) <= kSL3Tolerance) return p;
  if (!(d > 0.0)) throw Error(ErrorKind::NotInSL3, "renormalize_sl3: non-positive determinant");
  return p * (1.0 / std::cbrt(d));
}

namespace detail {

// Denman-Beavers iteration for the principal square root.
inline Mat3 sqrtm_db(const Mat3& a) {
  Mat3 y = a;
  Mat3 z = Mat3::identity();
  for (int it = 0; it < 100; ++it) {
    const Mat3 yi = inverse(y);
    const Mat3 zi = inverse(z);
    const Mat3 yn = 0.5 * (y + zi);
    const Mat3 zn = 0.5 * (z + yi);
    const double change = norm(yn - y);
    y = yn;
    z = zn;
    if (change <= 1e-15 * norm(y)) return y;
  }
  throw Error(ErrorKind::LogUndefined, "square root iteration did not converge");
}

}  // namespace detail

/// Principal logarithm of an SL(3) element by inverse scaling and squaring.
/// Throws LogUndefined when the spectrum touches the closed negative real axis.
inline TracelessMat3 mat_log(const Mat3& m) {
  if (!all_finite(m)) throw Error(ErrorKind::LogUndefined, "mat_log: non-finite argument");
  if (std::abs(det(m) - 1.0) > kSL3Tolerance) throw Error(ErrorKind::NotInSL3, "mat_log: argument not in SL(3)");
  if (!has_principal_log(m)) throw Error(ErrorKind::LogUndefined, "mat_log: eigenvalue on the negative real axis");

  const Mat3 id = Mat3::identity();
  Mat3 y = m;
  int s = 0;
  while (norm(y - id) > 0.25) {
    if (s >= 60) throw Error(ErrorKind::LogUndefined, "mat_log: scaling did not reach the identity");
    y = detail::sqrtm_db(y);
    const double d = det(y);
    if (d > 0.0) y = y * (1.0 / std::cbrt(d));
    ++s;
  }
  // log Y = 2 atanh(Z), Z = (Y - I)(Y + I)^{-1}
  const Mat3 z = transpose(solve(transpose(y + id), transpose(y - id)));
  const Mat3 z2 = z * z;
  Mat3 term = z;
  Mat3 sum = z;
  for (int k = 1; k < 60; ++k) {
    term = term * z2;
    const Mat3 add = term / (2.0 * k + 1.0);
    sum += add;
    if (norm(add) <= 1e-18 * std::max(1.0, norm(sum))) break;
  }
  return TracelessMat3(std::ldexp(2.0, s) * sum);
}

}  // namespace finplast
