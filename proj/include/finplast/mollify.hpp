#pragma once

// Causal space-time convolution: spatial stencil phi and discrete time kernel kappa.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "finplast/errors.hpp"
#include "finplast/grid.hpp"
#include "finplast/tensor.hpp"

namespace finplast {

struct StencilEntry {
  std::array<int, 3> offset{};
  double weight = 0.0;  ///< phi value; sum of weight * cell volume is 1
};

class Kernels {
 public:
  Kernels() = default;

  /// kappa(t) = lambda exp(-lambda t) sampled at t_j = j tau; truncated Gaussian phi of the given
  /// radius (in cells), sigma = radius / 2. Radius 0 gives the discrete delta.
  static Kernels exponential_gaussian(const Grid& g, double lambda, double tau, std::size_t nsteps,
                                      double radius_cells) {
    if (!(lambda > 0.0) || !(tau > 0.0)) throw Error(ErrorKind::InvalidKernel, "lambda and tau must be positive");
    if (!(radius_cells >= 0.0)) throw Error(ErrorKind::InvalidKernel, "stencil radius must be >= 0");
    for (int a = 0; a < 3; ++a)
      if (radius_cells * g.h(a) > g.extent()[a])
        throw Error(ErrorKind::InvalidKernel, "stencil radius exceeds the domain");
    Kernels k;
    k.lambda_ = lambda;
    k.radius_ = radius_cells;
    k.kappa_.resize(nsteps + 1);
    for (std::size_t j = 0; j <= nsteps; ++j) k.kappa_[j] = lambda * std::exp(-lambda * tau * static_cast<double>(j));

    const int r = static_cast<int>(std::floor(radius_cells));
    const double sigma = radius_cells / 2.0;
    double mass = 0.0;
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 > radius_cells * radius_cells) continue;
          const double w = sigma > 0.0 ? std::exp(-d2 / (2.0 * sigma * sigma)) : 1.0;
          k.phi_.push_back({{dx, dy, dz}, w});
          mass += w;
        }
    for (auto& e : k.phi_) e.weight /= mass * g.cell_volume();
    return k;
  }

  /// Custom samples; phi is renormalized so that sum(phi) * cell volume = 1.
  static Kernels custom(const Grid& g, std::vector<double> kappa, std::vector<StencilEntry> phi) {
    double mass = 0.0;
    for (double v : kappa)
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidKernel, "kappa samples must be >= 0");
    for (const auto& e : phi) {
      if (!(e.weight >= 0.0)) throw Error(ErrorKind::InvalidKernel, "phi samples must be >= 0");
      mass += e.weight;
    }
    if (!(mass > 0.0)) throw Error(ErrorKind::InvalidKernel, "phi has no mass");
    Kernels k;
    k.kappa_ = std::move(kappa);
    k.phi_ = std::move(phi);
    for (auto& e : k.phi_) e.weight /= mass * g.cell_volume();
    return k;
  }

  const std::vector<double>& kappa() const { return kappa_; }
  const std::vector<StencilEntry>& phi() const { return phi_; }
  double lambda() const { return lambda_; }
  double radius_cells() const { return radius_; }

  double phi_max() const {
    double m = 0.0;
    for (const auto& e : phi_) m = std::max(m, e.weight);
    return m;
  }

 private:
  std::vector<double> kappa_;
  std::vector<StencilEntry> phi_;
  double lambda_ = 0.0;
  double radius_ = 0.0;
};

/// (phi * F)(x) with F extended by zero outside the grid.
template <class T>
std::vector<T> space_convolve(const Grid& g, const std::vector<T>& field, const Kernels& k) {
  if (field.size() != g.num_cells()) throw Error(ErrorKind::SizeMismatch, "space_convolve: cell field size");
  const auto n = g.cells();
  const double vol = g.cell_volume();
  std::vector<T> out(field.size(), T{});
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < field.size(); ++c) {
    const auto ijk = g.cell_ijk(c);
    T acc{};
    for (const auto& e : k.phi()) {
      // phi(x - z): the source cell sits at x - offset
      const int i = ijk[0] - e.offset[0], j = ijk[1] - e.offset[1], l = ijk[2] - e.offset[2];
      if (i < 0 || j < 0 || l < 0 || i >= n[0] || j >= n[1] || l >= n[2]) continue;
      acc += (e.weight * vol) * field[g.cell_index(i, j, l)];
    }
    out[c] = acc;
  }
  return out;
}

// helpers so the time convolution works for scalars and cell fields alike
inline double zero_like(double) { return 0.0; }
inline void axpy(double& acc, double a, double x) { acc += a * x; }
template <class T>
std::vector<T> zero_like(const std::vector<T>& v) {
  return std::vector<T>(v.size(), T{});
}
template <class T>
void axpy(std::vector<T>& acc, double a, const std::vector<T>& x) {
  if (acc.size() != x.size()) throw Error(ErrorKind::SizeMismatch, "time convolution: field sizes differ");
  for (std::size_t c = 0; c < x.size(); ++c) acc[c] += a * x[c];
}

/// (kappa *_tau w)_i = sum_{j=0..i} tau kappa_j w_{i-j}, with (kappa *_tau w)_0 = 0.
/// Only entries 0..i of the history are read.
template <class T>
T time_convolve_discrete(const std::vector<T>& history, std::size_t i, double tau, const Kernels& k) {
  if (history.size() < i + 1) throw Error(ErrorKind::HistoryTooShort, "time_convolve_discrete: history too short");
  T acc = zero_like(history.front());
  if (i == 0) return acc;
  if (k.kappa().size() < i + 1) throw Error(ErrorKind::HistoryTooShort, "time kernel has too few samples");
  for (std::size_t j = 0; j <= i; ++j) axpy(acc, tau * k.kappa()[j], history[i - j]);
  return acc;
}

/// (K_tau grad y)_i: spatial mollification followed by the discrete causal time convolution.
inline std::vector<Mat3> mollified_gradient(const Grid& g, const std::vector<std::vector<Mat3>>& grad_y_history,
                                            std::size_t i, double tau, const Kernels& k) {
  if (grad_y_history.size() < i + 1) throw Error(ErrorKind::HistoryTooShort, "mollified_gradient: history too short");
  if (i == 0) return std::vector<Mat3>(g.num_cells());
  std::vector<std::vector<Mat3>> spaced;
  spaced.reserve(i + 1);
  for (std::size_t j = 0; j <= i; ++j) spaced.push_back(space_convolve(g, grad_y_history[j], k));
  return time_convolve_discrete(spaced, i, tau, k);
}

}  // namespace finplast
