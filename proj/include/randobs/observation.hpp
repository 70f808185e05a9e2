#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "randobs/dynamics.hpp"
#include "randobs/rng.hpp"

namespace randobs {

// Partial observation operator H_J: a row-selector for the sorted index set
// J together with the observation-noise scale eps. The matrix form has one 1
// per row at the selected column.
struct ObservationOperator {
  std::vector<int> indices;  // sorted ascending, unique, each in [0, n_x)
  int n_x = 0;
  double eps = 0.0;

  int size() const { return static_cast<int>(indices.size()); }

  static ObservationOperator make(std::vector<int> J, int n_x, double eps) {
    if (n_x <= 0) {
      throw std::invalid_argument("ObservationOperator: n_x must be positive");
    }
    // eps = 0 is allowed for noiseless synthesis; the filters require a
    // strictly positive eps where R^{-1} is formed.
    if (!(eps >= 0.0) || !std::isfinite(eps)) {
      throw std::invalid_argument(
          "ObservationOperator: eps must be finite and >= 0");
    }
    std::sort(J.begin(), J.end());
    if (std::adjacent_find(J.begin(), J.end()) != J.end()) {
      throw std::invalid_argument("ObservationOperator: duplicate index in J");
    }
    if (!J.empty() && (J.front() < 0 || J.back() >= n_x)) {
      throw std::invalid_argument("ObservationOperator: index out of range");
    }
    return ObservationOperator{std::move(J), n_x, eps};
  }

  Matrix as_matrix() const {
    Matrix H = Matrix::Zero(size(), n_x);
    for (int k = 0; k < size(); ++k) H(k, indices[static_cast<std::size_t>(k)]) = 1.0;
    return H;
  }
};

// Uniform random subset of {0..n_x-1} with |J| = n_j via Algorithm R
// (Vitter's reservoir sampling): O(n_x) time, O(n_j) extra space, every
// subset has probability 1/C(n_x, n_j).
inline std::vector<int> sample_subset_uniform(int n_x, int n_j,
                                              RngStream& rng) {
  if (n_j < 0 || n_x < 0 || n_j > n_x) {
    throw std::invalid_argument(
        "sample_subset_uniform: need 0 <= n_j <= n_x");
  }
  std::vector<int> reservoir(static_cast<std::size_t>(n_j));
  for (int i = 0; i < n_j; ++i) reservoir[static_cast<std::size_t>(i)] = i;
  for (int i = n_j; i < n_x; ++i) {
    const auto j = rng.uniform_below(static_cast<std::uint64_t>(i) + 1);
    if (j < static_cast<std::uint64_t>(n_j)) {
      reservoir[static_cast<std::size_t>(j)] = i;
    }
  }
  std::sort(reservoir.begin(), reservoir.end());
  return reservoir;
}

inline Vector apply(const ObservationOperator& H, const Vector& x) {
  if (x.size() != H.n_x) {
    throw std::invalid_argument("apply: state dimension mismatch");
  }
  Vector y(H.size());
  for (int k = 0; k < H.size(); ++k) {
    y(k) = x(H.indices[static_cast<std::size_t>(k)]);
  }
  return y;
}

// Discrete-time observation y = H x_ref + eps * xi  (R = eps^2 I convention).
inline Vector discrete_observation(const ObservationOperator& H,
                                   const Vector& x_ref, RngStream& rng) {
  Vector y = apply(H, x_ref);
  for (int k = 0; k < y.size(); ++k) y(k) += H.eps * rng.gauss();
  return y;
}

// Continuous-time observation increment over [t, t+dt]:
// dY = H x_ref dt + sqrt(eps) sqrt(dt) xi  (R = eps I convention).
inline Vector observation_increment(const ObservationOperator& H,
                                    const Vector& x_ref, double dt,
                                    RngStream& rng) {
  if (!(dt >= 0.0)) {
    throw std::invalid_argument("observation_increment: dt must be >= 0");
  }
  Vector dY = dt * apply(H, x_ref);
  const double scale = std::sqrt(H.eps * dt);
  for (int k = 0; k < dY.size(); ++k) dY(k) += scale * rng.gauss();
  return dY;
}

// Poisson clock for observation-set switching, one draw per DA cycle.
struct PoissonSwitcher {
  double lambda = 0.0;
  RngStream rng;

  PoissonSwitcher(double lambda_, RngStream rng_)
      : lambda(lambda_), rng(std::move(rng_)) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("PoissonSwitcher: lambda must be >= 0");
    }
  }

  bool jump() { return rng.poisson(lambda) > 0; }
};

struct SwitchResult {
  bool switched;
  ObservationOperator op;
};

// Draw the Poisson clock; on a jump, resample a uniform subset of size
// n_j_next (or the current cardinality when n_j_next < 0) from the
// switcher's own stream. Otherwise the current operator is kept unchanged.
inline SwitchResult maybe_switch(PoissonSwitcher& sw,
                                 const ObservationOperator& current,
                                 int n_j_next = -1) {
  if (!sw.jump()) {
    return SwitchResult{false, current};
  }
  const int n_j = n_j_next < 0 ? current.size() : n_j_next;
  return SwitchResult{
      true, ObservationOperator::make(
                sample_subset_uniform(current.n_x, n_j, sw.rng), current.n_x,
                current.eps)};
}

}  // namespace randobs
