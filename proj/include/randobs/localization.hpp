#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "randobs/dynamics.hpp"

namespace randobs {

enum class Kernel { GaspariCohn, Uniform, TopHat };
enum class DistanceKind { CyclicIndex, None };

struct LocalizationSpec {
  Kernel kernel = Kernel::GaspariCohn;
  double r_loc = 10.0;
  DistanceKind distance = DistanceKind::CyclicIndex;

  static LocalizationSpec uniform() {
    return LocalizationSpec{Kernel::Uniform, 1.0, DistanceKind::None};
  }
};

inline int cyclic_distance(int i, int j, int n_x) {
  if (n_x <= 0 || i < 0 || j < 0 || i >= n_x || j >= n_x) {
    throw std::invalid_argument("cyclic_distance: index out of range");
  }
  const int d = std::abs(i - j);
  return std::min(d, n_x - d);
}

// Fifth-order piecewise-rational Gaspari-Cohn correlation, r in half-support
// units: 1 at r=0, compactly supported on [0,2). Both pieces meet at 5/24.
inline double gaspari_cohn(double r) {
  if (!(r >= 0.0)) {
    throw std::invalid_argument("gaspari_cohn: r must be >= 0");
  }
  double v = 0.0;
  if (r < 1.0) {
    v = 1.0 + r * r * (-5.0 / 3.0 + r * (5.0 / 8.0 + r * (0.5 - 0.25 * r)));
  } else if (r < 2.0) {
    v = 4.0 - 5.0 * r +
        r * r * (5.0 / 3.0 + r * (5.0 / 8.0 + r * (-0.5 + r / 12.0))) -
        2.0 / (3.0 * r);
  }
  return std::clamp(v, 0.0, 1.0);
}

// TopHat keeps its closed support: 1 for r <= 1 so that d = r_loc is still
// inside the patch, 0 beyond.
inline double tophat(double r) { return r <= 1.0 ? 1.0 : 0.0; }

struct LocalizationMatrix {
  Matrix phi;

  int dim() const { return static_cast<int>(phi.rows()); }

  // C_phi^(J) = max_k sum_{j in J} phi_{k,j}; with J = all indices this is
  // the row-sum constant C_phi. Reported as a diagnostic for the
  // diagonal-dominance assumption, never enforced.
  double max_row_sum(const std::vector<int>& J) const {
    double best = 0.0;
    for (int k = 0; k < dim(); ++k) {
      double s = 0.0;
      for (int j : J) s += phi(k, j);
      best = std::max(best, s);
    }
    return best;
  }

  double max_row_sum() const {
    std::vector<int> all(static_cast<std::size_t>(dim()));
    for (int j = 0; j < dim(); ++j) all[static_cast<std::size_t>(j)] = j;
    return max_row_sum(all);
  }
};

inline LocalizationMatrix build_phi(const LocalizationSpec& spec, int n_x) {
  if (n_x < 1) {
    throw std::invalid_argument("build_phi: n_x must be >= 1");
  }
  if (spec.kernel != Kernel::Uniform && !(spec.r_loc > 0.0)) {
    throw std::invalid_argument("build_phi: r_loc must be positive");
  }
  LocalizationMatrix out;
  out.phi = Matrix::Ones(n_x, n_x);
  if (spec.kernel == Kernel::Uniform || spec.distance == DistanceKind::None) {
    return out;
  }
  for (int i = 0; i < n_x; ++i) {
    for (int j = i + 1; j < n_x; ++j) {
      const double r = cyclic_distance(i, j, n_x) / spec.r_loc;
      const double v =
          spec.kernel == Kernel::GaspariCohn ? gaspari_cohn(r) : tophat(r);
      out.phi(i, j) = v;
      out.phi(j, i) = v;
    }
  }
  return out;
}

// Schur (elementwise) product P o phi.
inline Matrix localize(const Matrix& P, const LocalizationMatrix& phi) {
  if (P.rows() != phi.phi.rows() || P.cols() != phi.phi.cols()) {
    throw std::invalid_argument("localize: shape mismatch");
  }
  return P.cwiseProduct(phi.phi);
}

// Diagonal pseudo-inverse: [P^dag]_{ii} = 1 / max([P]_{ii}, floor).
inline Matrix diag_pseudo_inverse(const Matrix& P, double floor_value) {
  if (P.rows() != P.cols()) {
    throw std::invalid_argument("diag_pseudo_inverse: matrix must be square");
  }
  if (!(floor_value > 0.0)) {
    throw std::invalid_argument("diag_pseudo_inverse: floor must be positive");
  }
  Matrix out = Matrix::Zero(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    out(i, i) = 1.0 / std::max(P(i, i), floor_value);
  }
  return out;
}

}  // namespace randobs
