#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "randobs/enkbf.hpp"
#include "randobs/localization.hpp"
#include "randobs/observation.hpp"

namespace randobs {

struct AnalysisConfig {
  double inflation = 1.05;  // multiplicative, applied to deviations
  double r_loc = 10.0;
  double eps = 0.25;      // R = eps^2 I (discrete convention)
  bool localized = true;  // false: one global ETKF solve, unit weights
  double eig_floor = 1e-12;

  void validate() const {
    if (!(inflation >= 1.0)) {
      throw std::invalid_argument("AnalysisConfig: inflation must be >= 1");
    }
    if (localized && !(r_loc > 0.0)) {
      throw std::invalid_argument("AnalysisConfig: r_loc must be positive");
    }
    if (!(eps > 0.0)) {
      throw std::invalid_argument("AnalysisConfig: eps must be positive");
    }
  }
};

// Multiplicative inflation: mean preserved, deviations scaled by `factor`.
inline Ensemble inflate(const Ensemble& E, double factor) {
  if (!(factor >= 1.0)) {
    throw std::invalid_argument("inflate: factor must be >= 1");
  }
  if (factor == 1.0) return E;
  const Vector mean = E.rowwise().mean();
  return (((E.colwise() - mean) * factor).colwise() + mean);
}

namespace detail {

struct EtkfWeights {
  Vector w_mean;   // M
  Matrix w_trans;  // M x M, symmetric
};

// Ensemble-space ETKF solve: given local observation deviations Ydev
// (L x M), innovation d (L), and inverse error variances rinv (L),
//   A    = (M-1) I + Ydev^T diag(rinv) Ydev
//   Pa   = A^{-1}          (via symmetric eigendecomposition)
//   w    = Pa Ydev^T diag(rinv) d
//   W    = sqrt(M-1) Pa^{1/2}   (symmetric square root)
inline EtkfWeights etkf_solve(const Matrix& Ydev, const Vector& d,
                              const Vector& rinv, double eig_floor) {
  const auto m = Ydev.cols();
  const Matrix C = Ydev.transpose() * rinv.asDiagonal();  // M x L
  Matrix A = C * Ydev;
  A += static_cast<double>(m - 1) * Matrix::Identity(m, m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("letkf_analysis: eigendecomposition failed");
  }
  const Vector lam = eig.eigenvalues().cwiseMax(eig_floor);
  const Matrix& V = eig.eigenvectors();
  const Matrix pa = V * lam.cwiseInverse().asDiagonal() * V.transpose();
  EtkfWeights out;
  out.w_mean = pa * (C * d);
  out.w_trans = std::sqrt(static_cast<double>(m - 1)) * V *
                lam.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  return out;
}

}  // namespace detail

// LETKF analysis with Gaspari-Cohn R-localization: every grid point solves
// an independent ensemble-space transform using the observations within the
// GC support (cyclic distance < 2 r_loc), each with its error variance
// divided by the GC weight. Deterministic given its inputs. With
// cfg.localized == false a single global transform with unit weights is
// used, which makes the analysis mean and covariance algebraically equal to
// the Kalman update of the forecast sample moments.
inline Ensemble letkf_analysis(const Ensemble& E, const Vector& y,
                               const ObservationOperator& H,
                               const AnalysisConfig& cfg) {
  cfg.validate();
  const auto n_x = E.rows();
  const auto m = E.cols();
  if (m < 2) {
    throw std::invalid_argument("letkf_analysis: need M >= 2 members");
  }
  if (H.n_x != n_x || y.size() != H.size()) {
    throw std::invalid_argument("letkf_analysis: shape mismatch");
  }
  if (H.size() == 0) {
    return E;  // nothing observed: analysis equals forecast
  }

  const Vector mean = E.rowwise().mean();
  const Matrix dev = E.colwise() - mean;
  // Forecast in observation space (H is a selector, so rows of the state).
  Matrix ydev(H.size(), m);
  Vector innov(H.size());
  for (int k = 0; k < H.size(); ++k) {
    const int j = H.indices[static_cast<std::size_t>(k)];
    ydev.row(k) = dev.row(j);
    innov(k) = y(k) - mean(j);
  }
  const double rinv_base = 1.0 / (cfg.eps * cfg.eps);

  if (!cfg.localized) {
    const Vector rinv = Vector::Constant(H.size(), rinv_base);
    const auto w = detail::etkf_solve(ydev, innov, rinv, cfg.eig_floor);
    Ensemble out = dev * w.w_trans;
    const Vector new_mean = mean + dev * w.w_mean;
    out.colwise() += new_mean;
    return out;
  }

  Ensemble out(n_x, m);
  std::vector<int> local;
  for (int g = 0; g < n_x; ++g) {
    local.clear();
    for (int k = 0; k < H.size(); ++k) {
      const int j = H.indices[static_cast<std::size_t>(k)];
      const double r =
          cyclic_distance(g, j, static_cast<int>(n_x)) / cfg.r_loc;
      if (r < 2.0) local.push_back(k);
    }
    if (local.empty()) {
      out.row(g) = E.row(g);
      continue;
    }
    const int n_loc = static_cast<int>(local.size());
    Matrix ydev_loc(n_loc, m);
    Vector innov_loc(n_loc);
    Vector rinv(n_loc);
    for (int c = 0; c < n_loc; ++c) {
      const int k = local[static_cast<std::size_t>(c)];
      const int j = H.indices[static_cast<std::size_t>(k)];
      ydev_loc.row(c) = ydev.row(k);
      innov_loc(c) = innov(k);
      rinv(c) = rinv_base *
                gaspari_cohn(cyclic_distance(g, j, static_cast<int>(n_x)) /
                             cfg.r_loc);
    }
    const auto w = detail::etkf_solve(ydev_loc, innov_loc, rinv, cfg.eig_floor);
    const double mean_g = mean(g) + dev.row(g).dot(w.w_mean);
    out.row(g) = (dev.row(g) * w.w_trans).array() + mean_g;
  }
  return out;
}

}  // namespace randobs
