#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>

#include "randobs/dynamics.hpp"
#include "randobs/localization.hpp"
#include "randobs/observation.hpp"

namespace randobs {

// An ensemble is an n_x x M matrix, one member per column.
using Ensemble = Matrix;

inline Vector ensemble_mean(const Ensemble& E) {
  if (E.cols() < 1) {
    throw std::invalid_argument("ensemble_mean: need at least one member");
  }
  return E.rowwise().mean();
}

// Sample covariance with 1/(M-1) normalization.
inline Matrix ensemble_covariance(const Ensemble& E) {
  const auto m = E.cols();
  if (m < 2) {
    throw std::invalid_argument("ensemble_covariance: need M >= 2 members");
  }
  const Vector mean = E.rowwise().mean();
  const Matrix dev = E.colwise() - mean;
  return (dev * dev.transpose()) / static_cast<double>(m - 1);
}

// Tracking error e = x_ref - ensemble mean.
inline Vector tracking_error(const Ensemble& E, const Vector& x_ref) {
  if (x_ref.size() != E.rows()) {
    throw std::invalid_argument("tracking_error: dimension mismatch");
  }
  return x_ref - ensemble_mean(E);
}

// Drift-spread interaction matrix
//   F = 1/(M-1) sum_i (X^(i) - Xbar)(f(X^(i)) - fbar)^T,
// the first term of the covariance evolution equation.
template <std::invocable<const Vector&> DriftFn>
Matrix covariance_interaction_term(const Ensemble& E, DriftFn&& f) {
  const auto m = E.cols();
  if (m < 2) {
    throw std::invalid_argument(
        "covariance_interaction_term: need M >= 2 members");
  }
  Matrix fvals(E.rows(), m);
  for (Eigen::Index i = 0; i < m; ++i) {
    fvals.col(i) = f(Vector(E.col(i)));
  }
  const Matrix dev = E.colwise() - Vector(E.rowwise().mean());
  const Matrix fdev = fvals.colwise() - Vector(fvals.rowwise().mean());
  return (dev * fdev.transpose()) / static_cast<double>(m - 1);
}

inline Matrix covariance_interaction_term(const Ensemble& E,
                                          const DriftModel& model) {
  return covariance_interaction_term(
      E, [&model](const Vector& x) { return drift(model, x); });
}

struct EnkbfStepStats {
  long spread_cap_hits = 0;  // components where |P^dag dt| was clipped to 1
};

// One explicit-Euler step of the localized deterministic EnKBF:
//   dX^(i) = f(X^(i)) dt + P^dag (X^(i) - Xbar) dt
//            - 1/2 P^L H^T R^{-1} (H X^(i) dt + H Xbar dt - 2 dY),
// with R = eps I (continuous convention), P^L = P o phi and P^dag the
// floored diagonal pseudo-inverse. P is frozen over the step. The spread
// increment is clipped so that P^dag dt <= 1 per component, which keeps the
// floored pseudo-inverse from catapulting a collapsed component; hits are
// counted in `stats`.
template <std::invocable<const Vector&> DriftFn>
Ensemble enkbf_step(const Ensemble& E, DriftFn&& f,
                    const LocalizationMatrix& phi,
                    const ObservationOperator& H, const Vector& dY, double dt,
                    double floor_value, EnkbfStepStats* stats = nullptr) {
  const auto n_x = E.rows();
  const auto m = E.cols();
  if (m < 2) {
    throw std::invalid_argument("enkbf_step: need M >= 2 members");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("enkbf_step: dt must be positive");
  }
  if (H.n_x != n_x || dY.size() != H.size()) {
    throw std::invalid_argument("enkbf_step: operator/increment shape mismatch");
  }
  if (H.size() > 0 && !(H.eps > 0.0)) {
    throw std::invalid_argument("enkbf_step: eps must be positive");
  }
  if (phi.phi.rows() != n_x) {
    throw std::invalid_argument("enkbf_step: localization shape mismatch");
  }

  const Vector mean = E.rowwise().mean();
  const Matrix dev = E.colwise() - mean;
  const Matrix P = (dev * dev.transpose()) / static_cast<double>(m - 1);

  // Per-component spread rate, clipped.
  Vector spread_gain(n_x);
  for (Eigen::Index k = 0; k < n_x; ++k) {
    const double g = dt / std::max(P(k, k), floor_value);
    if (g > 1.0) {
      spread_gain(k) = 1.0;
      if (stats != nullptr) ++stats->spread_cap_hits;
    } else {
      spread_gain(k) = g;
    }
  }

  // Gain columns: G = 1/(2 eps) P^L H^T, i.e. the J-columns of P o phi.
  const int n_obs = H.size();
  Matrix gain(n_x, n_obs);
  for (int c = 0; c < n_obs; ++c) {
    const int j = H.indices[static_cast<std::size_t>(c)];
    gain.col(c) = P.col(j).cwiseProduct(phi.phi.col(j)) / (2.0 * H.eps);
  }

  const Vector h_mean = apply(H, mean);
  Ensemble out(n_x, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector xi = E.col(i);
    Vector next = xi + dt * f(xi) + spread_gain.cwiseProduct(dev.col(i));
    if (n_obs > 0) {
      const Vector bracket = dt * (apply(H, xi) + h_mean) - 2.0 * dY;
      next -= gain * bracket;
    }
    if (!next.allFinite()) {
      throw blow_up_error("enkbf_step: member " + std::to_string(i) +
                          " became non-finite");
    }
    out.col(i) = next;
  }
  return out;
}

inline Ensemble enkbf_step(const Ensemble& E, const DriftModel& model,
                           const LocalizationMatrix& phi,
                           const ObservationOperator& H, const Vector& dY,
                           double dt, double floor_value,
                           EnkbfStepStats* stats = nullptr) {
  return enkbf_step(
      E, [&model](const Vector& x) { return drift(model, x); }, phi, H, dY,
      dt, floor_value, stats);
}

// Closed-form constants of the covariance bound:
//   lambda_max = [ (2 eps / (omega_min q_min))^2 C_F^2
//                  + 8 eps / (omega_min q_min) ]^{1/2}
//   t_star     = eps / (omega_min lambda_max q_max)
//   lambda_min = min{ 1 / (4 C_F^2 lambda_max),
//                     eps / (C_phi_star omega_max lambda_max) }
struct BoundConstants {
  double c_f = 0.0;
  double omega_min = 1.0;
  double omega_max = 1.0;
  double q_min = 1.0;
  double q_max = 1.0;
  double phi_min = 1.0;
  double c_phi_star = 1.0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double t_star = 0.0;
};

inline BoundConstants lemma1_constants(double eps, double omega_min,
                                       double omega_max, double q_min,
                                       double q_max, double c_f,
                                       double c_phi_star,
                                       double phi_min = 1.0) {
  if (!(eps > 0.0) || !(omega_min > 0.0) || !(omega_max > 0.0) ||
      !(q_min > 0.0) || !(q_max > 0.0) || !(c_phi_star > 0.0) ||
      !(c_f >= 0.0)) {
    throw std::invalid_argument(
        "lemma1_constants: scales must be positive (C_F may be zero)");
  }
  BoundConstants b;
  b.c_f = c_f;
  b.omega_min = omega_min;
  b.omega_max = omega_max;
  b.q_min = q_min;
  b.q_max = q_max;
  b.phi_min = phi_min;
  b.c_phi_star = c_phi_star;
  const double s = 2.0 * eps / (omega_min * q_min);
  b.lambda_max = std::sqrt(s * s * c_f * c_f + 4.0 * s);
  b.t_star = eps / (omega_min * b.lambda_max * q_max);
  const double floor_dyn =
      c_f > 0.0 ? 1.0 / (4.0 * c_f * c_f * b.lambda_max)
                : std::numeric_limits<double>::infinity();
  const double floor_obs = eps / (c_phi_star * omega_max * b.lambda_max);
  b.lambda_min = std::min(floor_dyn, floor_obs);
  return b;
}

}  // namespace randobs
