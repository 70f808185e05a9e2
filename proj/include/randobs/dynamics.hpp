#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>

#include "randobs/rng.hpp"

namespace randobs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Thrown when an integrator or filter step produces a non-finite state.
// Callers in the experiment harness catch this and record a diverged run.
class blow_up_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { Lorenz63, Lorenz96 };

struct DriftModel {
  ModelKind kind = ModelKind::Lorenz63;
  int dim = 3;
  // Lorenz-63 parameters
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  // Lorenz-96 forcing
  double forcing = 8.0;

  static DriftModel lorenz63(double sigma = 10.0, double rho = 28.0,
                             double beta = 8.0 / 3.0) {
    if (!std::isfinite(sigma) || !std::isfinite(rho) || !std::isfinite(beta)) {
      throw std::invalid_argument("lorenz63: parameters must be finite");
    }
    DriftModel m;
    m.kind = ModelKind::Lorenz63;
    m.dim = 3;
    m.sigma = sigma;
    m.rho = rho;
    m.beta = beta;
    return m;
  }

  static DriftModel lorenz96(int n_x, double forcing = 8.0) {
    if (n_x < 4) {
      throw std::invalid_argument(
          "lorenz96: dimension must be >= 4 (cyclic stencil spans 4 indices)");
    }
    if (!std::isfinite(forcing)) {
      throw std::invalid_argument("lorenz96: forcing must be finite");
    }
    DriftModel m;
    m.kind = ModelKind::Lorenz96;
    m.dim = n_x;
    m.forcing = forcing;
    return m;
  }
};

struct DiffusionConfig {
  double noise_amplitude = 0.0;  // sqrt(2) D^{1/2} scale, D = I

  explicit DiffusionConfig(double amplitude = 0.0)
      : noise_amplitude(amplitude) {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
      throw std::invalid_argument(
          "DiffusionConfig: noise_amplitude must be finite and >= 0");
    }
  }
};

inline Vector drift(const DriftModel& model, const Vector& x) {
  if (x.size() != model.dim) {
    throw std::invalid_argument("drift: state dimension " +
                                std::to_string(x.size()) +
                                " does not match model dimension " +
                                std::to_string(model.dim));
  }
  Vector f(model.dim);
  if (model.kind == ModelKind::Lorenz63) {
    f(0) = model.sigma * (x(1) - x(0));
    f(1) = x(0) * (model.rho - x(2)) - x(1);
    f(2) = x(0) * x(1) - model.beta * x(2);
  } else {
    const int n = model.dim;
    for (int i = 0; i < n; ++i) {
      const double xp1 = x((i + 1) % n);
      const double xm1 = x((i - 1 + n) % n);
      const double xm2 = x((i - 2 + n) % n);
      f(i) = (xp1 - xm2) * xm1 - x(i) + model.forcing;
    }
  }
  return f;
}

namespace detail {

inline void check_finite_state(const Vector& x, const char* where) {
  if (!x.allFinite()) {
    throw blow_up_error(std::string(where) +
                        ": non-finite state encountered");
  }
}

}  // namespace detail

// Classical fourth-order Runge-Kutta step of the deterministic drift.
inline Vector rk4_step(const DriftModel& model, const Vector& x, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("rk4_step: dt must be positive");
  }
  const Vector k1 = drift(model, x);
  const Vector k2 = drift(model, x + 0.5 * dt * k1);
  const Vector k3 = drift(model, x + 0.5 * dt * k2);
  const Vector k4 = drift(model, x + dt * k3);
  Vector out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  detail::check_finite_state(out, "rk4_step");
  return out;
}

// Euler-Maruyama step: x + f(x) dt + noise_amplitude sqrt(dt) xi, xi ~ N(0,I).
// With zero amplitude this is exactly the explicit Euler step and consumes
// no draws from the stream.
template <std::invocable<const Vector&> DriftFn>
Vector euler_maruyama_step(DriftFn&& f, const Vector& x, double dt,
                           const DiffusionConfig& cfg, RngStream& rng) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("euler_maruyama_step: dt must be positive");
  }
  Vector out = x + dt * f(x);
  if (cfg.noise_amplitude > 0.0) {
    const double scale = cfg.noise_amplitude * std::sqrt(dt);
    for (int i = 0; i < out.size(); ++i) {
      out(i) += scale * rng.gauss();
    }
  }
  detail::check_finite_state(out, "euler_maruyama_step");
  return out;
}

inline Vector euler_maruyama_step(const DriftModel& model, const Vector& x,
                                  double dt, const DiffusionConfig& cfg,
                                  RngStream& rng) {
  return euler_maruyama_step(
      [&model](const Vector& v) { return drift(model, v); }, x, dt, cfg, rng);
}

}  // namespace randobs
