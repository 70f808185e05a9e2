#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "randobs/enkbf.hpp"
#include "randobs/rng.hpp"

using namespace randobs;

namespace {

auto zero_drift = [](const Vector& x) {
  return Vector(Vector::Zero(x.size()));
};

Ensemble random_ensemble(int n_x, int m, RngStream& rng, double scale = 1.0) {
  Ensemble e(n_x, m);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n_x; ++k) e(k, i) = scale * rng.gauss();
  }
  return e;
}

LocalizationMatrix all_ones(int n) { return LocalizationMatrix{Matrix::Ones(n, n)}; }

}  // namespace

TEST_CASE("ensemble mean", "[enkbf]") {
  Ensemble same(3, 5);
  same.colwise() = Vector(Vector::LinSpaced(3, 1.0, 3.0));
  REQUIRE((ensemble_mean(same) - Vector::LinSpaced(3, 1.0, 3.0)).norm() ==
          0.0);

  Ensemble two(3, 2);
  two.col(0) << 0, 0, 0;
  two.col(1) << 2, 4, 6;
  const Vector m = ensemble_mean(two);
  REQUIRE(m(0) == 1.0);
  REQUIRE(m(1) == 2.0);
  REQUIRE(m(2) == 3.0);

  RngStream rng(8);
  const Ensemble e = random_ensemble(4, 11, rng);
  const Ensemble centered = e.colwise() - ensemble_mean(e);
  REQUIRE(ensemble_mean(centered).norm() < 1e-12);
}

TEST_CASE("ensemble covariance normalization and symmetry", "[enkbf]") {
  Ensemble same(2, 4);
  same.setConstant(3.0);
  REQUIRE(ensemble_covariance(same).isZero(0.0));

  Ensemble two(2, 2);
  two.col(0) << 0, 0;
  two.col(1) << 2, 0;
  const Matrix p = ensemble_covariance(two);
  REQUIRE(p(0, 0) == 2.0);  // 1/(M-1) normalization
  REQUIRE(p(0, 1) == 0.0);
  REQUIRE(p(1, 1) == 0.0);

  REQUIRE_THROWS_AS(ensemble_covariance(Ensemble(2, 1)),
                    std::invalid_argument);

  RngStream rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix q = ensemble_covariance(random_ensemble(6, 9, rng));
    REQUIRE((q - q.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("tracking error is reference minus mean", "[enkbf]") {
  Ensemble e(3, 2);
  e.col(0) << 0, 0, 0;
  e.col(1) << 0, 0, 0;
  const Vector err = tracking_error(e, Vector(Vector::LinSpaced(3, 1.0, 3.0)));
  REQUIRE(err(0) == 1.0);
  REQUIRE(err(1) == 2.0);
  REQUIRE(err(2) == 3.0);
  REQUIRE(err.squaredNorm() == Catch::Approx(14.0).margin(1e-12));
  REQUIRE(tracking_error(e, ensemble_mean(e)).norm() == 0.0);
}

TEST_CASE("unobserved zero-drift step preserves the ensemble mean exactly",
          "[enkbf]") {
  RngStream rng(10);
  const Ensemble e = random_ensemble(5, 8, rng);
  const auto h = ObservationOperator::make({}, 5, 0.25);
  const Ensemble next = enkbf_step(e, zero_drift, all_ones(5), h, Vector(0),
                                   1e-3, 1e-12);
  REQUIRE((ensemble_mean(next) - ensemble_mean(e)).cwiseAbs().maxCoeff() <
          1e-13);
}

TEST_CASE("a collapsed unobserved ensemble stays put", "[enkbf]") {
  Ensemble e(4, 6);
  e.colwise() = Vector(Vector::LinSpaced(4, -1.0, 2.0));
  const auto h = ObservationOperator::make({}, 4, 0.25);
  const Ensemble next = enkbf_step(e, zero_drift, all_ones(4), h, Vector(0),
                                   1e-3, 1e-12);
  REQUIRE((next - e).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gain bracket vanishes when dY matches the member average",
          "[enkbf]") {
  Ensemble e(2, 2);
  e.col(0) << 1.0, -2.0;
  e.col(1) << 3.0, 5.0;
  const auto h = ObservationOperator::make({0}, 2, 0.5);
  const double dt = 1e-2;
  const Vector mean = ensemble_mean(e);
  Vector dy(1);
  dy(0) = 0.5 * (e(0, 0) + mean(0)) * dt;  // zeroes member 0's bracket

  EnkbfStepStats stats;
  const Ensemble next =
      enkbf_step(e, zero_drift, all_ones(2), h, dy, dt, 1e-12, &stats);

  const Matrix p = ensemble_covariance(e);
  Vector spread_gain(2);
  for (int k = 0; k < 2; ++k) {
    spread_gain(k) = std::min(dt / std::max(p(k, k), 1e-12), 1.0);
  }
  const Vector expect =
      Vector(e.col(0)) + spread_gain.cwiseProduct(Vector(e.col(0)) - mean);
  REQUIRE((next.col(0) - expect).cwiseAbs().maxCoeff() < 1e-14);
  // Member 1's bracket is nonzero, so it also feels the gain.
  const Vector expect1 =
      Vector(e.col(1)) + spread_gain.cwiseProduct(Vector(e.col(1)) - mean);
  REQUIRE((next.col(1) - expect1).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("scalar filter follows the Kalman-Bucy closed form", "[enkbf]") {
  // n_x = 1, f = 0, phi = 1, perfect observations of the constant truth 0:
  //   dP/dt = 2 - P^2/eps  =>  P(t) = a tanh(a t/eps + c),  a = sqrt(2 eps)
  //   d e/dt = -(P/eps) e  =>  e(t) = e(0) cosh(c)/cosh(a t/eps + c)
  const double eps = 0.25;
  const double dt = 1e-3;
  const int steps = 1000;
  const double p0 = 0.25;
  const double e0 = 1.0;

  // Moment-matched members: mean e0, sample variance exactly p0.
  const int m = 4;
  const double a_dev = std::sqrt(3.0 * p0 / m);  // (+-a)^4 pattern
  Ensemble e(1, m);
  e << e0 + a_dev, e0 - a_dev, e0 + a_dev, e0 - a_dev;

  const auto h = ObservationOperator::make({0}, 1, eps);
  const Vector dy = Vector::Zero(1);  // truth = 0 observed without noise
  double prev = std::abs(ensemble_mean(e)(0));
  for (int s = 0; s < steps; ++s) {
    e = enkbf_step(e, zero_drift, all_ones(1), h, dy, dt, 1e-12);
    const double cur = std::abs(ensemble_mean(e)(0));
    REQUIRE(cur <= prev);  // monotone approach to the truth
    prev = cur;
  }

  const double a = std::sqrt(2.0 * eps);
  const double c = std::atanh(p0 / a);
  const double t_end = steps * dt;
  const double p_exact = a * std::tanh(a * t_end / eps + c);
  const double e_exact = e0 * std::cosh(c) / std::cosh(a * t_end / eps + c);

  REQUIRE(ensemble_covariance(e)(0, 0) ==
          Catch::Approx(p_exact).epsilon(0.02));
  REQUIRE(ensemble_mean(e)(0) == Catch::Approx(e_exact).epsilon(0.02));
}

TEST_CASE("covariance interaction term special cases", "[enkbf]") {
  RngStream rng(11);
  const Ensemble e = random_ensemble(4, 7, rng);

  auto constant_drift = [](const Vector& x) {
    return Vector(Vector::Constant(x.size(), 3.7));
  };
  REQUIRE(covariance_interaction_term(e, constant_drift)
              .cwiseAbs()
              .maxCoeff() < 1e-13);

  auto identity_drift = [](const Vector& x) { return x; };
  const Matrix f = covariance_interaction_term(e, identity_drift);
  REQUIRE((f - ensemble_covariance(e)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("covariance evolution matches its assembled right-hand side",
          "[enkbf]") {
  const DriftModel model = DriftModel::lorenz96(6, 8.0);
  RngStream rng(13);
  Ensemble e0 = random_ensemble(6, 8, rng, 2.0);
  e0.array() += 2.0;

  const auto phi = build_phi(
      LocalizationSpec{Kernel::GaspariCohn, 2.0, DistanceKind::CyclicIndex},
      6);
  const auto h = ObservationOperator::make({1, 4}, 6, 0.3);
  const double eps = h.eps;
  const double dt = 1e-5;
  const Vector dy = Vector::Zero(2);

  const Ensemble e1 = enkbf_step(e0, model, phi, h, dy, dt, 1e-12);
  const Ensemble e2 = enkbf_step(e1, model, phi, h, dy, dt, 1e-12);

  const Matrix p0 = ensemble_covariance(e0);
  const Matrix p1 = ensemble_covariance(e1);
  const Matrix p2 = ensemble_covariance(e2);
  const Vector cdiff = (p2 - p0).diagonal() / (2.0 * dt);

  const Matrix f1 = covariance_interaction_term(e1, model);
  const Matrix pdag = diag_pseudo_inverse(p1, 1e-12);
  const Matrix pl = localize(p1, phi);
  const Matrix hoh =
      h.as_matrix().transpose() * h.as_matrix();  // H^T Omega H, Omega = I
  const Matrix rhs_full = (f1 + f1.transpose()) + (pdag * p1 + p1 * pdag) -
                          (pl * hoh * p1 + p1 * hoh * pl) / (2.0 * eps);
  const Vector rhs = rhs_full.diagonal();

  for (int k = 0; k < 6; ++k) {
    REQUIRE(cdiff(k) == Catch::Approx(rhs(k)).epsilon(0.01).margin(1e-6));
  }
}

TEST_CASE("covariance-bound constants evaluate their closed forms",
          "[enkbf]") {
  const BoundConstants b = lemma1_constants(0.25, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
  REQUIRE(b.lambda_max == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
  REQUIRE(b.t_star ==
          Catch::Approx(0.25 / std::sqrt(2.0)).epsilon(1e-15));
  REQUIRE(b.lambda_min ==
          Catch::Approx(0.25 / std::sqrt(2.0)).epsilon(1e-15));

  REQUIRE_THROWS_AS(lemma1_constants(0.0, 1, 1, 1, 1, 1, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(lemma1_constants(0.25, 1, 1, 0.0, 1, 1, 1),
                    std::invalid_argument);
}

TEST_CASE("lambda_max scales as sqrt(eps) in the balanced regime", "[enkbf]") {
  std::vector<double> ratios;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const BoundConstants b = lemma1_constants(eps, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    ratios.push_back(b.lambda_max / std::sqrt(eps));
  }
  for (double r : ratios) {
    REQUIRE(std::abs(r - ratios[0]) / ratios[0] < 0.10);
  }
}

TEST_CASE("lambda_max is invariant under joint scaling of eps and q",
          "[enkbf]") {
  const BoundConstants b1 = lemma1_constants(0.25, 1.0, 1.0, 0.3, 0.9, 5.0, 2.0);
  for (double c : {2.0, 0.5, 10.0}) {
    const BoundConstants b2 =
        lemma1_constants(0.25 * c, 1.0, 1.0, 0.3 * c, 0.9 * c, 5.0, 2.0);
    REQUIRE(b2.lambda_max == Catch::Approx(b1.lambda_max).epsilon(1e-14));
  }
}
