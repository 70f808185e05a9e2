#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "randobs/letkf.hpp"
#include "randobs/rng.hpp"

using namespace randobs;

namespace {

Ensemble random_ensemble(int n_x, int m, RngStream& rng, double scale = 1.0) {
  Ensemble e(n_x, m);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n_x; ++k) e(k, i) = scale * rng.gauss();
  }
  return e;
}

// Ensemble whose sample mean and covariance equal (mean, cov) to round-off:
// deviations are a Cholesky factor times sqrt(M-1) scaled Helmert rows
// (orthonormal and orthogonal to the ones vector).
Ensemble make_exact_ensemble(const Vector& mean, const Matrix& cov, int m) {
  const int n = static_cast<int>(mean.size());
  Matrix z = Matrix::Zero(n, m);
  for (int k = 0; k < n; ++k) {
    const double norm = std::sqrt(static_cast<double>(k + 1) *
                                  static_cast<double>(k + 2));
    for (int i = 0; i <= k; ++i) z(k, i) = 1.0 / norm;
    z(k, k + 1) = -static_cast<double>(k + 1) / norm;
  }
  z *= std::sqrt(static_cast<double>(m - 1));
  const Matrix l = Eigen::LLT<Matrix>(cov).matrixL();
  Ensemble e = l * z;
  e.colwise() += mean;
  return e;
}

struct KalmanUpdate {
  Vector mean;
  Matrix cov;
};

// Closed-form Kalman update with H a selector matrix and R = eps^2 I.
KalmanUpdate kalman_oracle(const Vector& mean, const Matrix& cov,
                           const ObservationOperator& h, const Vector& y) {
  const Matrix hm = h.as_matrix();
  const Matrix r =
      h.eps * h.eps * Matrix::Identity(h.size(), h.size());
  const Matrix s = hm * cov * hm.transpose() + r;
  const Matrix k = cov * hm.transpose() * s.inverse();
  KalmanUpdate out;
  out.mean = mean + k * (y - hm * mean);
  out.cov = (Matrix::Identity(cov.rows(), cov.cols()) - k * hm) * cov;
  return out;
}

}  // namespace

TEST_CASE("inflation preserves the mean and scales the spread", "[letkf]") {
  RngStream rng(21);
  const Ensemble e = random_ensemble(4, 9, rng);
  REQUIRE((inflate(e, 1.0) - e).cwiseAbs().maxCoeff() == 0.0);

  const Ensemble inflated = inflate(e, 1.05);
  REQUIRE((ensemble_mean(inflated) - ensemble_mean(e)).cwiseAbs().maxCoeff() <
          1e-12);
  const double t0 = ensemble_covariance(e).trace();
  const double t1 = ensemble_covariance(inflated).trace();
  REQUIRE(t1 / t0 == Catch::Approx(1.1025).epsilon(1e-12));

  REQUIRE_THROWS_AS(inflate(e, 0.9), std::invalid_argument);
}

TEST_CASE("no observations: analysis equals forecast", "[letkf]") {
  RngStream rng(22);
  const Ensemble e = random_ensemble(5, 7, rng);
  const auto h = ObservationOperator::make({}, 5, 0.25);
  AnalysisConfig cfg;
  cfg.eps = 0.25;
  const Ensemble a = letkf_analysis(e, Vector(0), h, cfg);
  REQUIRE((a - e).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact-moment transform reproduces the Kalman update", "[letkf]") {
  RngStream rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_below(3));
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = rng.gauss();
    }
    const Matrix cov = a * a.transpose() + 0.3 * Matrix::Identity(n, n);
    Vector mean(n);
    for (int i = 0; i < n; ++i) mean(i) = 2.0 * rng.gauss();

    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const auto h = ObservationOperator::make(all, n, 0.5);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = mean(i) + rng.gauss();

    const Ensemble e = make_exact_ensemble(mean, cov, 500);
    AnalysisConfig cfg;
    cfg.inflation = 1.0;
    cfg.eps = h.eps;
    cfg.localized = false;
    const Ensemble analysis = letkf_analysis(e, y, h, cfg);

    const KalmanUpdate exact = kalman_oracle(mean, cov, h, y);
    REQUIRE((ensemble_mean(analysis) - exact.mean).norm() /
                exact.mean.norm() <
            1e-8);
    REQUIRE((ensemble_covariance(analysis) - exact.cov).norm() /
                exact.cov.norm() <
            1e-8);
  }
}

TEST_CASE("worthless observations leave the forecast unchanged", "[letkf]") {
  RngStream rng(24);
  const Ensemble e = random_ensemble(3, 40, rng);
  std::vector<int> all = {0, 1, 2};
  const auto h = ObservationOperator::make(all, 3, 1e6);
  Vector y(3);
  y << 5.0, -2.0, 1.0;
  AnalysisConfig cfg;
  cfg.inflation = 1.0;
  cfg.eps = h.eps;
  cfg.localized = false;
  const Ensemble a = letkf_analysis(e, y, h, cfg);
  REQUIRE((ensemble_mean(a) - ensemble_mean(e)).norm() <= 1e-6);
}

TEST_CASE("analysis mean is invariant under member permutation", "[letkf]") {
  RngStream rng(25);
  const int n = 8, m = 6;
  Ensemble e = random_ensemble(n, m, rng);
  const auto h = ObservationOperator::make({0, 3, 5}, n, 0.4);
  Vector y(3);
  y << 0.3, -1.0, 0.7;
  AnalysisConfig cfg;
  cfg.inflation = 1.0;
  cfg.eps = h.eps;
  cfg.r_loc = 2.0;
  cfg.localized = true;

  const Vector mean_a = ensemble_mean(letkf_analysis(e, y, h, cfg));

  Ensemble shuffled(n, m);
  const int perm[m] = {4, 0, 5, 2, 1, 3};
  for (int i = 0; i < m; ++i) shuffled.col(i) = e.col(perm[i]);
  const Vector mean_b = ensemble_mean(letkf_analysis(shuffled, y, h, cfg));
  REQUIRE((mean_a - mean_b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("observations beyond the GC support have no influence", "[letkf]") {
  RngStream rng(26);
  const int n = 12, m = 8;
  const Ensemble e = random_ensemble(n, m, rng);
  AnalysisConfig cfg;
  cfg.inflation = 1.0;
  cfg.eps = 0.3;
  cfg.r_loc = 1.0;  // support: cyclic distance < 2
  cfg.localized = true;

  const auto h_both = ObservationOperator::make({0, 6}, n, cfg.eps);
  const auto h_far = ObservationOperator::make({6}, n, cfg.eps);
  Vector y_both(2);
  y_both << 1.3, -0.4;
  Vector y_far(1);
  y_far << -0.4;

  const Ensemble a_both = letkf_analysis(e, y_both, h_both, cfg);
  const Ensemble a_far = letkf_analysis(e, y_far, h_far, cfg);
  for (int g = 2; g <= 10; ++g) {
    // d(g, 0) >= 2 here, so observation 0 must not matter.
    REQUIRE((a_both.row(g) - a_far.row(g)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Grid points with no observation in range keep their forecast rows.
  const auto h_zero = ObservationOperator::make({0}, n, cfg.eps);
  Vector y_zero(1);
  y_zero << 1.3;
  const Ensemble a_zero = letkf_analysis(e, y_zero, h_zero, cfg);
  for (int g = 2; g <= 10; ++g) {
    REQUIRE((a_zero.row(g) - e.row(g)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("analysis contracts the covariance trace", "[letkf]") {
  RngStream rng(27);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_below(3));
    const Ensemble e = random_ensemble(n, 30, rng);
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const auto h = ObservationOperator::make(all, n, 0.5);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.gauss();
    AnalysisConfig cfg;
    cfg.inflation = 1.0;
    cfg.eps = h.eps;
    cfg.localized = false;
    const Ensemble a = letkf_analysis(e, y, h, cfg);
    REQUIRE(ensemble_covariance(a).trace() <=
            ensemble_covariance(e).trace() * (1.0 + 1e-12));
  }
}
