#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "randobs/localization.hpp"
#include "randobs/rng.hpp"

using namespace randobs;

namespace {

// Independent evaluations of the two Gaspari-Cohn pieces, used as the
// oracle for the knot values.
double gc_inner(double r) {
  return -0.25 * std::pow(r, 5) + 0.5 * std::pow(r, 4) +
         (5.0 / 8.0) * std::pow(r, 3) - (5.0 / 3.0) * r * r + 1.0;
}

double gc_outer(double r) {
  return (1.0 / 12.0) * std::pow(r, 5) - 0.5 * std::pow(r, 4) +
         (5.0 / 8.0) * std::pow(r, 3) + (5.0 / 3.0) * r * r - 5.0 * r + 4.0 -
         2.0 / (3.0 * r);
}

Matrix random_psd(int n, RngStream& rng) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.gauss();
  }
  return a * a.transpose() + 0.1 * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("cyclic distance with wrap-around", "[localization]") {
  REQUIRE(cyclic_distance(0, 0, 40) == 0);
  REQUIRE(cyclic_distance(0, 39, 40) == 1);
  REQUIRE(cyclic_distance(3, 23, 40) == 20);
  REQUIRE_THROWS_AS(cyclic_distance(0, 40, 40), std::invalid_argument);
}

TEST_CASE("Gaspari-Cohn endpoint, support, and knot value", "[localization]") {
  REQUIRE(gaspari_cohn(0.0) == 1.0);
  REQUIRE(gaspari_cohn(2.0) == 0.0);
  REQUIRE(gaspari_cohn(2.5) == 0.0);
  // Both pieces meet at 5/24 at the knot r = 1.
  REQUIRE(gc_inner(1.0) == Catch::Approx(5.0 / 24.0).epsilon(1e-14));
  REQUIRE(gc_outer(1.0) == Catch::Approx(5.0 / 24.0).epsilon(1e-14));
  REQUIRE(gaspari_cohn(1.0) == Catch::Approx(5.0 / 24.0).epsilon(1e-14));
}

TEST_CASE("Gaspari-Cohn is continuous at the piece boundaries",
          "[localization]") {
  const double h = 1e-6;
  REQUIRE(std::abs(gaspari_cohn(1.0 - h) - gaspari_cohn(1.0 + h)) < 1e-5);
  REQUIRE(std::abs(gaspari_cohn(2.0 - h) - gaspari_cohn(2.0 + h)) < 1e-5);
}

TEST_CASE("build_phi special cases", "[localization]") {
  const LocalizationMatrix uni = build_phi(LocalizationSpec::uniform(), 3);
  REQUIRE(uni.phi.isOnes(0.0));

  const LocalizationMatrix th = build_phi(
      LocalizationSpec{Kernel::TopHat, 1.0, DistanceKind::CyclicIndex}, 4);
  Matrix expect(4, 4);
  expect << 1, 1, 0, 1,  //
      1, 1, 1, 0,        //
      0, 1, 1, 1,        //
      1, 0, 1, 1;
  REQUIRE((th.phi.array() == expect.array()).all());

  const LocalizationMatrix gc = build_phi(
      LocalizationSpec{Kernel::GaspariCohn, 10.0, DistanceKind::CyclicIndex},
      40);
  REQUIRE(gc.phi(0, 20) == 0.0);  // d = 20 >= 2 r_loc
  REQUIRE(gc.phi(0, 1) > 0.9);
}

TEST_CASE("build_phi is symmetric with unit diagonal and entries in [0,1]",
          "[localization]") {
  RngStream rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_below(30));
    const double r_loc = 0.5 + 10.0 * rng.uniform();
    const Kernel kernel = trial % 3 == 0   ? Kernel::GaspariCohn
                          : trial % 3 == 1 ? Kernel::TopHat
                                           : Kernel::Uniform;
    const auto loc = build_phi(
        LocalizationSpec{kernel, r_loc, DistanceKind::CyclicIndex}, n);
    for (int i = 0; i < n; ++i) {
      REQUIRE(loc.phi(i, i) == 1.0);
      for (int j = 0; j < n; ++j) {
        REQUIRE(loc.phi(i, j) == loc.phi(j, i));
        REQUIRE(loc.phi(i, j) >= 0.0);
        REQUIRE(loc.phi(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("localize is the Schur product", "[localization]") {
  Matrix p(2, 2);
  p << 2, 1, 1, 3;
  LocalizationMatrix ones{Matrix::Ones(2, 2)};
  REQUIRE((localize(p, ones).array() == p.array()).all());

  LocalizationMatrix eye{Matrix::Identity(2, 2)};
  const Matrix d = localize(p, eye);
  REQUIRE(d(0, 0) == 2.0);
  REQUIRE(d(1, 1) == 3.0);
  REQUIRE(d(0, 1) == 0.0);

  LocalizationMatrix half{Matrix::Ones(2, 2)};
  half.phi(0, 1) = half.phi(1, 0) = 0.5;
  const Matrix l = localize(p, half);
  REQUIRE(l(0, 0) == 2.0);
  REQUIRE(l(0, 1) == 0.5);
  REQUIRE(l(1, 0) == 0.5);
  REQUIRE(l(1, 1) == 3.0);

  REQUIRE_THROWS_AS(localize(Matrix::Ones(3, 3), eye), std::invalid_argument);
}

TEST_CASE("GC tapering preserves positive semidefiniteness",
          "[localization]") {
  // With 2 r_loc <= N/2 the cyclic GC matrix is the circulant sampling of a
  // positive-definite function, so P o phi stays PSD.
  RngStream rng(7);
  const int n = 16;
  const auto gc = build_phi(
      LocalizationSpec{Kernel::GaspariCohn, 3.0, DistanceKind::CyclicIndex},
      n);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = random_psd(n, rng);
    const Matrix tapered = localize(p, gc);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(tapered);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("diag_pseudo_inverse definition and floor", "[localization]") {
  Matrix p = Matrix::Zero(2, 2);
  p(0, 0) = 2.0;
  p(1, 1) = 4.0;
  p(0, 1) = p(1, 0) = 0.9;  // off-diagonals are ignored
  const Matrix inv = diag_pseudo_inverse(p, 1e-12);
  REQUIRE(inv(0, 0) == 0.5);
  REQUIRE(inv(1, 1) == 0.25);
  REQUIRE(inv(0, 1) == 0.0);

  Matrix z = Matrix::Zero(2, 2);
  z(1, 1) = 1.0;
  const Matrix zi = diag_pseudo_inverse(z, 1e-12);
  REQUIRE(zi(0, 0) == 1e12);
  REQUIRE(zi(1, 1) == 1.0);

  REQUIRE((diag_pseudo_inverse(Matrix::Identity(3, 3), 1e-12).array() ==
           Matrix::Identity(3, 3).array())
              .all());
}

TEST_CASE("diag_pseudo_inverse is an involution above the floor",
          "[localization]") {
  Matrix p = Matrix::Zero(3, 3);
  p(0, 0) = 2.0;
  p(1, 1) = 0.25;
  p(2, 2) = 8.0;
  REQUIRE((diag_pseudo_inverse(diag_pseudo_inverse(p, 1e-12), 1e-12).array() ==
           p.array())
              .all());

  RngStream rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix q = Matrix::Zero(2, 2);
    q(0, 0) = std::exp(2.0 * rng.gauss());
    q(1, 1) = std::exp(2.0 * rng.gauss());
    const Matrix back =
        diag_pseudo_inverse(diag_pseudo_inverse(q, 1e-12), 1e-12);
    REQUIRE(back(0, 0) == Catch::Approx(q(0, 0)).epsilon(1e-15));
    REQUIRE(back(1, 1) == Catch::Approx(q(1, 1)).epsilon(1e-15));
  }
}
