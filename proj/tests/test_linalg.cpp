#include "doctest.h"

#include <cmath>
#include <random>

#include "cwgen/errors.hpp"
#include "cwgen/linalg.hpp"
#include "support.hpp"

using namespace cwgen;
using linalg::Matrix;
using linalg::RootPower;

namespace {

Matrix reconstruct(const linalg::EigenPair& e) {
  return linalg::spectral_map(e, [](double v) { return v; });
}

}  // namespace

TEST_CASE("eigenvalues of the identity are all one") {
  const auto e = linalg::sym_eigen(Matrix::identity(3));
  REQUIRE(e.values.size() == 3);
  for (double v : e.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("diagonal input gives sorted values and axis eigenvectors") {
  const auto e = linalg::sym_eigen(Matrix::from_rows({{1.0, 0.0}, {0.0, 3.0}}));
  CHECK(e.values[0] == 3.0);
  CHECK(e.values[1] == 1.0);
  CHECK(std::abs(e.vectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("eigen reconstruction and orthonormality over random symmetric matrices") {
  double worst_rec = 0.0, worst_orth = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = 1 + seed % 8;
    const Matrix a = test::random_symmetric(d, rng);
    const auto e = linalg::sym_eigen(a);
    for (std::size_t k = 1; k < d; ++k) REQUIRE(e.values[k - 1] >= e.values[k]);
    worst_rec = std::max(worst_rec, linalg::frobenius_norm(reconstruct(e) - a));
    worst_orth = std::max(worst_orth, linalg::frobenius_norm(e.vectors.transpose() * e.vectors - Matrix::identity(d)));
  }
  CHECK(worst_rec < 1e-9);
  CHECK(worst_orth < 1e-9);
}

TEST_CASE("sym_eigen rejects asymmetric and non-finite input") {
  CHECK_THROWS_AS(linalg::sym_eigen(Matrix::from_rows({{1.0, 2.0}, {0.0, 1.0}})), ContractViolation);
  CHECK_THROWS_AS(linalg::sym_eigen(Matrix::from_rows({{NAN, 0.0}, {0.0, 1.0}})), ContractViolation);
  CHECK_THROWS_AS(linalg::sym_eigen(Matrix(2, 3)), ContractViolation);
}

TEST_CASE("square roots of diagonal and identity matrices") {
  const Matrix r = linalg::sym_power(Matrix::from_rows({{4.0, 0.0}, {0.0, 9.0}}), RootPower::kSqrt);
  CHECK(test::max_abs_diff(r, Matrix::from_rows({{2.0, 0.0}, {0.0, 3.0}})) < 1e-14);
  const Matrix i = linalg::sym_power(Matrix::identity(4), RootPower::kInverseSqrt);
  CHECK(test::max_abs_diff(i, Matrix::identity(4)) < 1e-14);
}

TEST_CASE("matrix square root squares back") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const Matrix a = test::random_spd(3, rng, 0.0);
    const Matrix r = linalg::sym_power(a, RootPower::kSqrt);
    CHECK(linalg::is_symmetric(r));
    CHECK(linalg::frobenius_norm(r * r - a) < 1e-8);
  }
}

TEST_CASE("inverse square root whitens SPD matrices") {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const std::size_t d = 2 + static_cast<std::size_t>(k % 6);
    const Matrix a = test::random_spd(d, rng, 1e-3);
    const Matrix w = linalg::sym_power(a, RootPower::kInverseSqrt);
    worst = std::max(worst, test::max_abs_diff(w * a * w, Matrix::identity(d)));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("sqrt clamps tiny negative eigenvalues and inverse sqrt refuses singular input") {
  const Matrix near = Matrix::from_rows({{1.0, 0.0}, {0.0, -5e-13}});
  const Matrix r = linalg::sym_power(near, RootPower::kSqrt);
  CHECK(r(1, 1) == 0.0);
  CHECK_THROWS_AS(linalg::sym_power(Matrix::from_rows({{1.0, 0.0}, {0.0, -1e-6}}), RootPower::kSqrt),
                  ContractViolation);
  CHECK_THROWS_AS(linalg::sym_power(Matrix::from_rows({{1.0, 0.0}, {0.0, 1e-13}}), RootPower::kInverseSqrt),
                  SingularityError);
}

TEST_CASE("nuclear norm") {
  CHECK(linalg::nuclear_norm(Matrix::from_rows({{3.0, 0.0}, {0.0, -4.0}})) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(linalg::nuclear_norm(Matrix(3, 3)) == 0.0);
  std::mt19937_64 rng(13);
  for (int k = 0; k < 100; ++k) {
    const Matrix a = test::random_symmetric(3, rng);
    double expect = 0.0;
    for (double v : linalg::sym_eigen(a).values) expect += std::abs(v);
    CHECK(linalg::nuclear_norm(a) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(linalg::nuclear_norm(a) >= linalg::frobenius_norm(a) - 1e-12);
  }
}

TEST_CASE("nuclear norm of a general square matrix uses singular values") {
  // Singular values of [[0, 2], [0, 0]] are 2 and 0.
  CHECK(linalg::nuclear_norm(Matrix::from_rows({{0.0, 2.0}, {0.0, 0.0}})) == doctest::Approx(2.0));
}

TEST_CASE("frobenius norm") {
  CHECK(linalg::frobenius_norm(Matrix::from_rows({{3.0, 4.0}, {0.0, 0.0}})) == 5.0);
  CHECK(linalg::frobenius_norm(Matrix::identity(3)) == doctest::Approx(std::sqrt(3.0)));
  std::mt19937_64 rng(14);
  const Matrix a = test::random_matrix(4, 4, rng);
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  CHECK(linalg::frobenius_norm(a) == doctest::Approx(std::sqrt(s)).epsilon(1e-15));
}

TEST_CASE("cholesky reproduces SPD input and rejects indefinite input") {
  std::mt19937_64 rng(15);
  const Matrix a = test::random_spd(4, rng);
  const Matrix l = linalg::cholesky(a);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(l(i, j) == 0.0);
  CHECK(test::max_abs_diff(l * l.transpose(), a) < 1e-12);
  CHECK_THROWS_AS(linalg::cholesky(Matrix::from_rows({{1.0, 2.0}, {2.0, 1.0}})), SingularityError);
}

TEST_CASE("trace and min eigenvalue") {
  const Matrix a = Matrix::from_rows({{2.0, 1.0}, {1.0, 2.0}});
  CHECK(linalg::trace(a) == 4.0);
  CHECK(linalg::min_eigenvalue(a) == doctest::Approx(1.0).epsilon(1e-14));
}
