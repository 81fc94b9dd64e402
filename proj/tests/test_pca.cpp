#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "oracle.hpp"
#include "usagewatch/pca.hpp"
#include "usagewatch/util.hpp"

using namespace usagewatch;

namespace {

Eigen::MatrixXd random_window(Rng& rng, Eigen::Index w, Eigen::Index n) {
  Eigen::MatrixXd out(w, n);
  for (Eigen::Index r = 0; r < w; ++r)
    for (Eigen::Index c = 0; c < n; ++c) out(r, c) = rng.uniform(-50.0, 50.0);
  return out;
}

}  // namespace

TEST_CASE("standardize centres and scales with divisor w-1") {
  Eigen::MatrixXd window(3, 2);
  window << 1, 9, 2, 9.5, 3, 11;
  const auto sw = standardize(window);
  REQUIRE(sw.retained == std::vector<int>{0, 1});
  // column [1,2,3]: mean 2, sample std 1
  CHECK(sw.values(0, 0) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(sw.values(1, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(sw.values(2, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(sw.means(0) == Catch::Approx(2.0));
  CHECK(sw.scales(0) == Catch::Approx(1.0));
}

TEST_CASE("standardized columns have zero mean and unit sample variance") {
  Rng rng(41);
  const auto sw = standardize(random_window(rng, 30, 6));
  for (Eigen::Index c = 0; c < sw.values.cols(); ++c) {
    const double mean = sw.values.col(c).mean();
    const double var = sw.values.col(c).squaredNorm() / (30 - 1);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("constant columns land in dropped_degenerate") {
  Eigen::MatrixXd window(3, 3);
  window << 1, 5, 2, 2, 5, 4, 3, 5, 9;
  const auto sw = standardize(window);
  CHECK(sw.retained == std::vector<int>{0, 2});
  CHECK(sw.dropped_degenerate == std::vector<int>{1});
  CHECK(sw.values.cols() == 2);
}

TEST_CASE("standardizing an already standardized window is a fixed point") {
  Rng rng(42);
  const auto once = standardize(random_window(rng, 25, 4));
  const auto twice = standardize(once.values);
  CHECK((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a window of constants cannot be standardized") {
  Eigen::MatrixXd window = Eigen::MatrixXd::Constant(5, 3, 2.5);
  window.col(0) = Eigen::VectorXd::LinSpaced(5, 0, 4);  // one live column is not enough
  CHECK_THROWS_AS(standardize(window), DegenerateWindowError);
  CHECK_THROWS_AS(standardize(Eigen::MatrixXd::Zero(1, 3)), ParameterError);
}

TEST_CASE("two perfectly correlated columns give eigenvalues 2 and 0") {
  Eigen::MatrixXd window(4, 2);
  window << 1, 10, 2, 20, 3, 30, 4, 40;
  const auto basis = fit_components(standardize(window));
  CHECK(basis.eigenvalues(0) == Catch::Approx(2.0).margin(1e-9));
  CHECK(basis.eigenvalues(1) == Catch::Approx(0.0).margin(1e-9));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // sign canonicalization makes the first coordinate positive
  CHECK(basis.components(0, 0) == Catch::Approx(inv_sqrt2).margin(1e-9));
  CHECK(basis.components(1, 0) == Catch::Approx(inv_sqrt2).margin(1e-9));
}

TEST_CASE("two uncorrelated columns give a unit eigenvalue pair") {
  StandardizedWindow sw;
  sw.values.resize(3, 2);
  const double s3 = std::sqrt(3.0);
  sw.values << -1, 1 / s3, 0, -2 / s3, 1, 1 / s3;  // sample correlation exactly 0
  sw.means = Eigen::VectorXd::Zero(2);
  sw.scales = Eigen::VectorXd::Ones(2);
  sw.retained = {0, 1};
  const auto basis = fit_components(sw);
  CHECK(basis.eigenvalues(0) == Catch::Approx(1.0).margin(1e-9));
  CHECK(basis.eigenvalues(1) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("eigenvalues match a brute-force covariance eigensolve") {
  Rng rng(7);
  const auto window = random_window(rng, 10, 4);
  const auto sw = standardize(window);
  const auto basis = fit_components(sw);

  oracle::Matrix columns(4, std::vector<double>(10));
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 10; ++r) columns[c][r] = window(r, c);
  oracle::standardize_columns(columns);
  const auto system = oracle::jacobi_eigensystem(oracle::covariance(columns));

  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(basis.eigenvalues(i) - system.values[static_cast<std::size_t>(i)]) < 1e-8);
  }
}

TEST_CASE("components are pairwise orthonormal and eigenvalues non-increasing") {
  Rng rng(13);
  const auto basis = fit_components(standardize(random_window(rng, 40, 8)));
  const Eigen::MatrixXd gram = basis.components.transpose() * basis.components;
  CHECK((gram - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-8);
  for (int i = 1; i < 8; ++i) CHECK(basis.eigenvalues(i) <= basis.eigenvalues(i - 1) + 1e-12);
}

TEST_CASE("the eigenvalue sum equals the retained column count") {
  Rng rng(14);
  const auto basis = fit_components(standardize(random_window(rng, 50, 9)));
  CHECK(std::abs(basis.eigenvalues.sum() - 9.0) < 1e-6);
}

TEST_CASE("full reconstruction reproduces the standardized window") {
  Rng rng(15);
  const auto sw = standardize(random_window(rng, 20, 5));
  const auto basis = fit_components(sw);
  const Eigen::MatrixXd reconstructed =
      sw.values * basis.components * basis.components.transpose();
  CHECK((reconstructed - sw.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fitting needs more rows than columns") {
  Rng rng(16);
  StandardizedWindow sw;
  sw.values = Eigen::MatrixXd::Random(4, 4);
  sw.retained = {0, 1, 2, 3};
  CHECK_THROWS_AS(fit_components(sw), FeasibilityError);
}

TEST_CASE("component selection follows the policy") {
  PrincipalBasis basis;
  basis.components = Eigen::MatrixXd::Identity(4, 4);
  basis.eigenvalues.resize(4);
  basis.eigenvalues << 3.0, 1.5, 0.9, 0.6;

  const auto kaiser = select_components(basis, ComponentPolicy::kaiser());
  CHECK(kaiser.p == 2);  // eigenvalues above 1

  bool clamped = false;
  const auto fixed = select_components(basis, ComponentPolicy::fixed(2), &clamped);
  CHECK(fixed.p == 2);
  CHECK_FALSE(clamped);

  // fixed k larger than q-1 clamps so a residual subspace remains
  const auto squeezed = select_components(basis, ComponentPolicy::fixed(12), &clamped);
  CHECK(squeezed.p == 3);
  CHECK(clamped);

  CHECK_THROWS_AS(ComponentPolicy::fixed(0), ParameterError);
}

TEST_CASE("a fixed 12 on forty components stays 12") {
  PrincipalBasis basis;
  basis.components = Eigen::MatrixXd::Identity(40, 40);
  basis.eigenvalues = Eigen::VectorXd::LinSpaced(40, 40.0, 1.0);
  CHECK(select_components(basis, ComponentPolicy::fixed(12)).p == 12);
}

TEST_CASE("kaiser never selects an empty normal subspace") {
  PrincipalBasis basis;
  basis.components = Eigen::MatrixXd::Identity(3, 3);
  basis.eigenvalues.resize(3);
  basis.eigenvalues << 1.0, 1.0, 1.0;  // nothing above 1
  CHECK(select_components(basis, ComponentPolicy::kaiser()).p == 1);
}

TEST_CASE("residual_vector projects away the normal subspace") {
  PrincipalBasis basis;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  basis.components.resize(2, 2);
  basis.components << inv_sqrt2, inv_sqrt2, inv_sqrt2, -inv_sqrt2;
  basis.eigenvalues.resize(2);
  basis.eigenvalues << 2.0, 0.0;
  basis.p = 1;

  Eigen::Vector2d in_subspace(2.0, 2.0);
  CHECK(residual_vector(basis, in_subspace).norm() < 1e-12);

  Eigen::Vector2d orthogonal(1.0, -1.0);
  const auto r = residual_vector(basis, orthogonal);
  CHECK((r - orthogonal).norm() < 1e-12);
}

TEST_CASE("projection and residual satisfy the Pythagorean identity") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sw = standardize(random_window(rng, 30, 6));
    auto basis = fit_components(sw);
    basis.p = static_cast<int>(rng.uniform_int(1, 5));
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x(i) = rng.uniform(-3.0, 3.0);
    const auto r = residual_vector(basis, x);
    const double projection_sq = x.squaredNorm() - r.squaredNorm();
    const auto leading = basis.components.leftCols(basis.p);
    const double direct = (leading.transpose() * x).squaredNorm();
    CHECK(std::abs(projection_sq - direct) < 1e-8);
    // residual is orthogonal to every selected component
    CHECK((leading.transpose() * r).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("residuals on fitted rows vanish when p equals q") {
  Rng rng(18);
  const auto sw = standardize(random_window(rng, 15, 4));
  auto basis = fit_components(sw);
  basis.p = 4;
  for (int r = 0; r < 15; ++r) {
    const Eigen::VectorXd row = sw.values.row(r);
    CHECK(residual_vector(basis, row).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("residuals are invariant to component sign flips") {
  Rng rng(19);
  const auto sw = standardize(random_window(rng, 25, 5));
  auto basis = fit_components(sw);
  basis.p = 2;
  Eigen::VectorXd x(5);
  for (int i = 0; i < 5; ++i) x(i) = rng.uniform(-2.0, 2.0);
  const auto r1 = residual_vector(basis, x);
  auto flipped = basis;
  flipped.components.col(0) *= -1.0;
  flipped.components.col(3) *= -1.0;
  const auto r2 = residual_vector(flipped, x);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("residual_vector rejects mismatched shapes and unselected bases") {
  Rng rng(20);
  const auto sw = standardize(random_window(rng, 20, 4));
  auto basis = fit_components(sw);
  CHECK_THROWS_AS(residual_vector(basis, Eigen::VectorXd::Zero(4)), ParameterError);
  basis.p = 1;
  CHECK_THROWS_AS(residual_vector(basis, Eigen::VectorXd::Zero(5)), ShapeError);
}

TEST_CASE("residual vectors match the oracle on random windows") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = rng.uniform_int(3, 8);
    const auto w = rng.uniform_int(n + 2, 40);
    const auto window = random_window(rng, w, n);
    const auto sw = standardize(window);
    if (static_cast<Eigen::Index>(sw.retained.size()) != n) continue;
    auto basis = fit_components(sw);
    const int p = static_cast<int>(rng.uniform_int(1, n - 1));
    basis.p = p;

    oracle::Matrix columns(static_cast<std::size_t>(n),
                           std::vector<double>(static_cast<std::size_t>(w)));
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < w; ++r)
        columns[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = window(r, c);
    oracle::standardize_columns(columns);
    const auto system = oracle::jacobi_eigensystem(oracle::covariance(columns));

    std::vector<double> row(static_cast<std::size_t>(n));
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i) = rng.uniform(-3.0, 3.0);
      row[static_cast<std::size_t>(i)] = x(i);
    }
    const auto expect = oracle::residual(system, row, static_cast<std::size_t>(p));
    const auto got = residual_vector(basis, x);
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(std::abs(got(i) - expect[static_cast<std::size_t>(i)]) < 1e-8);
    }
  }
}
