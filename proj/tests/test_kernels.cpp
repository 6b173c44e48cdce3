#include "doctest.h"

#include "nsf/errors.hpp"
#include "nsf/kernels.hpp"
#include "nsf/kmeans.hpp"
#include "nsf/svgp.hpp"

using namespace nsf;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

// (1 + sqrt3) exp(-sqrt3) and exp(-1/2), evaluated with 30-digit arithmetic.
constexpr double kMaternAtOne = 0.483357724596507650595;
constexpr double kSqExpAtOne = 0.606530659712633423604;

KernelParams<double> params(KernelKind kind, double a, double l) { return {kind, a, l}; }

}  // namespace

TEST_CASE("kernel_eval at zero distance is the squared amplitude") {
  const Vector2d x(0.3, -1.2);
  CHECK(kernel_eval(params(KernelKind::matern32, 1, 1), x, x) == doctest::Approx(1.0));
  CHECK(kernel_eval(params(KernelKind::squared_exponential, 2, 5), x, x) == doctest::Approx(4.0));
}

TEST_CASE("kernel_eval at unit distance matches the closed forms") {
  const Vector2d x1(0, 0), x2(0.6, 0.8);
  CHECK(kernel_eval(params(KernelKind::matern32, 1, 1), x1, x2) == doctest::Approx(kMaternAtOne).epsilon(1e-14));
  CHECK(kernel_eval(params(KernelKind::squared_exponential, 1, 1), x1, x2) ==
        doctest::Approx(kSqExpAtOne).epsilon(1e-14));
}

TEST_CASE("kernel_eval rejects bad parameters and shapes") {
  const Vector2d x(0, 0);
  CHECK_THROWS_AS(kernel_eval(params(KernelKind::matern32, 0, 1), x, x), ParameterDomainError);
  CHECK_THROWS_AS(kernel_eval(params(KernelKind::matern32, 1, -1), x, x), ParameterDomainError);
  const Eigen::VectorXd x2 = Eigen::VectorXd::Zero(2), y = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(kernel_eval(params(KernelKind::matern32, 1, 1), x2, y), ShapeError);
}

TEST_CASE("kernels decrease with distance and stay in (0, a^2]") {
  for (KernelKind k : {KernelKind::matern32, KernelKind::squared_exponential}) {
    const auto p = params(k, 1.5, 0.7);
    double prev = 2.25;
    for (double r = 0.1; r < 5.0; r += 0.1) {
      const double v = detail::kernel_of_distance(p, r);
      CHECK(v > 0.0);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("lengthscale derivative matches finite differences") {
  for (KernelKind k : {KernelKind::matern32, KernelKind::squared_exponential}) {
    for (double r : {0.0, 0.3, 1.0, 2.5}) {
      const double l = 0.8, h = 1e-6;
      const double up = detail::kernel_of_distance(params(k, 1.3, l * std::exp(h)), r);
      const double down = detail::kernel_of_distance(params(k, 1.3, l * std::exp(-h)), r);
      CHECK(detail::kernel_dlog_lengthscale(params(k, 1.3, l), r) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-7));
    }
  }
}

TEST_CASE("cross_cov is symmetric and positive semidefinite on a point set") {
  MatrixXd X = MatrixXd::Random(15, 2);
  for (KernelKind k : {KernelKind::matern32, KernelKind::squared_exponential}) {
    const MatrixXd K = cross_cov<double>(params(k, 1.0, 0.5), X, X);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(K);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("cross_cov entries") {
  MatrixXd A(1, 2), B(2, 2);
  A << 0, 0;
  B << 0, 0, 1, 0;
  const MatrixXd K = cross_cov<double>(params(KernelKind::matern32, 1, 1), A, B);
  CHECK(K(0, 0) == doctest::Approx(1.0));
  CHECK(K(0, 1) == doctest::Approx(kMaternAtOne).epsilon(1e-14));
  CHECK_THROWS_AS(cross_cov<double>(params(KernelKind::matern32, 1, 1), A, MatrixXd(2, 3)), ShapeError);
}

TEST_CASE("chol_with_jitter") {
  SUBCASE("identity") {
    const auto c = chol_with_jitter<double>(MatrixXd::Identity(4, 4));
    CHECK(c.jitter == 0.0);
    CHECK((c.factor - MatrixXd::Identity(4, 4)).norm() == 0.0);
  }
  SUBCASE("scalar") {
    const auto c = chol_with_jitter<double>(MatrixXd::Constant(1, 1, 4.0));
    CHECK(c.factor(0, 0) == 2.0);
    CHECK(c.jitter == 0.0);
  }
  SUBCASE("rank one") {
    const MatrixXd K = MatrixXd::Ones(2, 2);
    const auto c = chol_with_jitter<double>(K);
    CHECK(c.jitter == doctest::Approx(1e-6));
    const MatrixXd err = c.factor * c.factor.transpose() - K - c.jitter * MatrixXd::Identity(2, 2);
    CHECK(err.cwiseAbs().maxCoeff() <= 10 * c.jitter);
  }
  SUBCASE("hopeless") {
    MatrixXd K(2, 2);
    K << 1, 0, 0, -5;
    CHECK_THROWS_AS(chol_with_jitter<double>(K), SingularMatrixError);
  }
  SUBCASE("near-duplicate inducing points") {
    MatrixXd Z(3, 2);
    Z << 0, 0, 1e-9, 0, 1, 1;
    const auto c = chol_with_jitter<double>(cross_cov<double>(params(KernelKind::squared_exponential, 1, 1), Z, Z));
    CHECK(c.jitter > 0.0);
  }
}

TEST_CASE("kmeans and inducing points") {
  MatrixXd X = MatrixXd::Random(40, 2);
  SUBCASE("M = N keeps the coordinates verbatim") { CHECK(choose_inducing_points<double>(X, 40, 1) == X); }
  SUBCASE("M = 1 gives the mean") {
    const MatrixXd Z = choose_inducing_points<double>(X, 1, 1);
    CHECK((Z.row(0) - X.colwise().mean()).norm() < 1e-12);
  }
  SUBCASE("two separated clusters") {
    MatrixXd Y(20, 2);
    for (int i = 0; i < 10; ++i) {
      Y.row(i) << 0.01 * i, 0.0;
      Y.row(10 + i) << 10.0 + 0.01 * i, 5.0;
    }
    MatrixXd Z = choose_inducing_points<double>(Y, 2, 3);
    if (Z(0, 0) > Z(1, 0)) Z.row(0).swap(Z.row(1));
    CHECK(Z(0, 0) == doctest::Approx(0.045));
    CHECK(Z(0, 1) == doctest::Approx(0.0));
    CHECK(Z(1, 0) == doctest::Approx(10.045));
    CHECK(Z(1, 1) == doctest::Approx(5.0));
  }
  SUBCASE("bad M") {
    CHECK_THROWS_AS(choose_inducing_points<double>(X, 0, 1), ArgumentError);
    CHECK_THROWS_AS(choose_inducing_points<double>(X, 41, 1), ArgumentError);
  }
  SUBCASE("deterministic in the seed") {
    CHECK(kmeans<double>(X, 5, 7).centroids == kmeans<double>(X, 5, 7).centroids);
  }
}

TEST_CASE("kernels work in single precision") {
  KernelParams<float> p{KernelKind::matern32, 1.0f, 1.0f};
  const Eigen::Vector2f a(0, 0), b(1, 0);
  CHECK(kernel_eval(p, a, b) == doctest::Approx(kMaternAtOne).epsilon(1e-6));
}
