#include "doctest.h"

#include <cmath>
#include <random>

#include "nsf/errors.hpp"
#include "nsf/model.hpp"

using namespace nsf;

namespace {

ObservationData small_counts(Index N, Index J, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ObservationData d;
  d.X.resize(N, 2);
  d.Y.resize(N, J);
  for (Index i = 0; i < N; ++i) d.X.row(i) << u(rng), u(rng);
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < J; ++j) {
      std::poisson_distribution<int> p(1.0 + 4.0 * (j % 2 == 0 ? d.X(i, 0) : d.X(i, 1)));
      d.Y(i, j) = p(rng);
    }
  }
  d.Y.col(0).array() += 1.0;
  d.nu = d.Y.rowwise().sum() / d.Y.rowwise().sum().mean();
  return d;
}

}  // namespace

TEST_CASE("make_spec structure") {
  CHECK(make_spec(ModelKind::nsf, 4).T == 4);
  CHECK(make_spec(ModelKind::pnmf, 4).T == 0);
  CHECK(make_spec(ModelKind::nsfh, 20).T == 10);
  CHECK(make_spec(ModelKind::nsfh, 7, 4).T == 4);
  CHECK(make_spec(ModelKind::rsf, 3).likelihood == LikelihoodFamily::gaussian);
  CHECK_FALSE(make_spec(ModelKind::fa, 3).nonnegative);
  for (ModelKind k : {ModelKind::fa, ModelKind::pnmf, ModelKind::rsf, ModelKind::nsf, ModelKind::nsfh}) {
    CHECK(make_spec(k, 4).kind() == k);
    CHECK(model_kind_from_string(to_string(k)) == k);
  }
  ModelSpec bad;
  bad.L = 4;
  bad.T = 2;
  bad.nonnegative = false;
  CHECK_THROWS_AS(bad.validate(), UnsupportedModelError);
  CHECK_THROWS_AS(make_spec(ModelKind::nsf, 0), ArgumentError);
  CHECK_THROWS_AS(make_spec(ModelKind::nsf, 3, 1), ArgumentError);
}

TEST_CASE("build_model allocates the right blocks") {
  const ObservationData d = small_counts(30, 6, 1);
  ModelSpec spec = make_spec(ModelKind::nsf, 3);
  spec.M = 10;
  FactorModel nsf = build_model(spec, d, 1);
  CHECK(nsf.spatial.size() == 3);
  CHECK(nsf.V.cols() == 0);
  CHECK(nsf.meanfield.delta.cols() == 0);
  CHECK(nsf.spatial[0].Z.rows() == 10);
  CHECK((nsf.W.array() >= 0).all());

  const FactorModel pnmf = build_model(make_spec(ModelKind::pnmf, 3), d, 1);
  CHECK(pnmf.spatial.empty());
  CHECK(pnmf.W.cols() == 0);
  CHECK(pnmf.V.cols() == 3);

  const FactorModel full = build_model(make_spec(ModelKind::nsfh, 4, 2), d, 1);
  CHECK(full.spatial[0].Z == d.X);

  ModelSpec too_many = make_spec(ModelKind::nsf, 2);
  too_many.M = 31;
  CHECK_THROWS_AS(build_model(too_many, d, 1), ArgumentError);
}

TEST_CASE("build_model is deterministic in its seed") {
  const ObservationData d = small_counts(25, 5, 2);
  ModelSpec spec = make_spec(ModelKind::nsfh, 2, 1);
  spec.M = 7;
  const FactorModel a = build_model(spec, d, 4), b = build_model(spec, d, 4);
  CHECK(a.W == b.W);
  CHECK(a.spatial[0].Z == b.spatial[0].Z);
  CHECK(a.meanfield.delta == b.meanfield.delta);
}

TEST_CASE("kl_meanfield closed form") {
  MeanFieldState s;
  s.prior_mean = VectorXd::Constant(1, 0.3);
  s.prior_var = VectorXd::Constant(1, 2.5);
  s.delta = MatrixXd::Constant(1, 1, 0.3);
  s.omega = MatrixXd::Constant(1, 1, 2.5);
  CHECK(kl_meanfield(s, 0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  s.delta(0, 0) = 0.3 + std::sqrt(2.5);
  CHECK(kl_meanfield(s, 0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("predict_mean with all factors at zero is the loading row sum") {
  const ObservationData d = small_counts(12, 4, 3);
  FactorModel m = build_model(make_spec(ModelKind::pnmf, 2), d, 1);
  m.meanfield.delta.setZero();
  const MatrixXd lam = predict_mean(m, VectorXd::Ones(12));
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(lam(i, j) == doctest::Approx(m.V.row(j).sum()).epsilon(1e-14));
}

TEST_CASE("hand-built 2 x 2 hybrid model") {
  FactorModel m;
  m.spec = make_spec(ModelKind::nsfh, 2, 1);
  m.X_train.resize(2, 1);
  m.X_train << 0.0, 1.0;
  SpatialComponentState<double> s;
  s.Z = m.X_train;
  s.kernel = {KernelKind::matern32, 1.0, 0.5};
  s.beta0 = 0.2;
  s.beta1 = VectorXd::Constant(1, -0.1);
  s.delta = Eigen::Vector2d(0.5, -0.4);
  s.omega_chol = 0.1 * MatrixXd::Identity(2, 2);
  m.spatial.push_back(s);
  m.W = Eigen::Vector2d(1.5, 0.0);
  m.V = Eigen::Vector2d(0.5, 2.0);
  m.meanfield.delta = Eigen::Vector2d(0.1, -0.3);
  m.meanfield.omega = MatrixXd::Constant(2, 1, 0.2);
  m.meanfield.prior_mean = VectorXd::Constant(1, 0.05);
  m.meanfield.prior_var = VectorXd::Constant(1, 1.0);
  m.likelihood.family = LikelihoodFamily::poisson;
  const Eigen::Vector2d nu(0.8, 1.2);
  const MatrixXd lam = predict_mean(m, nu);
  for (int i = 0; i < 2; ++i) {
    const double f = std::exp(s.delta(i)), h = std::exp(m.meanfield.delta(i, 0));
    CHECK(lam(i, 0) == doctest::Approx(nu(i) * (1.5 * f + 0.5 * h)).epsilon(1e-12));
    CHECK(lam(i, 1) == doctest::Approx(nu(i) * (2.0 * h)).epsilon(1e-12));
  }
  // Out of sample at the training coordinates: spatial part interpolates, nonspatial uses the prior mean.
  const MatrixXd out = predict_mean_at(m, m.X_train, nu);
  for (int i = 0; i < 2; ++i) {
    CHECK(out(i, 0) == doctest::Approx(nu(i) * (1.5 * std::exp(s.delta(i)) + 0.5 * std::exp(0.05))).epsilon(1e-10));
  }
}

TEST_CASE("out-of-sample prediction policy for models without spatial factors") {
  const ObservationData d = small_counts(12, 4, 3);
  const FactorModel m = build_model(make_spec(ModelKind::pnmf, 2), d, 1);
  MatrixXd X(3, 2);
  X.setRandom();
  CHECK_THROWS_AS(predict_mean_at(m, X, VectorXd::Ones(3)), UnsupportedModelError);
  const MatrixXd lam = predict_mean_at(m, X, VectorXd::Ones(3), NonspatialPolicy::prior_mean);
  const VectorXd expect = m.V * m.meanfield.prior_mean.array().exp().matrix();
  for (Index i = 0; i < 3; ++i) CHECK((lam.row(i).transpose() - expect).norm() < 1e-12);
}

TEST_CASE("predicted means are positive when every loading row has a positive entry") {
  const ObservationData d = small_counts(20, 5, 8);
  ModelSpec spec = make_spec(ModelKind::nsfh, 2, 1);
  spec.M = 6;
  FactorModel m = build_model(spec, d, 2);
  m.W.col(0) << 0, 1, 0, 2, 0;
  m.V.col(0) << 1, 0, 3, 0, 1;
  CHECK((predict_mean(m, d.nu).array() > 0).all());
}

TEST_CASE("hybrid models at the ends of the T range match NSF and PNMF") {
  const ObservationData d = small_counts(20, 5, 5);
  ModelSpec nsf = make_spec(ModelKind::nsf, 2), hyb = make_spec(ModelKind::nsfh, 2, 2);
  nsf.M = hyb.M = 6;
  const FactorModel a = build_model(nsf, d, 3), b = build_model(hyb, d, 3);
  CHECK(a.W == b.W);
  CHECK(elbo(a, d, 3, 9) == elbo(b, d, 3, 9));

  const FactorModel p = build_model(make_spec(ModelKind::pnmf, 2), d, 3);
  const FactorModel q = build_model(make_spec(ModelKind::nsfh, 2, 0), d, 3);
  CHECK(p.V == q.V);
  CHECK(elbo(p, d, 3, 9) == elbo(q, d, 3, 9));
}

TEST_CASE("full-batch ELBO equals the mean of disjoint minibatch ELBOs") {
  const ObservationData d = small_counts(24, 4, 6);
  ModelSpec spec = make_spec(ModelKind::nsfh, 2, 1);
  spec.M = 6;
  const FactorModel m = build_model(spec, d, 1);
  const double full = elbo(m, d, 2, 17);
  double sum = 0.0;
  const auto rows = all_rows(24);
  for (int k = 0; k < 4; ++k) sum += elbo(m, d, std::span<const Index>(rows.data() + 6 * k, 6), 2, 17);
  CHECK(sum / 4 == doctest::Approx(full).epsilon(1e-10));
}

TEST_CASE("deterministic factors with q = p give the plain log-likelihood") {
  const ObservationData d = small_counts(10, 3, 7);
  FactorModel m = build_model(make_spec(ModelKind::pnmf, 2), d, 1);
  m.meanfield.omega.setConstant(1e-300);
  for (Index k = 0; k < 2; ++k) {
    m.meanfield.prior_mean(k) = 0.0;
    m.meanfield.prior_var(k) = 1.0;
  }
  m.meanfield.delta.setZero();
  const ElboTerms t = elbo_terms(m, d, all_rows(10), 1, 1);
  const MatrixXd lam = predict_mean(m, d.nu);
  double ll = 0.0;
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 3; ++j) ll += log_lik(m.likelihood, d.Y(i, j), lam(i, j), j);
  CHECK(t.expected_loglik == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("gaussian RSF ELBO matches the analytic expectation") {
  // N = 3, J = 1, L = 1, M = N.
  ObservationData d;
  d.X.resize(3, 1);
  d.X << -0.5, 0.1, 0.8;
  d.Y.resize(3, 1);
  d.Y << 0.3, -0.2, 0.9;
  d.nu = VectorXd::Ones(3);
  FactorModel m = build_model(make_spec(ModelKind::rsf, 1), d, 1);
  m.W(0, 0) = 0.7;
  m.likelihood.aux(0) = 0.4;
  m.spatial[0].omega_chol(1, 0) = 0.05;
  const auto post = marginal_posterior<double>(m.spatial[0], d.X);
  double analytic = 0.0;
  for (Index i = 0; i < 3; ++i) {
    const double e = d.Y(i, 0) - 0.7 * post.mean(i);
    analytic += -0.5 * std::log(2 * M_PI * 0.4) - (e * e + 0.49 * post.variance(i)) / (2 * 0.4);
  }
  analytic -= kl_inducing<double>(m.spatial[0]);
  // Standard error from the spread of single-sample estimates.
  double s1 = 0, s2 = 0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    const double v = elbo(m, d, 1, 1000 + r);
    s1 += v;
    s2 += v * v;
  }
  const double sd1 = std::sqrt(s2 / reps - (s1 / reps) * (s1 / reps));
  const int S = 100000;
  const double est = elbo(m, d, S, 5);
  CHECK(std::abs(est - analytic) < 3 * sd1 / std::sqrt(double(S)));
}

TEST_CASE("Monte Carlo spread of the ELBO shrinks like one over root S") {
  const ObservationData d = small_counts(15, 4, 3);
  ModelSpec spec = make_spec(ModelKind::nsfh, 2, 1);
  spec.M = 5;
  FactorModel m = build_model(spec, d, 1);
  m.meanfield.omega.setConstant(0.3);
  auto spread = [&](int S) {
    double s1 = 0, s2 = 0;
    for (int r = 0; r < 100; ++r) {
      const double v = elbo(m, d, S, 7000 + 31 * r);
      s1 += v;
      s2 += v * v;
    }
    return std::sqrt(s2 / 100 - (s1 / 100) * (s1 / 100));
  };
  const double a = spread(1), b = spread(4), c = spread(16);
  CHECK(a / b == doctest::Approx(2.0).epsilon(0.3));
  CHECK(b / c == doctest::Approx(2.0).epsilon(0.3));
}

TEST_CASE("elbo argument checks") {
  const ObservationData d = small_counts(10, 3, 1);
  const FactorModel m = build_model(make_spec(ModelKind::pnmf, 1), d, 1);
  CHECK_THROWS_AS(elbo(m, d, 0, 1), ArgumentError);
  CHECK_THROWS_AS(elbo(m, d, std::span<const Index>(), 1, 1), ArgumentError);
}
