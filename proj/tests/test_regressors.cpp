#include "gpcal/regressors.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpcal;

namespace {

Dataset linear_dataset(int n, double slope, double intercept, double noise_sd,
                       RngStream& rng) {
  Dataset ds;
  ds.features.resize(n, 1);
  ds.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = 10.0 * (rng.uniform() - 0.5);
    ds.features(i, 0) = x;
    ds.targets[i] = slope * x + intercept + noise_sd * rng.normal();
  }
  return ds;
}

}  // namespace

TEST_CASE("ols exact and constant fits") {
  RngStream rng(1);
  Dataset exact = linear_dataset(50, 2.0, 0.0, 0.0, rng);
  const OlsModel m = ols_fit(exact);
  Eigen::VectorXd x(1);
  x << 5.0;
  CHECK(ols_predict(m, x).mu == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(m.noise_var == kVarianceFloor);

  Dataset constant = linear_dataset(50, 0.0, 3.0, 0.0, rng);
  const OlsModel mc = ols_fit(constant);
  Eigen::VectorXd x0(1);
  x0 << -7.0;
  CHECK(ols_predict(mc, x0).mu == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("ols matches a normal-equations oracle") {
  RngStream rng(2);
  Dataset ds;
  ds.features = Eigen::MatrixXd::NullaryExpr(
      60, 3, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  ds.targets = Eigen::VectorXd::NullaryExpr(
      60, [&](Eigen::Index) { return rng.normal(); });
  const OlsModel m = ols_fit(ds);

  // Dense solve on the raw augmented design; OLS predictions are invariant
  // to the affine standardization.
  Eigen::MatrixXd phi(60, 4);
  phi.leftCols(3) = ds.features;
  phi.col(3).setOnes();
  const Eigen::VectorXd w =
      (phi.transpose() * phi).ldlt().solve(phi.transpose() * ds.targets);
  for (int i = 0; i < 60; ++i) {
    const double want = phi.row(i).dot(w);
    CHECK(ols_predict(m, ds.features.row(i).transpose()).mu ==
          doctest::Approx(want).epsilon(1e-8));
  }

  SUBCASE("uniform variance across inputs") {
    Eigen::VectorXd a(3), b(3);
    a << 0, 1, 2;
    b << -5, 3, 0.5;
    CHECK(ols_predict(m, a).var == ols_predict(m, b).var);
  }
}

TEST_CASE("ols rejects rank-deficient designs") {
  Dataset ds;
  ds.features.resize(20, 2);
  for (int i = 0; i < 20; ++i) {
    ds.features(i, 0) = i;
    ds.features(i, 1) = 2.0 * i;  // collinear
  }
  ds.targets = Eigen::VectorXd::Random(20);
  CHECK_THROWS_AS(ols_fit(ds), std::invalid_argument);

  Dataset tiny;
  tiny.features = Eigen::MatrixXd::Random(3, 2);
  tiny.targets = Eigen::VectorXd::Random(3);
  CHECK_THROWS_AS(ols_fit(tiny), std::invalid_argument);
}

TEST_CASE("bayes ridge against ols on clean data") {
  RngStream rng(3);
  Dataset ds = linear_dataset(200, 1.5, -2.0, 1e-6, rng);
  const BayesRidgeModel br = bayes_ridge_fit(ds);
  const OlsModel ols = ols_fit(ds);
  for (double xv : {-4.0, 0.0, 3.5}) {
    Eigen::VectorXd x(1);
    x << xv;
    CHECK(std::abs(bayes_ridge_predict(br, x).mu - ols_predict(ols, x).mu) < 1e-4);
  }
}

TEST_CASE("bayes ridge predictive variance shape") {
  RngStream rng(4);
  Dataset ds = linear_dataset(120, 0.8, 1.0, 0.5, rng);
  const BayesRidgeModel m = bayes_ridge_fit(ds);

  Eigen::VectorXd center(1), far(1);
  center << 0.0;
  far << 1000.0;
  const double v_center = bayes_ridge_predict(m, center).var;
  const double v_far = bayes_ridge_predict(m, far).var;
  CHECK(v_far > v_center);
  CHECK(v_center > 1.0 / m.noise_precision);

  SUBCASE("pure-noise targets shrink the slope to zero") {
    Dataset noise = linear_dataset(500, 0.0, 0.0, 1.0, rng);
    const BayesRidgeModel mn = bayes_ridge_fit(noise);
    CHECK(std::abs(mn.weight_mean[0]) < 0.15);
  }
  SUBCASE("variance is symmetric in standardized inputs") {
    // With one standardized feature, var depends on x only through the
    // squared standardized coordinate.
    const double mean = m.std_.mean[0];
    Eigen::VectorXd plus(1), minus(1);
    plus << mean + 2.7;
    minus << mean - 2.7;
    CHECK(bayes_ridge_predict(m, plus).var ==
          doctest::Approx(bayes_ridge_predict(m, minus).var).epsilon(1e-10));
  }
}

TEST_CASE("both models emit valid predictions everywhere") {
  RngStream rng(5);
  Dataset ds = linear_dataset(80, 0.3, 0.0, 2.0, rng);
  const OlsModel ols = ols_fit(ds);
  const BayesRidgeModel br = bayes_ridge_fit(ds);
  for (int i = 0; i < 80; ++i) {
    const auto po = ols_predict(ols, ds.features.row(i).transpose());
    const auto pb = bayes_ridge_predict(br, ds.features.row(i).transpose());
    CHECK(po.var >= kVarianceFloor);
    CHECK(pb.var >= kVarianceFloor);
    CHECK(std::isfinite(po.mu));
    CHECK(std::isfinite(pb.mu));
  }
}
