#include "gpcal/kernel.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpcal;

namespace {

std::vector<GaussianPrediction> random_preds(int n, RngStream& rng) {
  std::vector<GaussianPrediction> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.emplace_back(10.0 * (rng.uniform() - 0.5), 0.05 + 3.0 * rng.uniform());
  }
  return out;
}

}  // namespace

TEST_CASE("kernel point values") {
  const KernelParams kp(1.0);
  CHECK(kernel_eval_raw(0, 0, 0, 0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  // Floored variances shift the value by about the floor itself.
  CHECK(kernel_eval(GaussianPrediction(0, 0), GaussianPrediction(0, 0), kp) ==
        doctest::Approx(1.0).epsilon(1e-11));
  CHECK(kernel_eval_raw(0, 0, 2, 0, 1.0) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(kernel_eval(GaussianPrediction(0, 1), GaussianPrediction(0, 1), kp) ==
        doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("zero-variance reduction to a plain RBF") {
  RngStream rng(5);
  for (int t = 0; t < 200; ++t) {
    const double theta = 1.0 + 3.0 * rng.uniform();
    const double mu1 = 6.0 * (rng.uniform() - 0.5);
    const double mu2 = 6.0 * (rng.uniform() - 0.5);
    const double rbf = std::exp(-(mu1 - mu2) * (mu1 - mu2) / (2.0 * theta * theta));
    CHECK(std::abs(kernel_eval_raw(mu1, 0.0, mu2, 0.0, theta) - rbf) < 1e-12);
  }
}

TEST_CASE("kernel matrix structure") {
  const KernelParams kp(1.0);
  const auto single = kernel_matrix({GaussianPrediction(0, 0)},
                                    {GaussianPrediction(0, 0)}, kp);
  CHECK(single.rows() == 1);
  CHECK(single(0, 0) == doctest::Approx(1.0).epsilon(1e-11));

  RngStream rng(21);
  const auto preds = random_preds(20, rng);
  const Eigen::MatrixXd k = kernel_matrix(preds, preds, kp);
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  SUBCASE("PSD up to the stated eigenvalue tolerance") {
    for (int t = 0; t < 20; ++t) {
      const auto ps = random_preds(20, rng);
      const KernelParams kk(0.3 + 3.0 * rng.uniform());
      const Eigen::MatrixXd m = kernel_matrix(ps, ps, kk);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
    }
  }
  SUBCASE("jittered matrix factorizes") {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += kKernelJitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    CHECK(llt.info() == Eigen::Success);
  }
  SUBCASE("Cauchy-Schwarz bound") {
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (std::size_t j = 0; j < preds.size(); ++j) {
        const double kij = kernel_eval(preds[i], preds[j], kp);
        const double kii = kernel_eval(preds[i], preds[i], kp);
        const double kjj = kernel_eval(preds[j], preds[j], kp);
        CHECK(kij <= std::sqrt(kii * kjj) + 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(kernel_matrix({}, preds, kp), std::invalid_argument);
}

TEST_CASE("kernel derivatives against finite differences") {
  RngStream rng(9);
  for (int t = 0; t < 100; ++t) {
    const double mu1 = 4.0 * (rng.uniform() - 0.5);
    const double mu2 = 4.0 * (rng.uniform() - 0.5);
    const double v1 = 0.1 + 2.0 * rng.uniform();
    const double v2 = 0.1 + 2.0 * rng.uniform();
    const double theta = 0.3 + 2.0 * rng.uniform();
    const KernelDeriv d = kernel_eval_deriv(mu1, v1, mu2, v2, theta);
    const double h = 1e-6;
    const double fd_theta = (kernel_eval_raw(mu1, v1, mu2, v2, theta + h) -
                             kernel_eval_raw(mu1, v1, mu2, v2, theta - h)) /
                            (2 * h);
    const double fd_mu1 = (kernel_eval_raw(mu1 + h, v1, mu2, v2, theta) -
                           kernel_eval_raw(mu1 - h, v1, mu2, v2, theta)) /
                          (2 * h);
    const double fd_v1 = (kernel_eval_raw(mu1, v1 + h, mu2, v2, theta) -
                          kernel_eval_raw(mu1, v1 - h, mu2, v2, theta)) /
                         (2 * h);
    CHECK(oracles::rel_err(d.d_theta, fd_theta, 1e-6) < 1e-6);
    CHECK(oracles::rel_err(d.d_mu1, fd_mu1, 1e-6) < 1e-6);
    CHECK(oracles::rel_err(d.d_v, fd_v1, 1e-6) < 1e-6);
  }
}

TEST_CASE("kron_coreg layout and spectrum") {
  CoregFactor identity;
  Eigen::MatrixXd k1(1, 1);
  k1 << 1.0;
  CHECK(kron_coreg(k1, identity).isApprox(Eigen::MatrixXd::Identity(3, 3)));

  const Eigen::MatrixXd k2 = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  CHECK(kron_coreg(k2, identity).isApprox(2.0 * Eigen::MatrixXd::Identity(6, 6)));

  SUBCASE("instance-major block layout") {
    CoregFactor cf;
    cf.L_B << 1, 0, 0, 0.5, 1.2, 0, -0.3, 0.1, 0.9;
    Eigen::MatrixXd k(2, 2);
    k << 1.0, 0.25, 0.25, 2.0;
    const Eigen::MatrixXd c = kron_coreg(k, cf);
    const Eigen::Matrix3d b = cf.B();
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK((c.block<3, 3>(3 * i, 3 * j) - k(i, j) * b).cwiseAbs().maxCoeff() <
              1e-15);
      }
    }
  }

  SUBCASE("eigenvalues multiply") {
    RngStream rng(31);
    Eigen::MatrixXd raw = Eigen::MatrixXd::NullaryExpr(
        4, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
    const Eigen::MatrixXd k = raw * raw.transpose();
    CoregFactor cf;
    cf.L_B << 0.8, 0, 0, 0.3, 1.1, 0, -0.2, 0.4, 0.6;
    const Eigen::MatrixXd c = kron_coreg(k, cf);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(k);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eb(cf.B());
    std::vector<double> products;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) {
        products.push_back(ek.eigenvalues()[i] * eb.eigenvalues()[j]);
      }
    }
    std::sort(products.begin(), products.end());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(c);
    for (int i = 0; i < 12; ++i) {
      CHECK(std::abs(ec.eigenvalues()[i] - products[static_cast<std::size_t>(i)]) <
            1e-8);
    }
  }
}

TEST_CASE("coregionalization factor validation") {
  CoregFactor ok;
  CHECK_NOTHROW(ok.validate());
  CoregFactor bad;
  bad.L_B(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CoregFactor upper;
  upper.L_B(0, 2) = 0.5;
  CHECK_THROWS_AS(upper.validate(), std::invalid_argument);
}
