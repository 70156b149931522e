#include "gpcal/beta_link.hpp"

#include "gpcal/core.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpcal;

namespace {

double fd_map_derivative(double q, const BetaParams& p, double h = 1e-6) {
  return (beta_map(q + h, p) - beta_map(q - h, p)) / (2.0 * h);
}

BetaParams random_params(RngStream& rng, double lo_ab = 0.1, double hi_ab = 10.0,
                         double c_span = 3.0) {
  const double a = lo_ab + (hi_ab - lo_ab) * rng.uniform();
  const double b = lo_ab + (hi_ab - lo_ab) * rng.uniform();
  const double c = c_span * (2.0 * rng.uniform() - 1.0);
  return {a, b, c};
}

}  // namespace

TEST_CASE("beta_map point values") {
  CHECK(beta_map(0.3, {1, 1, 0}) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(beta_map(0.5, {2, 2, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  // logistic(1), evaluated independently
  const double logistic1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(beta_map(0.5, {1, 1, 1}) == doctest::Approx(logistic1).epsilon(1e-12));
  CHECK(beta_map(0.5, {1, 1, 1}) == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK_THROWS_AS(beta_map(std::nan(""), {1, 1, 0}), std::invalid_argument);
}

TEST_CASE("beta_map is monotone for positive a, b") {
  RngStream rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const BetaParams p = random_params(rng);
    double prev = -1.0;
    for (int k = 0; k <= 200; ++k) {
      const double q = static_cast<double>(k) / 200.0;
      const double v = beta_map(q, p);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("beta_link_ratio equals the map derivative") {
  SUBCASE("identity map has unit ratio") {
    for (double q : {0.01, 0.3, 0.5, 0.77, 0.99}) {
      CHECK(beta_link_ratio(q, {1, 1, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("symmetric sigmoid at the midpoint") {
    CHECK(beta_link_ratio(0.5, {2, 2, 0}) ==
          doctest::Approx(fd_map_derivative(0.5, {2, 2, 0})).epsilon(1e-7));
    CHECK(beta_link_ratio(0.5, {2, 2, 0}) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("inverse sigmoid against finite differences") {
    const BetaParams p{0.5, 0.5, 0};
    CHECK(oracles::rel_err(beta_link_ratio(0.9, p), fd_map_derivative(0.9, p)) < 1e-5);
  }
  SUBCASE("derivative consistency on a grid, random parameters") {
    RngStream rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const BetaParams p = random_params(rng);
      for (int k = 1; k <= 99; k += 7) {
        const double q = static_cast<double>(k) / 100.0;
        const double r = beta_link_ratio(q, p);
        const double fd = fd_map_derivative(q, p);
        CHECK(std::abs(r - fd) / std::max(1.0, r) < 1e-5);
      }
    }
  }
}

TEST_CASE("latent-to-parameter transform") {
  const LinkHyper unit;
  const BetaParams id = link_params_from_latent({0, 0, 0}, unit);
  CHECK(id.a == doctest::Approx(1.0));
  CHECK(id.b == doctest::Approx(1.0));
  CHECK(id.c == doctest::Approx(0.0));

  const BetaParams ea = link_params_from_latent({1, 0, 0}, unit);
  CHECK(ea.a == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(ea.a == doctest::Approx(2.718282).epsilon(1e-6));

  LinkHyper h;
  h.gamma_c = 4.0;
  h.delta_c = -0.5;
  CHECK(link_params_from_latent({0, 0, 2}, h).c == doctest::Approx(0.0));

  LinkHyper bad;
  bad.gamma_b = 0.0;
  CHECK_THROWS_AS(link_params_from_latent({0, 0, 0}, bad), std::invalid_argument);
}

TEST_CASE("log_calibrated_density") {
  SUBCASE("identity parameters reproduce the base log-density") {
    const GaussianPrediction std_normal(0.0, 1.0);
    const double at_mean = log_calibrated_density(0.0, std_normal, {1, 1, 0});
    CHECK(at_mean == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
    CHECK(at_mean == doctest::Approx(-0.918939).epsilon(1e-5));

    RngStream rng(3);
    for (int t = 0; t < 200; ++t) {
      const GaussianPrediction pred(10.0 * (rng.uniform() - 0.5),
                                    0.1 + 5.0 * rng.uniform());
      const double y = pred.mu + 8.0 * pred.std_dev() * (rng.uniform() - 0.5);
      const double base = gaussian_log_pdf(y, pred);
      const double cal = log_calibrated_density(y, pred, {1, 1, 0});
      CHECK(oracles::rel_err(cal, base, 1e-12) < 1e-12);
    }
  }
  SUBCASE("extreme tails stay floored and finite") {
    const GaussianPrediction pred(0.0, 1.0);
    const double v = log_calibrated_density(60.0, pred, {3.0, 0.2, -2.5});
    CHECK(std::isfinite(v));
    CHECK(v >= kLogDensityFloor);
  }
  SUBCASE("calibrated pdf integrates to one on the evaluation grid") {
    RngStream rng(11);
    for (int t = 0; t < 30; ++t) {
      const GaussianPrediction pred(6.0 * (rng.uniform() - 0.5),
                                    0.25 + 4.0 * rng.uniform());
      // Tail mass outside an 8-sigma window stays below tolerance for
      // moderate map parameters; extreme small a/b push mass off any
      // finite grid.
      const BetaParams p = random_params(rng, 0.5, 3.0, 2.0);
      const auto g = make_grid({pred});
      Eigen::VectorXd pdf(g.size());
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        pdf[i] = std::exp(log_calibrated_density(g[i], pred, p));
      }
      CHECK(std::abs(trapezoid_integral(g, pdf) - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("latent gradient of the calibrated log-density") {
  // Partial derivatives with respect to (w_a, w_b, w_c) against central
  // finite differences.
  RngStream rng(19);
  LinkHyper h;
  h.gamma_a = 1.3;
  h.gamma_b = 0.8;
  h.gamma_c = 2.0;
  h.delta_a = 0.1;
  h.delta_b = -0.2;
  h.delta_c = 0.05;
  auto ll_at = [&](double y, const GaussianPrediction& pred, LatentTriple w) {
    return log_calibrated_density(y, pred, link_params_from_latent(w, h));
  };
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const GaussianPrediction pred(4.0 * (rng.uniform() - 0.5),
                                  0.3 + 2.0 * rng.uniform());
    const double y = pred.mu + 4.0 * pred.std_dev() * (rng.uniform() - 0.5);
    const LatentTriple w{rng.normal(), rng.normal(), rng.normal()};

    const LinkParamsJac j = link_params_from_latent_jac(w, h);
    const double q = std::clamp(gaussian_cdf(y, pred), kQuantileClamp,
                                1.0 - kQuantileClamp);
    const double qc = std::clamp(gaussian_cdf_complement(y, pred), kQuantileClamp,
                                 1.0 - kQuantileClamp);
    const LinkRatioEval ev = log_beta_link_ratio_with_partials(q, qc, j.p);
    const double grads[3] = {ev.d_a * j.da_dw, ev.d_b * j.db_dw, ev.d_c * j.dc_dw};

    const double hstep = 1e-6;
    for (int k = 0; k < 3; ++k) {
      LatentTriple wp = w, wm = w;
      (k == 0 ? wp.w_a : k == 1 ? wp.w_b : wp.w_c) += hstep;
      (k == 0 ? wm.w_a : k == 1 ? wm.w_b : wm.w_c) -= hstep;
      const double fd = (ll_at(y, pred, wp) - ll_at(y, pred, wm)) / (2.0 * hstep);
      CHECK(oracles::rel_err(grads[k], fd, 1e-6) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked == 300);
}
