#include "gpcal/data.hpp"

#include "gpcal/regressors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>

using namespace gpcal;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/gpcal_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("synthetic mixture generator") {
  RngStream rng(101);
  const Dataset ds = gen_synthetic(360, rng);
  CHECK(ds.size() == 360);
  CHECK(ds.dim() == 1);
  CHECK(ds.features.minCoeff() >= -10.0);
  CHECK(ds.features.maxCoeff() <= 40.0);

  SUBCASE("branch structure via the documented sampling recipe") {
    // Replay the generator's draw order (x, branch, noise per instance) to
    // recover the branch labels, then check each branch's slope.
    RngStream replay(101);
    const double noise_sd = std::sqrt(2.0);
    int n1 = 0;
    double slope_acc = 0.0;
    double y0_acc = 0.0;
    int n0 = 0;
    for (int i = 0; i < 360; ++i) {
      const double x = -10.0 + 50.0 * replay.uniform();
      const bool sloped = replay.uniform() < 0.5;
      const double eps = noise_sd * replay.normal();
      CHECK(ds.features(i, 0) == doctest::Approx(x));
      CHECK(ds.targets[i] == doctest::Approx((sloped ? 0.5 * x : 0.0) + eps));
      if (sloped && std::abs(x) > 1.0) {
        slope_acc += ds.targets[i] / x;
        ++n1;
      } else if (!sloped) {
        y0_acc += ds.targets[i];
        ++n0;
      }
    }
    CHECK(n1 > 50);
    CHECK(n0 > 50);
    // Law of large numbers on the labeled branches.
    CHECK(std::abs(slope_acc / n1 - 0.5) < 3.0 / std::sqrt(static_cast<double>(n1)));
    CHECK(std::abs(y0_acc / n0) < 3.0 * noise_sd / std::sqrt(static_cast<double>(n0)));
  }

  SUBCASE("overall conditional mean is the half-slope line") {
    RngStream big_rng(7);
    const Dataset big = gen_synthetic(20000, big_rng);
    const OlsModel m = ols_fit(big);
    Eigen::VectorXd x(1);
    x << 20.0;
    Eigen::VectorXd x0(1);
    x0 << 0.0;
    const double slope =
        (ols_predict(m, x).mu - ols_predict(m, x0).mu) / 20.0;
    CHECK(std::abs(slope - 0.25) < 0.02);
  }

  CHECK_THROWS_AS(gen_synthetic(1, rng), std::invalid_argument);
}

TEST_CASE("dataset csv round trip and validation") {
  TempFile f("roundtrip.csv");
  RngStream rng(3);
  const Dataset ds = gen_synthetic(25, rng);
  write_dataset_csv(ds, f.path);
  const Dataset back = load_csv(f.path);
  REQUIRE(back.size() == 25);
  CHECK((back.features - ds.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.targets - ds.targets).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("header-only file is rejected") {
    TempFile h("header_only.csv");
    std::ofstream(h.path) << "x0,y\n";
    CHECK_THROWS_AS(load_csv(h.path), std::invalid_argument);
  }
  SUBCASE("malformed rows name the line") {
    TempFile h("malformed.csv");
    std::ofstream(h.path) << "x0,y\n1.0,2.0\noops,3.0\n";
    try {
      load_csv(h.path);
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
}

TEST_CASE("prediction csv round trip and variance checks") {
  TempFile f("preds.csv");
  std::vector<GaussianPrediction> preds = {GaussianPrediction(0.5, 1.5),
                                           GaussianPrediction(-2.0, 0.25),
                                           GaussianPrediction(7.0, 3.0)};
  Eigen::VectorXd ys(3);
  ys << 1.0, -1.5, 6.0;
  write_predictions_csv(preds, ys, f.path);
  auto [back, back_y] = load_predictions_csv(f.path);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[static_cast<std::size_t>(i)].mu == preds[static_cast<std::size_t>(i)].mu);
    CHECK(back[static_cast<std::size_t>(i)].var ==
          preds[static_cast<std::size_t>(i)].var);
    CHECK(back_y[i] == ys[i]);
  }

  SUBCASE("column order does not matter") {
    TempFile h("reordered.csv");
    std::ofstream(h.path) << "y,var,mu\n1.0,2.0,3.0\n";
    auto [p, y] = load_predictions_csv(h.path);
    CHECK(p[0].mu == 3.0);
    CHECK(p[0].var == 2.0);
    CHECK(y[0] == 1.0);
  }
  SUBCASE("nonpositive variance is rejected with the line number") {
    TempFile h("badvar.csv");
    std::ofstream(h.path) << "mu,var,y\n0.0,1.0,0.0\n0.0,-0.5,0.0\n";
    try {
      load_predictions_csv(h.path);
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("missing required columns") {
    TempFile h("nocol.csv");
    std::ofstream(h.path) << "mu,sigma,y\n0.0,1.0,0.0\n";
    CHECK_THROWS_AS(load_predictions_csv(h.path), std::invalid_argument);
  }
}
