#include "gpcal/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace gpcal {

std::vector<double> quantile_ladder() {
  std::vector<double> taus;
  taus.reserve(19);
  for (int i = 1; i <= 19; ++i) taus.push_back(0.05 * i);
  return taus;
}

namespace {

double interp_pdf(const GridDistribution& d, double y, std::size_t instance) {
  const auto& ys = d.ys;
  if (y < ys[0] || y > ys[ys.size() - 1]) {
    throw std::invalid_argument("nll: target of instance " +
                                std::to_string(instance) + " outside the grid");
  }
  const auto it = std::upper_bound(ys.data(), ys.data() + ys.size(), y);
  Eigen::Index hi = it - ys.data();
  if (hi == 0) return d.pdf[0];
  if (hi >= ys.size()) hi = ys.size() - 1;
  const Eigen::Index lo = hi - 1;
  const double t = (y - ys[lo]) / (ys[hi] - ys[lo]);
  return d.pdf[lo] + t * (d.pdf[hi] - d.pdf[lo]);
}

}  // namespace

double nll(const std::vector<GridDistribution>& dists, const Eigen::VectorXd& ys) {
  if (dists.size() != static_cast<std::size_t>(ys.size()) || dists.empty()) {
    throw std::invalid_argument("nll: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const double p =
        std::max(interp_pdf(dists[i], ys[static_cast<Eigen::Index>(i)], i), 1e-300);
    acc -= std::log(p);
  }
  return acc / static_cast<double>(dists.size());
}

double expected_value(const GridDistribution& d) {
  return trapezoid_integral(d.ys, (d.ys.array() * d.pdf.array()).matrix());
}

double quantile_from_cdf(const GridDistribution& d, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("quantile_from_cdf: tau must be in (0,1)");
  }
  const auto& cdf = d.cdf;
  if (tau > cdf[cdf.size() - 1]) {
    throw std::invalid_argument("quantile_from_cdf: tau above the achieved CDF range");
  }
  const auto it = std::lower_bound(cdf.data(), cdf.data() + cdf.size(), tau);
  const Eigen::Index hi = it - cdf.data();
  if (hi == 0) return d.ys[0];
  const Eigen::Index lo = hi - 1;
  const double rise = cdf[hi] - cdf[lo];
  // rise > 0 here: cdf[lo] < tau <= cdf[hi].
  const double t = (tau - cdf[lo]) / rise;
  return d.ys[lo] + t * (d.ys[hi] - d.ys[lo]);
}

double pinball(double y, double g, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("pinball: tau must be in (0,1)");
  }
  return y < g ? (1.0 - tau) * (g - y) : tau * (y - g);
}

EvalReport evaluate(std::size_t n,
                    const std::function<GridDistribution(std::size_t)>& make_dist,
                    const Eigen::VectorXd& ys) {
  if (n == 0 || n != static_cast<std::size_t>(ys.size())) {
    throw std::invalid_argument("evaluate: size mismatch");
  }
  const std::vector<double> taus = quantile_ladder();
  EvalReport r;
  std::vector<double> below(taus.size(), 0.0);
  double pbl_acc = 0.0;
  double nll_acc = 0.0;
  double mse_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const GridDistribution d = make_dist(i);
    const double y = ys[static_cast<Eigen::Index>(i)];
    nll_acc -= std::log(std::max(interp_pdf(d, y, i), 1e-300));
    const double ev = expected_value(d);
    mse_acc += (y - ev) * (y - ev);
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const double g = quantile_from_cdf(d, taus[t]);
      pbl_acc += pinball(y, g, taus[t]);
      if (y <= g) below[t] += 1.0;
    }
  }
  const double dn = static_cast<double>(n);
  r.nll = nll_acc / dn;
  r.mse = mse_acc / dn;
  r.pbl = pbl_acc / (dn * static_cast<double>(taus.size()));
  for (std::size_t t = 0; t < taus.size(); ++t) {
    r.coverage[taus[t]] = below[t] / dn;
  }
  return r;
}

EvalReport evaluate(const std::vector<GridDistribution>& dists,
                    const Eigen::VectorXd& ys) {
  return evaluate(
      dists.size(), [&](std::size_t i) { return dists[i]; }, ys);
}

}  // namespace gpcal
