#pragma once

#include "gpcal/core.hpp"

#include <functional>
#include <map>

namespace gpcal {

/// The 19-quantile ladder 0.05, 0.10, ..., 0.95 used for pinball loss and
/// coverage.
std::vector<double> quantile_ladder();

struct EvalReport {
  double nll = 0.0;  // mean negative log-likelihood, nats
  double mse = 0.0;  // against the distribution's expected value
  double pbl = 0.0;  // mean pinball loss over the ladder
  std::map<double, double> coverage;  // ladder tau -> empirical frequency
};

/// Mean of -ln pdf(y) with the pdf linearly interpolated on the grid and
/// floored at 1e-300. Throws naming the instance if a target lies outside
/// its grid.
double nll(const std::vector<GridDistribution>& dists, const Eigen::VectorXd& ys);

/// Trapezoid integral of y * pdf(y).
double expected_value(const GridDistribution& d);

/// Smallest grid-interpolated y with CDF(y) >= tau.
double quantile_from_cdf(const GridDistribution& d, double tau);

/// (1 - tau)(g - y) for overestimates, tau (y - g) otherwise.
double pinball(double y, double g, double tau);

EvalReport evaluate(const std::vector<GridDistribution>& dists,
                    const Eigen::VectorXd& ys);

/// Streaming variant; `make_dist` is called once per instance in order, so
/// large evaluations never hold all grids in memory.
EvalReport evaluate(std::size_t n,
                    const std::function<GridDistribution(std::size_t)>& make_dist,
                    const Eigen::VectorXd& ys);

}  // namespace gpcal
