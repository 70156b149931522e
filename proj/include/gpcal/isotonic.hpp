#pragma once

#include "gpcal/core.hpp"

namespace gpcal {

/// A monotone map on [0,1] stored as knots; evaluation interpolates linearly
/// between knots and extrapolates with the boundary values. A step map would
/// put zero density on its plateaus and blow up the NLL, so the fitted map is
/// read piecewise-linearly.
struct IsotonicMap {
  std::vector<double> knot_x;
  std::vector<double> knot_y;

  void validate() const;
};

/// Empirical frequencies tau_bar_i = (1/n) * #{j : tau_j <= tau_i}.
std::vector<double> empirical_frequencies(const std::vector<double>& taus);

/// Pool-adjacent-violators: least-squares-optimal nondecreasing fit of ys at
/// sorted xs. Knots at equal fitted values are merged.
IsotonicMap pav_fit(const std::vector<double>& xs, const std::vector<double>& ys);

double apply_map(const IsotonicMap& m, double q);

/// Derivative of the interpolated map at q (slope of the active segment;
/// zero outside the knot range).
double map_slope(const IsotonicMap& m, double q);

/// Fits the quantile recalibration map from training predictions and targets:
/// tau_i = base CDF at y_i, tau_bar from empirical frequencies, then PAV.
IsotonicMap fit_quantile_recalibrator(const std::vector<GaussianPrediction>& preds,
                                      const Eigen::VectorXd& targets);

/// Pushes the base Gaussian through the map: cdf via the composed map, pdf
/// via slope times base pdf, renormalized on the grid.
GridDistribution calibrate_distribution_iso(const IsotonicMap& m,
                                            const GaussianPrediction& pred,
                                            const Eigen::VectorXd& ys);

}  // namespace gpcal
