#pragma once

#include "gpcal/core.hpp"

namespace gpcal {

/// Parameters of one Beta calibration map
///   c_beta(q) = logistic(a * ln q - b * ln(1 - q) + c).
/// a, b > 0 keeps the map monotone and the density ratio nonnegative;
/// (1, 1, 0) is the identity map.
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;

  BetaParams() = default;
  BetaParams(double a_, double b_, double c_);
};

/// Hyperparameters of the latent-to-parameter transform: gamma are inverse
/// scales (strictly positive), delta are offsets. Large gamma shrinks the
/// latent influence so the map collapses towards the delta-determined one.
struct LinkHyper {
  double gamma_a = 1.0, gamma_b = 1.0, gamma_c = 1.0;
  double delta_a = 0.0, delta_b = 0.0, delta_c = 0.0;

  void validate() const;
};

/// Values of the three latent functions at one input.
struct LatentTriple {
  double w_a = 0.0;
  double w_b = 0.0;
  double w_c = 0.0;
};

/// Quantiles are clamped into [kQuantileClamp, 1 - kQuantileClamp] before any
/// logarithm: the map is undefined at 0 and 1 and far-tail grid points land
/// there in floating point.
inline constexpr double kQuantileClamp = 1e-12;

/// Floor for calibrated log-densities, ln(1e-300). Keeps NLL sums finite.
inline constexpr double kLogDensityFloor = -690.77552789821368;

/// The Beta calibration map on quantiles. Monotone nondecreasing for a,b > 0.
double beta_map(double q, const BetaParams& p);

/// The link function r_beta(q) = d c_beta / d q: the density ratio between
/// the calibrated and the base PDF.
double beta_link_ratio(double q, const BetaParams& p);

/// ln r_beta evaluated from the quantile and its complement. Passing both
/// sides keeps the tails accurate when 1 - q underflows; callers that only
/// have q use beta_link_ratio.
double log_beta_link_ratio(double q, double qc, const BetaParams& p);

/// ln r_beta together with its partial derivatives in (a, b, c).
struct LinkRatioEval {
  double log_ratio;
  double d_a, d_b, d_c;
};
LinkRatioEval log_beta_link_ratio_with_partials(double q, double qc,
                                                const BetaParams& p);

/// a = exp(w_a / gamma_a + delta_a), b likewise, c = w_c / gamma_c + delta_c.
/// The exponentials keep a and b positive; w = 0 with unit gamma and zero
/// delta gives the identity map.
BetaParams link_params_from_latent(const LatentTriple& w, const LinkHyper& h);

/// BetaParams plus the Jacobian pieces needed when the latent values and the
/// link hyperparameters are being optimized: da_dw = da/dw_a etc., and the
/// derivatives with respect to log(gamma) (the unconstrained coordinate).
struct LinkParamsJac {
  BetaParams p;
  double da_dw, db_dw, dc_dw;
  double da_dlog_gamma, db_dlog_gamma, dc_dlog_gamma;
  double da_ddelta, db_ddelta, dc_ddelta;
};
LinkParamsJac link_params_from_latent_jac(const LatentTriple& w,
                                          const LinkHyper& h);

/// ln of the calibrated density at y: base Gaussian log-pdf plus ln r_beta at
/// the base quantile of y, floored at kLogDensityFloor.
double log_calibrated_density(double y, const GaussianPrediction& pred,
                              const BetaParams& p);

}  // namespace gpcal
