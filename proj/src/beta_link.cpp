#include "gpcal/beta_link.hpp"

#include <algorithm>
#include <cmath>

namespace gpcal {

namespace {

double clamp_quantile(double q) {
  if (!std::isfinite(q)) {
    throw std::invalid_argument("beta link: non-finite quantile");
  }
  return std::clamp(q, kQuantileClamp, 1.0 - kQuantileClamp);
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sum_exp(double x, double y) {
  const double m = std::max(x, y);
  return m + std::log1p(std::exp(-std::abs(x - y)));
}

// Exponent guard for the latent-to-parameter map; keeps a and b finite when
// the optimizer wanders.
double safe_exp(double z) { return std::exp(std::clamp(z, -60.0, 60.0)); }

}  // namespace

BetaParams::BetaParams(double a_, double b_, double c_) : a(a_), b(b_), c(c_) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("BetaParams: need a > 0, b > 0, finite c");
  }
}

void LinkHyper::validate() const {
  if (!(gamma_a > 0.0 && gamma_b > 0.0 && gamma_c > 0.0)) {
    throw std::invalid_argument("LinkHyper: gammas must be strictly positive");
  }
  if (!std::isfinite(delta_a) || !std::isfinite(delta_b) || !std::isfinite(delta_c)) {
    throw std::invalid_argument("LinkHyper: non-finite delta");
  }
}

double beta_map(double q, const BetaParams& p) {
  const double qq = clamp_quantile(q);
  const double z = p.a * std::log(qq) - p.b * std::log1p(-qq) + p.c;
  return logistic(z);
}

double log_beta_link_ratio(double q, double qc, const BetaParams& p) {
  const double lnq = std::log(q);
  const double lnqc = std::log(qc);
  const double la = p.a * lnq;
  const double lb = p.b * lnqc - p.c;
  const double u = p.a * qc + p.b * q;  // = a - (a-b) q, positive for a,b > 0
  const double lse = log_sum_exp(la, lb);
  return la + lb + std::log(u) - lnq - lnqc - 2.0 * lse;
}

double beta_link_ratio(double q, const BetaParams& p) {
  const double qq = clamp_quantile(q);
  return std::exp(log_beta_link_ratio(qq, 1.0 - qq, p));
}

LinkRatioEval log_beta_link_ratio_with_partials(double q, double qc,
                                                const BetaParams& p) {
  const double lnq = std::log(q);
  const double lnqc = std::log(qc);
  const double la = p.a * lnq;
  const double lb = p.b * lnqc - p.c;
  const double u = p.a * qc + p.b * q;
  const double lse = log_sum_exp(la, lb);
  const double sa = std::exp(la - lse);
  const double sb = std::exp(lb - lse);
  LinkRatioEval out;
  out.log_ratio = la + lb + std::log(u) - lnq - lnqc - 2.0 * lse;
  out.d_a = lnq + qc / u - 2.0 * sa * lnq;
  out.d_b = lnqc + q / u - 2.0 * sb * lnqc;
  out.d_c = -1.0 + 2.0 * sb;
  return out;
}

BetaParams link_params_from_latent(const LatentTriple& w, const LinkHyper& h) {
  h.validate();
  BetaParams p;
  p.a = safe_exp(w.w_a / h.gamma_a + h.delta_a);
  p.b = safe_exp(w.w_b / h.gamma_b + h.delta_b);
  p.c = w.w_c / h.gamma_c + h.delta_c;
  return p;
}

LinkParamsJac link_params_from_latent_jac(const LatentTriple& w,
                                          const LinkHyper& h) {
  LinkParamsJac j;
  j.p = link_params_from_latent(w, h);
  j.da_dw = j.p.a / h.gamma_a;
  j.db_dw = j.p.b / h.gamma_b;
  j.dc_dw = 1.0 / h.gamma_c;
  j.da_dlog_gamma = -j.p.a * w.w_a / h.gamma_a;
  j.db_dlog_gamma = -j.p.b * w.w_b / h.gamma_b;
  j.dc_dlog_gamma = -w.w_c / h.gamma_c;
  j.da_ddelta = j.p.a;
  j.db_ddelta = j.p.b;
  j.dc_ddelta = 1.0;
  return j;
}

double log_calibrated_density(double y, const GaussianPrediction& pred,
                              const BetaParams& p) {
  if (!std::isfinite(y)) {
    throw std::invalid_argument("log_calibrated_density: non-finite y");
  }
  const double q = std::clamp(gaussian_cdf(y, pred), kQuantileClamp,
                              1.0 - kQuantileClamp);
  const double qc = std::clamp(gaussian_cdf_complement(y, pred), kQuantileClamp,
                               1.0 - kQuantileClamp);
  const double ll = gaussian_log_pdf(y, pred) + log_beta_link_ratio(q, qc, p);
  return std::max(ll, kLogDensityFloor);
}

}  // namespace gpcal
