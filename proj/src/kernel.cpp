#include "gpcal/kernel.hpp"

#include <cmath>

namespace gpcal {

KernelParams::KernelParams(double theta_) : theta(theta_) {
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw std::invalid_argument("KernelParams: theta must be a positive real");
  }
}

void CoregFactor::validate() const {
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (L_B(i, j) != 0.0) {
        throw std::invalid_argument("CoregFactor: L_B must be lower triangular");
      }
    }
    if (!(L_B(i, i) > 0.0)) {
      throw std::invalid_argument("CoregFactor: L_B diagonal must be positive");
    }
  }
}

double kernel_eval_raw(double mu1, double v1, double mu2, double v2,
                       double theta) {
  const double t = v1 + v2 + theta * theta;
  const double d = mu1 - mu2;
  return theta / std::sqrt(t) * std::exp(-d * d / (2.0 * t));
}

double kernel_eval(const GaussianPrediction& p1, const GaussianPrediction& p2,
                   const KernelParams& kp) {
  return kernel_eval_raw(p1.mu, p1.var, p2.mu, p2.var, kp.theta);
}

KernelDeriv kernel_eval_deriv(double mu1, double v1, double mu2, double v2,
                              double theta) {
  const double t = v1 + v2 + theta * theta;
  const double d = mu1 - mu2;
  const double e = std::exp(-d * d / (2.0 * t));
  const double k = theta / std::sqrt(t) * e;
  KernelDeriv out;
  out.k = k;
  // dk/dT with T = v1 + v2 + theta^2; both variance slots share it.
  out.d_v = 0.5 * (k / t) * (d * d / t - 1.0);
  out.d_mu1 = -k * d / t;
  out.d_theta = k / theta + 2.0 * theta * out.d_v;
  return out;
}

Eigen::MatrixXd kernel_matrix(const std::vector<GaussianPrediction>& a,
                              const std::vector<GaussianPrediction>& b,
                              const KernelParams& kp) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("kernel_matrix: empty prediction list");
  }
  Eigen::MatrixXd k(a.size(), b.size());
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      k(i, j) = kernel_eval(a[static_cast<std::size_t>(i)],
                            b[static_cast<std::size_t>(j)], kp);
    }
  }
  return k;
}

Eigen::MatrixXd kron_coreg(const Eigen::MatrixXd& k, const CoregFactor& cf) {
  const Eigen::Matrix3d b = cf.B();
  Eigen::MatrixXd c(3 * k.rows(), 3 * k.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      c.block<3, 3>(3 * i, 3 * j) = k(i, j) * b;
    }
  }
  return c;
}

}  // namespace gpcal
