#pragma once

#include "gpcal/core.hpp"

namespace gpcal {

/// Bandwidth of the Gaussian mean-embedding kernel. theta > 0; the optimizer
/// works on log(theta).
struct KernelParams {
  double theta = 1.0;

  KernelParams() = default;
  explicit KernelParams(double theta_);
};

/// Cholesky factor of the 3x3 coregionalization matrix B coupling the three
/// latent outputs. Diagonal strictly positive so B = L_B * L_B^T is SPD.
struct CoregFactor {
  Eigen::Matrix3d L_B = Eigen::Matrix3d::Identity();

  Eigen::Matrix3d B() const { return L_B * L_B.transpose(); }
  void validate() const;
};

/// Closed-form RBF kernel between two Gaussian mean embeddings:
///   k = theta / sqrt(v1 + v2 + theta^2)
///       * exp(-(mu1 - mu2)^2 / (2 (v1 + v2 + theta^2))).
/// With v1 = v2 = 0 this is a unit-scale RBF in the means.
double kernel_eval_raw(double mu1, double v1, double mu2, double v2,
                       double theta);
double kernel_eval(const GaussianPrediction& p1, const GaussianPrediction& p2,
                   const KernelParams& kp);

/// Kernel value plus partial derivatives in every continuous argument.
/// d_v is the derivative with respect to either variance slot (they enter
/// symmetrically through the sum); d_mu1 = -d_mu2.
struct KernelDeriv {
  double k;
  double d_theta;
  double d_mu1;
  double d_v;
};
KernelDeriv kernel_eval_deriv(double mu1, double v1, double mu2, double v2,
                              double theta);

/// |A| x |B| kernel matrix; symmetric PSD when the lists coincide.
Eigen::MatrixXd kernel_matrix(const std::vector<GaussianPrediction>& a,
                              const std::vector<GaussianPrediction>& b,
                              const KernelParams& kp);

/// Kronecker expansion C = K (x) B in instance-major order: the latent vector
/// stacks per-instance triples, so block (i, j) of C is K(i,j) * B.
Eigen::MatrixXd kron_coreg(const Eigen::MatrixXd& k, const CoregFactor& cf);

/// Diagonal jitter added before any dense factorization of a kernel matrix.
inline constexpr double kKernelJitter = 1e-6;

}  // namespace gpcal
