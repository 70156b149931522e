#pragma once

#include "gpcal/beta_link.hpp"
#include "gpcal/core.hpp"
#include "gpcal/kernel.hpp"

#include <iosfwd>

namespace gpcal {

/// All trainable state of the GP-driven Beta calibrator: inducing inputs in
/// prediction space, the variational Gaussian q(u) = N(m_u, L_u L_u^T) over
/// the 3m latent values at those inputs, the kernel bandwidth, the
/// coregionalization factor, and the link hyperparameters.
struct SvgpState {
  std::vector<GaussianPrediction> inducing;  // m pseudo inputs
  Eigen::VectorXd m_u;                       // 3m
  Eigen::MatrixXd L_u;                       // 3m x 3m lower triangular
  KernelParams kernel;
  CoregFactor coreg;
  LinkHyper link;

  int num_inducing() const { return static_cast<int>(inducing.size()); }
  void validate() const;
};

struct TrainConfig {
  int n_inducing = 32;
  int batch_size = 128;
  int mc_samples = 64;
  double learning_rate = 1e-3;
  int steps = 5000;
  std::uint64_t seed = 0;
  bool optimize_inducing = true;

  void validate() const;
};

/// Per-instance marginal of q(w): a 3-vector mean and 3x3 covariance over the
/// latent triple at that instance.
struct QwMarginal {
  Eigen::Vector3d m_w;
  Eigen::Matrix3d V_w;
};

/// Jitter added to each 3x3 latent covariance before its Cholesky.
inline constexpr double kLatentJitter = 1e-9;

/// Inducing inputs at quantile-spaced training means paired with the median
/// training variance; q(u) starts at the prior (KL = 0) and the link at the
/// identity map.
SvgpState init_state(const std::vector<GaussianPrediction>& train_preds,
                     const TrainConfig& cfg);

/// KL(q(u) || N(0, C_u)) with C_u rebuilt from the current kernel state.
double kl_term(const SvgpState& state);

std::vector<QwMarginal> q_w_marginal(const SvgpState& state,
                                     const std::vector<GaussianPrediction>& preds);

/// Monte-Carlo evidence lower bound on a minibatch:
///   (n_total / |batch|) * sum_i E_hat[ln p(y_i | w_i)] - KL.
/// The expectation reparameterizes w_i = m_wi + L_wi eps with eps drawn from
/// `rng`, so the value is deterministic given the stream state.
double elbo(const SvgpState& state,
            const std::vector<std::pair<GaussianPrediction, double>>& batch,
            std::size_t n_total, int mc_samples, RngStream& rng);

struct FitResult {
  SvgpState state;
  std::vector<std::pair<int, double>> trace;  // (step, ELBO estimate)
};

/// Adam ascent on the minibatch ELBO over all trainable state. Aborts with a
/// NumericalError naming the step if the objective or gradient goes
/// non-finite.
FitResult fit(const std::vector<GaussianPrediction>& train_preds,
              const Eigen::VectorXd& targets, const TrainConfig& cfg);

/// Calibrated predictive density on a grid: Monte-Carlo average over latent
/// draws of the Beta-link-adjusted base density; CDF by cumulative trapezoid.
GridDistribution predict_density(const SvgpState& state,
                                 const GaussianPrediction& pred,
                                 const Eigen::VectorXd& ys, int mc_samples,
                                 RngStream& rng);

/// Monte-Carlo mean calibration map at one input, evaluated on q_grid.
Eigen::VectorXd predict_calibration_map(const SvgpState& state,
                                        const GaussianPrediction& pred,
                                        const Eigen::VectorXd& q_grid,
                                        int mc_samples, RngStream& rng);

/// Version-tagged JSON serialization with exact numeric round-trip.
void save_state(const SvgpState& state, std::ostream& out);
SvgpState load_state(std::istream& in);
void save_state_file(const SvgpState& state, const std::string& path);
SvgpState load_state_file(const std::string& path);

namespace detail {

/// Packing of SvgpState into the unconstrained coordinates the optimizer
/// sees: raw m_u, L_u with log diagonal, log theta, L_B with log diagonal,
/// log gamma, raw delta, inducing means, log inducing variances.
struct PackLayout {
  int m = 0;
  int off_m_u = 0;
  int off_L_u = 0;
  int off_log_theta = 0;
  int off_L_B = 0;
  int off_log_gamma = 0;
  int off_delta = 0;
  int off_ind_mu = 0;
  int off_ind_logvar = 0;
  int total = 0;

  static PackLayout for_inducing(int m);
};

Eigen::VectorXd pack_state(const SvgpState& state);
SvgpState unpack_state(const Eigen::VectorXd& params, const PackLayout& layout);

/// ELBO and, when `grad` is non-null, its gradient in packed coordinates.
double elbo_with_grad(const SvgpState& state,
                      const std::vector<std::pair<GaussianPrediction, double>>& batch,
                      std::size_t n_total, int mc_samples, RngStream& rng,
                      Eigen::VectorXd* grad);

/// Reverse-mode derivative of a Cholesky factorization: given L = chol(S)
/// and dF/dL, returns the symmetric dF/dS.
Eigen::MatrixXd cholesky_reverse(const Eigen::MatrixXd& L,
                                 const Eigen::MatrixXd& L_bar);

}  // namespace detail

}  // namespace gpcal
