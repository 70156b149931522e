#pragma once

#include "gpcal/core.hpp"

namespace gpcal {

/// Per-column affine feature transform fit on the training split; statistics
/// travel with the model so prediction sees the same coordinates.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1 for constant columns

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Ordinary least squares with a homoscedastic noise estimate
/// RSS / (n - d - 1); every prediction carries that same variance.
struct OlsModel {
  Standardizer std_;
  Eigen::VectorXd weights;  // d + 1, intercept last
  double noise_var = kVarianceFloor;
};

OlsModel ols_fit(const Dataset& ds);
GaussianPrediction ols_predict(const OlsModel& m, const Eigen::VectorXd& x);

/// Bayesian ridge regression fit by iterating the evidence (type-II maximum
/// likelihood) updates for the weight and noise precisions.
struct BayesRidgeModel {
  Standardizer std_;
  Eigen::VectorXd weight_mean;  // d + 1, intercept last
  Eigen::MatrixXd weight_cov;
  double noise_precision = 1.0;
  double prior_precision = 1.0;
};

BayesRidgeModel bayes_ridge_fit(const Dataset& ds, int max_iter = 300,
                                double tol = 1e-6);
GaussianPrediction bayes_ridge_predict(const BayesRidgeModel& m,
                                       const Eigen::VectorXd& x);

std::vector<GaussianPrediction> ols_predict_all(const OlsModel& m,
                                                const Eigen::MatrixXd& x);
std::vector<GaussianPrediction> bayes_ridge_predict_all(const BayesRidgeModel& m,
                                                        const Eigen::MatrixXd& x);

}  // namespace gpcal
