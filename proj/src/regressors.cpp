#include "gpcal/regressors.hpp"

#include <cmath>

namespace gpcal {

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var =
        (x.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(x.rows());
    const double sd = std::sqrt(var);
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) {
    throw std::invalid_argument("Standardizer: feature dimension mismatch");
  }
  return (x - mean).cwiseQuotient(scale);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw std::invalid_argument("Standardizer: feature dimension mismatch");
  }
  return (x.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

}  // namespace

OlsModel ols_fit(const Dataset& ds) {
  validate_dataset(ds);
  const Eigen::Index n = ds.size();
  const Eigen::Index d = ds.dim();
  if (n <= d + 1) {
    throw std::invalid_argument("ols_fit: need n > d + 1");
  }
  OlsModel m;
  m.std_ = Standardizer::fit(ds.features);
  const Eigen::MatrixXd phi = with_intercept(m.std_.apply(ds.features));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  if (qr.rank() < phi.cols()) {
    throw std::invalid_argument("ols_fit: rank-deficient design matrix");
  }
  m.weights = qr.solve(ds.targets);
  const double rss = (ds.targets - phi * m.weights).squaredNorm();
  m.noise_var = std::max(rss / static_cast<double>(n - d - 1), kVarianceFloor);
  return m;
}

GaussianPrediction ols_predict(const OlsModel& m, const Eigen::VectorXd& x) {
  const Eigen::VectorXd xs = m.std_.apply(x);
  double mu = m.weights[m.weights.size() - 1];
  mu += m.weights.head(xs.size()).dot(xs);
  return {mu, m.noise_var};
}

BayesRidgeModel bayes_ridge_fit(const Dataset& ds, int max_iter, double tol) {
  validate_dataset(ds);
  const Eigen::Index n = ds.size();
  if (n <= 2) throw std::invalid_argument("bayes_ridge_fit: need n > 2");

  BayesRidgeModel m;
  m.std_ = Standardizer::fit(ds.features);
  const Eigen::MatrixXd phi = with_intercept(m.std_.apply(ds.features));
  const Eigen::Index p = phi.cols();
  const Eigen::MatrixXd gram = phi.transpose() * phi;
  const Eigen::VectorXd phi_y = phi.transpose() * ds.targets;

  double alpha = 1e-2;  // prior precision
  double beta = 1e-2;   // noise precision
  Eigen::MatrixXd cov;
  Eigen::VectorXd mean;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd precision = beta * gram;
    precision.diagonal().array() += alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("bayes_ridge_fit: posterior precision not SPD");
    }
    cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
    mean = beta * (cov * phi_y);

    const double gamma_eff =
        static_cast<double>(p) - alpha * cov.trace();
    const double rss = (ds.targets - phi * mean).squaredNorm();
    const double alpha_new =
        std::max(gamma_eff, 1e-10) / std::max(mean.squaredNorm(), 1e-10);
    const double beta_new =
        std::min((static_cast<double>(n) - gamma_eff) / std::max(rss, 1e-12), 1e12);
    if (!std::isfinite(alpha_new) || !std::isfinite(beta_new) || beta_new <= 0.0 ||
        alpha_new <= 0.0) {
      throw NumericalError("bayes_ridge_fit: precision update diverged");
    }
    const double rel = std::abs(alpha_new - alpha) / alpha +
                       std::abs(beta_new - beta) / beta;
    alpha = alpha_new;
    beta = beta_new;
    if (rel < tol) break;
  }
  // Final posterior at the converged precisions.
  Eigen::MatrixXd precision = beta * gram;
  precision.diagonal().array() += alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("bayes_ridge_fit: posterior precision not SPD");
  }
  m.weight_cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  m.weight_mean = beta * (m.weight_cov * phi_y);
  m.noise_precision = beta;
  m.prior_precision = alpha;
  return m;
}

GaussianPrediction bayes_ridge_predict(const BayesRidgeModel& m,
                                       const Eigen::VectorXd& x) {
  const Eigen::VectorXd xs = m.std_.apply(x);
  Eigen::VectorXd aug(xs.size() + 1);
  aug.head(xs.size()) = xs;
  aug[xs.size()] = 1.0;
  const double mu = m.weight_mean.dot(aug);
  const double var = 1.0 / m.noise_precision + aug.dot(m.weight_cov * aug);
  return {mu, var};
}

std::vector<GaussianPrediction> ols_predict_all(const OlsModel& m,
                                                const Eigen::MatrixXd& x) {
  std::vector<GaussianPrediction> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.push_back(ols_predict(m, x.row(i).transpose()));
  }
  return out;
}

std::vector<GaussianPrediction> bayes_ridge_predict_all(const BayesRidgeModel& m,
                                                        const Eigen::MatrixXd& x) {
  std::vector<GaussianPrediction> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.push_back(bayes_ridge_predict(m, x.row(i).transpose()));
  }
  return out;
}

}  // namespace gpcal
