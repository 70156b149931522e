#include "gpcal/svgp.hpp"

#include "gpcal/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace gpcal {

void TrainConfig::validate() const {
  if (n_inducing < 1 || batch_size < 1 || mc_samples < 1 || steps < 1 ||
      !(learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: all fields must be positive");
  }
}

void SvgpState::validate() const {
  const int m = num_inducing();
  if (m < 1) throw std::invalid_argument("SvgpState: need at least one inducing point");
  if (m_u.size() != 3 * m || L_u.rows() != 3 * m || L_u.cols() != 3 * m) {
    throw std::invalid_argument("SvgpState: variational parameter sizes disagree");
  }
  for (Eigen::Index i = 0; i < L_u.rows(); ++i) {
    if (!(L_u(i, i) > 0.0)) {
      throw std::invalid_argument("SvgpState: L_u diagonal must be positive");
    }
    for (Eigen::Index j = i + 1; j < L_u.cols(); ++j) {
      if (L_u(i, j) != 0.0) {
        throw std::invalid_argument("SvgpState: L_u must be lower triangular");
      }
    }
  }
  if (!(kernel.theta > 0.0)) {
    throw std::invalid_argument("SvgpState: kernel bandwidth must be positive");
  }
  coreg.validate();
  link.validate();
}

namespace {

struct PriorFactors {
  Eigen::MatrixXd k_uu;  // m x m
  Eigen::MatrixXd c_u;   // 3m x 3m, jittered
  Eigen::LLT<Eigen::MatrixXd> llt;
};

PriorFactors build_prior(const SvgpState& state) {
  PriorFactors pf;
  pf.k_uu = kernel_matrix(state.inducing, state.inducing, state.kernel);
  pf.c_u = kron_coreg(pf.k_uu, state.coreg);
  pf.c_u.diagonal().array() += kKernelJitter;
  pf.llt.compute(pf.c_u);
  if (pf.llt.info() != Eigen::Success) {
    throw NumericalError("svgp: inducing covariance not positive definite");
  }
  return pf;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

// Base-distribution quantities of one (y, prediction) pair that the link
// evaluation needs.
struct InstanceEval {
  double log_s;
  double q, qc;
  double lnq, lnqc;
};

InstanceEval eval_instance(double y, const GaussianPrediction& pred) {
  InstanceEval e;
  e.log_s = gaussian_log_pdf(y, pred);
  e.q = std::clamp(gaussian_cdf(y, pred), kQuantileClamp, 1.0 - kQuantileClamp);
  e.qc = std::clamp(gaussian_cdf_complement(y, pred), kQuantileClamp,
                    1.0 - kQuantileClamp);
  e.lnq = std::log(e.q);
  e.lnqc = std::log(e.qc);
  return e;
}

Eigen::Matrix3d chol3_with_jitter(const Eigen::Matrix3d& v) {
  Eigen::Matrix3d vj = v;
  vj.diagonal().array() += kLatentJitter;
  Eigen::LLT<Eigen::Matrix3d> llt(vj);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("svgp: latent covariance not positive definite after jitter");
  }
  return llt.matrixL();
}

double median_variance(const std::vector<GaussianPrediction>& preds) {
  std::vector<double> vars(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) vars[i] = preds[i].var;
  std::sort(vars.begin(), vars.end());
  const std::size_t n = vars.size();
  return n % 2 == 1 ? vars[n / 2] : 0.5 * (vars[n / 2 - 1] + vars[n / 2]);
}

}  // namespace

SvgpState init_state(const std::vector<GaussianPrediction>& train_preds,
                     const TrainConfig& cfg) {
  cfg.validate();
  const int m = cfg.n_inducing;
  if (static_cast<int>(train_preds.size()) < m) {
    throw std::invalid_argument(
        "init_state: fewer training predictions than inducing points");
  }

  std::vector<double> mus(train_preds.size());
  for (std::size_t i = 0; i < train_preds.size(); ++i) mus[i] = train_preds[i].mu;
  std::sort(mus.begin(), mus.end());
  const double med_var = median_variance(train_preds);

  SvgpState s;
  s.inducing.reserve(static_cast<std::size_t>(m));
  const auto n = static_cast<double>(mus.size());
  for (int j = 0; j < m; ++j) {
    // Empirical quantile at level (j + 0.5) / m, linearly interpolated.
    const double pos = (static_cast<double>(j) + 0.5) / static_cast<double>(m) * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, mus.size() - 1);
    const double t = pos - std::floor(pos);
    s.inducing.emplace_back(mus[lo] + t * (mus[hi] - mus[lo]), med_var);
  }

  const double mean_mu = std::accumulate(mus.begin(), mus.end(), 0.0) / n;
  double var_mu = 0.0;
  for (double mu : mus) var_mu += (mu - mean_mu) * (mu - mean_mu);
  var_mu /= n;
  s.kernel.theta = std::max(std::sqrt(var_mu), 1e-3);

  s.coreg.L_B = Eigen::Matrix3d::Identity();
  s.link = LinkHyper{};
  s.m_u = Eigen::VectorXd::Zero(3 * m);

  const PriorFactors pf = build_prior(s);
  s.L_u = Eigen::MatrixXd(pf.llt.matrixL());
  return s;
}

double kl_term(const SvgpState& state) {
  state.validate();
  const PriorFactors pf = build_prior(state);
  const Eigen::Index d = state.m_u.size();
  const Eigen::MatrixXd v_u = state.L_u * state.L_u.transpose();
  const Eigen::VectorXd alpha = pf.llt.solve(state.m_u);
  const double quad = state.m_u.dot(alpha);
  const double trace = pf.llt.solve(v_u).trace();
  const double log_det_c = log_det_from_llt(pf.llt);
  const double log_det_v = 2.0 * state.L_u.diagonal().array().log().sum();
  return 0.5 * (trace + quad - static_cast<double>(d) + log_det_c - log_det_v);
}

namespace {

// Stacked cross-covariance block between `preds` and the inducing set:
// rows 3i..3i+2 hold kron(kappa_i, B).
Eigen::MatrixXd stack_cross_cov(const Eigen::MatrixXd& kappa,
                                const Eigen::Matrix3d& b) {
  Eigen::MatrixXd kw(3 * kappa.rows(), 3 * kappa.cols());
  for (Eigen::Index i = 0; i < kappa.rows(); ++i) {
    for (Eigen::Index j = 0; j < kappa.cols(); ++j) {
      kw.block<3, 3>(3 * i, 3 * j) = kappa(i, j) * b;
    }
  }
  return kw;
}

}  // namespace

std::vector<QwMarginal> q_w_marginal(const SvgpState& state,
                                     const std::vector<GaussianPrediction>& preds) {
  state.validate();
  if (preds.empty()) throw std::invalid_argument("q_w_marginal: no query points");
  const PriorFactors pf = build_prior(state);
  const Eigen::Matrix3d b = state.coreg.B();
  const Eigen::MatrixXd kappa = kernel_matrix(preds, state.inducing, state.kernel);
  const Eigen::MatrixXd kw = stack_cross_cov(kappa, b);
  const Eigen::MatrixXd a = pf.llt.solve(kw.transpose()).transpose();
  const Eigen::MatrixXd v_u = state.L_u * state.L_u.transpose();
  const Eigen::MatrixXd m = v_u - pf.c_u;
  const Eigen::MatrixXd p = a * m;
  const Eigen::VectorXd m_w = a * state.m_u;

  std::vector<QwMarginal> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(3 * i);
    const double kd = kernel_eval(preds[i], preds[i], state.kernel);
    out[i].m_w = m_w.segment<3>(r);
    out[i].V_w = kd * b + p.middleRows<3>(r) * a.middleRows<3>(r).transpose();
  }
  return out;
}

namespace detail {

PackLayout PackLayout::for_inducing(int m) {
  PackLayout l;
  l.m = m;
  const int d = 3 * m;
  int off = 0;
  l.off_m_u = off;
  off += d;
  l.off_L_u = off;
  off += d * (d + 1) / 2;
  l.off_log_theta = off;
  off += 1;
  l.off_L_B = off;
  off += 6;
  l.off_log_gamma = off;
  off += 3;
  l.off_delta = off;
  off += 3;
  l.off_ind_mu = off;
  off += m;
  l.off_ind_logvar = off;
  off += m;
  l.total = off;
  return l;
}

Eigen::VectorXd pack_state(const SvgpState& state) {
  state.validate();
  const int m = state.num_inducing();
  const PackLayout l = PackLayout::for_inducing(m);
  Eigen::VectorXd p(l.total);
  p.segment(l.off_m_u, 3 * m) = state.m_u;
  int idx = l.off_L_u;
  for (Eigen::Index i = 0; i < 3 * m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      p[idx++] = (i == j) ? std::log(state.L_u(i, i)) : state.L_u(i, j);
    }
  }
  p[l.off_log_theta] = std::log(state.kernel.theta);
  idx = l.off_L_B;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      p[idx++] = (i == j) ? std::log(state.coreg.L_B(i, i)) : state.coreg.L_B(i, j);
    }
  }
  p[l.off_log_gamma + 0] = std::log(state.link.gamma_a);
  p[l.off_log_gamma + 1] = std::log(state.link.gamma_b);
  p[l.off_log_gamma + 2] = std::log(state.link.gamma_c);
  p[l.off_delta + 0] = state.link.delta_a;
  p[l.off_delta + 1] = state.link.delta_b;
  p[l.off_delta + 2] = state.link.delta_c;
  for (int j = 0; j < m; ++j) {
    p[l.off_ind_mu + j] = state.inducing[static_cast<std::size_t>(j)].mu;
    p[l.off_ind_logvar + j] =
        std::log(state.inducing[static_cast<std::size_t>(j)].var);
  }
  return p;
}

SvgpState unpack_state(const Eigen::VectorXd& params, const PackLayout& l) {
  if (params.size() != l.total) {
    throw std::invalid_argument("unpack_state: parameter vector size mismatch");
  }
  const int m = l.m;
  SvgpState s;
  s.m_u = params.segment(l.off_m_u, 3 * m);
  s.L_u = Eigen::MatrixXd::Zero(3 * m, 3 * m);
  int idx = l.off_L_u;
  for (Eigen::Index i = 0; i < 3 * m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      s.L_u(i, j) = (i == j) ? std::exp(params[idx]) : params[idx];
      ++idx;
    }
  }
  s.kernel.theta = std::exp(params[l.off_log_theta]);
  s.coreg.L_B.setZero();
  idx = l.off_L_B;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      s.coreg.L_B(i, j) = (i == j) ? std::exp(params[idx]) : params[idx];
      ++idx;
    }
  }
  s.link.gamma_a = std::exp(params[l.off_log_gamma + 0]);
  s.link.gamma_b = std::exp(params[l.off_log_gamma + 1]);
  s.link.gamma_c = std::exp(params[l.off_log_gamma + 2]);
  s.link.delta_a = params[l.off_delta + 0];
  s.link.delta_b = params[l.off_delta + 1];
  s.link.delta_c = params[l.off_delta + 2];
  s.inducing.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    // Guard against variance over/underflow in unconstrained coordinates.
    const double lv = std::clamp(params[l.off_ind_logvar + j],
                                 std::log(kVarianceFloor), 40.0);
    s.inducing.emplace_back(params[l.off_ind_mu + j], std::exp(lv));
  }
  return s;
}

Eigen::MatrixXd cholesky_reverse(const Eigen::MatrixXd& L,
                                 const Eigen::MatrixXd& L_bar) {
  const Eigen::MatrixXd full = L.transpose() * L_bar;
  Eigen::MatrixXd p = full.triangularView<Eigen::Lower>();
  p.diagonal() *= 0.5;
  const Eigen::MatrixXd r = p + p.transpose();
  const Eigen::MatrixXd z =
      L.transpose().triangularView<Eigen::Upper>().solve(r);
  const Eigen::MatrixXd w =
      L.transpose().triangularView<Eigen::Upper>().solve(z.transpose());
  return 0.5 * w.transpose();
}

double elbo_with_grad(const SvgpState& state,
                      const std::vector<std::pair<GaussianPrediction, double>>& batch,
                      std::size_t n_total, int mc_samples, RngStream& rng,
                      Eigen::VectorXd* grad) {
  state.validate();
  if (batch.empty()) throw std::invalid_argument("elbo: empty batch");
  if (mc_samples < 1) throw std::invalid_argument("elbo: mc_samples must be >= 1");
  if (n_total < batch.size()) {
    throw std::invalid_argument("elbo: n_total smaller than the batch");
  }

  const int m = state.num_inducing();
  const int d = 3 * m;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Matrix3d b_mat = state.coreg.B();
  const bool want_grad = grad != nullptr;

  // ---- forward: prior, variational covariance, marginals -------------------
  const PriorFactors pf = build_prior(state);
  const Eigen::MatrixXd v_u = state.L_u * state.L_u.transpose();
  const Eigen::MatrixXd m_mat = v_u - pf.c_u;

  std::vector<GaussianPrediction> preds(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) preds[i] = batch[i].first;
  const Eigen::MatrixXd kappa = kernel_matrix(preds, state.inducing, state.kernel);
  const Eigen::MatrixXd kw = stack_cross_cov(kappa, b_mat);
  const Eigen::MatrixXd a = pf.llt.solve(kw.transpose()).transpose();
  const Eigen::VectorXd m_w = a * state.m_u;
  const Eigen::MatrixXd p_mat = a * m_mat;

  Eigen::VectorXd kd(n);
  std::vector<Eigen::Matrix3d> l_w(batch.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    kd[i] = kernel_eval(preds[static_cast<std::size_t>(i)],
                        preds[static_cast<std::size_t>(i)], state.kernel);
    const Eigen::Matrix3d v_w =
        kd[i] * b_mat +
        p_mat.middleRows<3>(3 * i) * a.middleRows<3>(3 * i).transpose();
    l_w[static_cast<std::size_t>(i)] = chol3_with_jitter(v_w);
  }

  // ---- forward + backward: Monte-Carlo likelihood ---------------------------
  const double scale = static_cast<double>(n_total) / static_cast<double>(n);
  const double w_sample = scale / static_cast<double>(mc_samples);

  Eigen::VectorXd g_mw = Eigen::VectorXd::Zero(want_grad ? 3 * n : 0);
  std::vector<Eigen::Matrix3d> v_w_bar(
      want_grad ? batch.size() : 0, Eigen::Matrix3d::Zero());
  Eigen::Vector3d g_log_gamma = Eigen::Vector3d::Zero();
  Eigen::Vector3d g_delta = Eigen::Vector3d::Zero();

  double lik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const InstanceEval ev = eval_instance(batch[ui].second, preds[ui]);
    const Eigen::Vector3d mw_i = m_w.segment<3>(3 * i);
    Eigen::Matrix3d lw_bar = Eigen::Matrix3d::Zero();
    double acc = 0.0;
    for (int s = 0; s < mc_samples; ++s) {
      Eigen::Vector3d eps;
      eps << rng.normal(), rng.normal(), rng.normal();
      const Eigen::Vector3d w = mw_i + l_w[ui] * eps;
      const LinkParamsJac j =
          link_params_from_latent_jac({w[0], w[1], w[2]}, state.link);
      const LinkRatioEval lr =
          log_beta_link_ratio_with_partials(ev.q, ev.qc, j.p);
      const double ll = ev.log_s + lr.log_ratio;
      if (ll < kLogDensityFloor) {
        acc += kLogDensityFloor;
        continue;  // flat region: no gradient
      }
      acc += ll;
      if (!want_grad) continue;
      const Eigen::Vector3d gw(lr.d_a * j.da_dw, lr.d_b * j.db_dw,
                               lr.d_c * j.dc_dw);
      g_mw.segment<3>(3 * i) += w_sample * gw;
      lw_bar += w_sample * gw * eps.transpose();
      g_delta += w_sample * Eigen::Vector3d(lr.d_a * j.da_ddelta,
                                            lr.d_b * j.db_ddelta,
                                            lr.d_c * j.dc_ddelta);
      g_log_gamma += w_sample * Eigen::Vector3d(lr.d_a * j.da_dlog_gamma,
                                                lr.d_b * j.db_dlog_gamma,
                                                lr.d_c * j.dc_dlog_gamma);
    }
    lik += acc / static_cast<double>(mc_samples);
    if (want_grad) {
      const Eigen::Matrix3d lw_bar_tril = lw_bar.triangularView<Eigen::Lower>();
      v_w_bar[ui] = cholesky_reverse(l_w[ui], lw_bar_tril);
    }
  }
  lik *= scale;

  // ---- KL term --------------------------------------------------------------
  const Eigen::VectorXd alpha = pf.llt.solve(state.m_u);
  const double quad = state.m_u.dot(alpha);
  const Eigen::MatrixXd c_inv_v = pf.llt.solve(v_u);
  const double log_det_c = log_det_from_llt(pf.llt);
  const double log_det_v = 2.0 * state.L_u.diagonal().array().log().sum();
  const double kl = 0.5 * (c_inv_v.trace() + quad - static_cast<double>(d) +
                           log_det_c - log_det_v);

  const double value = lik - kl;
  if (!want_grad) return value;

  // ---- backward: latent covariances into matrix-level adjoints --------------
  Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(3 * n, d);
  Eigen::MatrixXd p_bar = Eigen::MatrixXd::Zero(3 * n, d);
  Eigen::MatrixXd b_bar = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd kd_bar = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Eigen::Matrix3d& vb = v_w_bar[ui];
    kd_bar[i] = vb.cwiseProduct(b_mat).sum();
    b_bar += kd[i] * vb;
    p_bar.middleRows<3>(3 * i) = vb * a.middleRows<3>(3 * i);
    a_bar.middleRows<3>(3 * i) = vb * p_mat.middleRows<3>(3 * i);
  }

  // P = A * M
  a_bar += p_bar * m_mat;
  Eigen::MatrixXd m_bar = a.transpose() * p_bar;
  Eigen::MatrixXd v_u_bar = m_bar;
  Eigen::MatrixXd c_u_bar = -m_bar;

  // m_w = A * m_u
  a_bar += g_mw * state.m_u.transpose();
  Eigen::VectorXd m_u_bar = a.transpose() * g_mw;

  // A = Kw * C_u^{-1}
  const Eigen::MatrixXd kw_bar = pf.llt.solve(a_bar.transpose()).transpose();
  c_u_bar -= a.transpose() * kw_bar;

  // Kw blocks = kappa(i,j) * B
  Eigen::MatrixXd kappa_bar(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const Eigen::Matrix3d blk = kw_bar.block<3, 3>(3 * i, 3 * j);
      kappa_bar(i, j) = blk.cwiseProduct(b_mat).sum();
      b_bar += kappa(i, j) * blk;
    }
  }

  // KL gradients (subtracted: ELBO = lik - KL).
  const Eigen::MatrixXd c_inv =
      pf.llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd l_u_inv =
      state.L_u.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd v_inv = l_u_inv.transpose() * l_u_inv;
  m_u_bar -= alpha;
  v_u_bar -= 0.5 * (c_inv - v_inv);
  c_u_bar -= 0.5 * (c_inv - c_inv_v * c_inv - alpha * alpha.transpose());

  // V_u = L_u * L_u^T
  const Eigen::MatrixXd l_u_bar_full =
      (v_u_bar + v_u_bar.transpose()) * state.L_u;

  // C_u = kron(K_uu, B) + jitter.
  Eigen::MatrixXd k_uu_bar(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const Eigen::Matrix3d blk = c_u_bar.block<3, 3>(3 * r, 3 * c);
      k_uu_bar(r, c) = blk.cwiseProduct(b_mat).sum();
      b_bar += pf.k_uu(r, c) * blk;
    }
  }

  // Kernel entries -> theta and inducing locations.
  double theta_bar = 0.0;
  Eigen::VectorXd ind_mu_bar = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd ind_v_bar = Eigen::VectorXd::Zero(m);
  const double theta = state.kernel.theta;
  for (int r = 0; r < m; ++r) {
    const auto& zr = state.inducing[static_cast<std::size_t>(r)];
    for (int c = 0; c < m; ++c) {
      const auto& zc = state.inducing[static_cast<std::size_t>(c)];
      const KernelDeriv kdv = kernel_eval_deriv(zr.mu, zr.var, zc.mu, zc.var, theta);
      const double g = k_uu_bar(r, c);
      theta_bar += g * kdv.d_theta;
      ind_mu_bar[r] += g * kdv.d_mu1;
      ind_mu_bar[c] -= g * kdv.d_mu1;
      ind_v_bar[r] += g * kdv.d_v;
      ind_v_bar[c] += g * kdv.d_v;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& xi = preds[static_cast<std::size_t>(i)];
    for (int j = 0; j < m; ++j) {
      const auto& zj = state.inducing[static_cast<std::size_t>(j)];
      const KernelDeriv kdv = kernel_eval_deriv(xi.mu, xi.var, zj.mu, zj.var, theta);
      const double g = kappa_bar(i, j);
      theta_bar += g * kdv.d_theta;
      ind_mu_bar[j] -= g * kdv.d_mu1;
      ind_v_bar[j] += g * kdv.d_v;
    }
    const KernelDeriv kdv = kernel_eval_deriv(xi.mu, xi.var, xi.mu, xi.var, theta);
    theta_bar += kd_bar[i] * kdv.d_theta;
  }

  // B = L_B * L_B^T
  const Eigen::Matrix3d l_b_bar_full =
      (b_bar + b_bar.transpose()) * state.coreg.L_B;

  // ---- pack the gradient in unconstrained coordinates ------------------------
  const PackLayout l = PackLayout::for_inducing(m);
  grad->setZero(l.total);
  grad->segment(l.off_m_u, d) = m_u_bar;
  int idx = l.off_L_u;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      (*grad)[idx++] = (i == j) ? l_u_bar_full(i, i) * state.L_u(i, i)
                                : l_u_bar_full(i, j);
    }
  }
  (*grad)[l.off_log_theta] = theta_bar * theta;
  idx = l.off_L_B;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      (*grad)[idx++] = (i == j) ? l_b_bar_full(i, i) * state.coreg.L_B(i, i)
                                : l_b_bar_full(i, j);
    }
  }
  grad->segment<3>(l.off_log_gamma) = g_log_gamma;
  grad->segment<3>(l.off_delta) = g_delta;
  for (int j = 0; j < m; ++j) {
    (*grad)[l.off_ind_mu + j] = ind_mu_bar[j];
    (*grad)[l.off_ind_logvar + j] =
        ind_v_bar[j] * state.inducing[static_cast<std::size_t>(j)].var;
  }
  return value;
}

}  // namespace detail

double elbo(const SvgpState& state,
            const std::vector<std::pair<GaussianPrediction, double>>& batch,
            std::size_t n_total, int mc_samples, RngStream& rng) {
  return detail::elbo_with_grad(state, batch, n_total, mc_samples, rng, nullptr);
}

FitResult fit(const std::vector<GaussianPrediction>& train_preds,
              const Eigen::VectorXd& targets, const TrainConfig& cfg) {
  cfg.validate();
  if (train_preds.size() != static_cast<std::size_t>(targets.size())) {
    throw std::invalid_argument("fit: prediction/target lengths disagree");
  }
  const std::size_t n = train_preds.size();
  const auto batch_size = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.batch_size), n);

  SvgpState state = init_state(train_preds, cfg);
  const detail::PackLayout layout =
      detail::PackLayout::for_inducing(state.num_inducing());
  Eigen::VectorXd params = detail::pack_state(state);
  AdamState adam(params.size(), cfg.learning_rate);
  RngStream rng(cfg.seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // force a shuffle on the first step

  FitResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.steps));
  Eigen::VectorXd grad;
  std::vector<std::pair<GaussianPrediction, double>> batch(batch_size);
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + batch_size > n) {
      rng.shuffle(order);
      cursor = 0;
    }
    for (std::size_t k = 0; k < batch_size; ++k) {
      const std::size_t row = order[cursor + k];
      batch[k] = {train_preds[row], targets[static_cast<Eigen::Index>(row)]};
    }
    cursor += batch_size;

    state = detail::unpack_state(params, layout);
    const double value =
        detail::elbo_with_grad(state, batch, n, cfg.mc_samples, rng, &grad);
    if (!std::isfinite(value) || !grad.allFinite()) {
      throw NumericalError("fit: non-finite ELBO or gradient at step " +
                           std::to_string(step));
    }
    result.trace.emplace_back(step, value);
    if (!cfg.optimize_inducing) {
      grad.segment(layout.off_ind_mu, layout.m).setZero();
      grad.segment(layout.off_ind_logvar, layout.m).setZero();
    }
    params = adam_step(adam, params, -grad);  // ascent
  }
  result.state = detail::unpack_state(params, layout);
  return result;
}

GridDistribution predict_density(const SvgpState& state,
                                 const GaussianPrediction& pred,
                                 const Eigen::VectorXd& ys, int mc_samples,
                                 RngStream& rng) {
  state.validate();
  if (ys.size() < 2) throw std::invalid_argument("predict_density: grid too small");
  if (mc_samples < 1) {
    throw std::invalid_argument("predict_density: mc_samples must be >= 1");
  }
  const double sd = pred.std_dev();
  if (ys[0] > pred.mu - 8.0 * sd || ys[ys.size() - 1] < pred.mu + 8.0 * sd) {
    std::cerr << "gpcal warning: grid does not cover +-8 std of the prediction; "
                 "normalization may fail\n";
  }

  const QwMarginal marg = q_w_marginal(state, {pred})[0];
  const Eigen::Matrix3d l_w = chol3_with_jitter(marg.V_w);

  const Eigen::Index g = ys.size();
  std::vector<InstanceEval> evs(static_cast<std::size_t>(g));
  for (Eigen::Index k = 0; k < g; ++k) {
    evs[static_cast<std::size_t>(k)] = eval_instance(ys[k], pred);
  }

  GridDistribution d;
  d.ys = ys;
  d.pdf = Eigen::VectorXd::Zero(g);
  for (int s = 0; s < mc_samples; ++s) {
    Eigen::Vector3d eps;
    eps << rng.normal(), rng.normal(), rng.normal();
    const Eigen::Vector3d w = marg.m_w + l_w * eps;
    const BetaParams p = link_params_from_latent({w[0], w[1], w[2]}, state.link);
    for (Eigen::Index k = 0; k < g; ++k) {
      const auto& ev = evs[static_cast<std::size_t>(k)];
      const double ll =
          std::max(ev.log_s + log_beta_link_ratio(ev.q, ev.qc, p),
                   kLogDensityFloor);
      d.pdf[k] += std::exp(ll);
    }
  }
  d.pdf /= static_cast<double>(mc_samples);
  const double total = trapezoid_integral(ys, d.pdf);
  if (total > 1.0) {
    d.pdf /= total;
  } else if (total < 1.0 - 1e-3) {
    std::cerr << "gpcal warning: calibrated density integrates to " << total
              << " on the supplied grid\n";
  }
  d.cdf = cumulative_trapezoid(ys, d.pdf);
  return d;
}

Eigen::VectorXd predict_calibration_map(const SvgpState& state,
                                        const GaussianPrediction& pred,
                                        const Eigen::VectorXd& q_grid,
                                        int mc_samples, RngStream& rng) {
  state.validate();
  if (mc_samples < 1) {
    throw std::invalid_argument("predict_calibration_map: mc_samples must be >= 1");
  }
  for (Eigen::Index k = 0; k < q_grid.size(); ++k) {
    if (!(q_grid[k] > 0.0 && q_grid[k] < 1.0)) {
      throw std::invalid_argument("predict_calibration_map: q_grid outside (0,1)");
    }
  }
  const QwMarginal marg = q_w_marginal(state, {pred})[0];
  const Eigen::Matrix3d l_w = chol3_with_jitter(marg.V_w);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q_grid.size());
  for (int s = 0; s < mc_samples; ++s) {
    Eigen::Vector3d eps;
    eps << rng.normal(), rng.normal(), rng.normal();
    const Eigen::Vector3d w = marg.m_w + l_w * eps;
    const BetaParams p = link_params_from_latent({w[0], w[1], w[2]}, state.link);
    for (Eigen::Index k = 0; k < q_grid.size(); ++k) {
      out[k] += beta_map(q_grid[k], p);
    }
  }
  return out / static_cast<double>(mc_samples);
}

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

void save_state(const SvgpState& state, std::ostream& out) {
  state.validate();
  const int m = state.num_inducing();
  nlohmann::json j;
  j["format"] = "gpcal-svgp-state";
  j["version"] = 1;
  Eigen::VectorXd ind_mu(m), ind_var(m);
  for (int i = 0; i < m; ++i) {
    ind_mu[i] = state.inducing[static_cast<std::size_t>(i)].mu;
    ind_var[i] = state.inducing[static_cast<std::size_t>(i)].var;
  }
  j["inducing_mu"] = vector_to_json(ind_mu);
  j["inducing_var"] = vector_to_json(ind_var);
  j["m_u"] = vector_to_json(state.m_u);
  nlohmann::json lu = nlohmann::json::array();
  for (Eigen::Index i = 0; i < state.L_u.rows(); ++i) {
    for (Eigen::Index c = 0; c <= i; ++c) lu.push_back(state.L_u(i, c));
  }
  j["L_u_tril"] = lu;
  j["theta"] = state.kernel.theta;
  nlohmann::json lb = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c <= i; ++c) lb.push_back(state.coreg.L_B(i, c));
  }
  j["L_B_tril"] = lb;
  j["gamma"] = {state.link.gamma_a, state.link.gamma_b, state.link.gamma_c};
  j["delta"] = {state.link.delta_a, state.link.delta_b, state.link.delta_c};
  out << j.dump(2) << '\n';
}

SvgpState load_state(std::istream& in) {
  nlohmann::json j;
  in >> j;
  if (!j.contains("format") || j["format"] != "gpcal-svgp-state") {
    throw std::invalid_argument("load_state: not a gpcal-svgp-state file");
  }
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw std::invalid_argument("load_state: unsupported version");
  }
  const Eigen::VectorXd ind_mu = vector_from_json(j.at("inducing_mu"));
  const Eigen::VectorXd ind_var = vector_from_json(j.at("inducing_var"));
  if (ind_mu.size() != ind_var.size() || ind_mu.size() == 0) {
    throw std::invalid_argument("load_state: malformed inducing arrays");
  }
  const int m = static_cast<int>(ind_mu.size());
  SvgpState s;
  for (int i = 0; i < m; ++i) s.inducing.emplace_back(ind_mu[i], ind_var[i]);
  s.m_u = vector_from_json(j.at("m_u"));
  const auto& lu = j.at("L_u_tril");
  const int d = 3 * m;
  if (static_cast<int>(lu.size()) != d * (d + 1) / 2) {
    throw std::invalid_argument("load_state: malformed L_u");
  }
  s.L_u = Eigen::MatrixXd::Zero(d, d);
  std::size_t idx = 0;
  for (int i = 0; i < d; ++i) {
    for (int c = 0; c <= i; ++c) s.L_u(i, c) = lu[idx++].get<double>();
  }
  s.kernel.theta = j.at("theta").get<double>();
  const auto& lb = j.at("L_B_tril");
  if (lb.size() != 6) throw std::invalid_argument("load_state: malformed L_B");
  s.coreg.L_B.setZero();
  idx = 0;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c <= i; ++c) s.coreg.L_B(i, c) = lb[idx++].get<double>();
  }
  s.link.gamma_a = j.at("gamma")[0].get<double>();
  s.link.gamma_b = j.at("gamma")[1].get<double>();
  s.link.gamma_c = j.at("gamma")[2].get<double>();
  s.link.delta_a = j.at("delta")[0].get<double>();
  s.link.delta_b = j.at("delta")[1].get<double>();
  s.link.delta_c = j.at("delta")[2].get<double>();
  s.validate();
  return s;
}

void save_state_file(const SvgpState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_state_file: cannot open " + path);
  save_state(state, out);
}

SvgpState load_state_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_state_file: cannot open " + path);
  return load_state(in);
}

}  // namespace gpcal
