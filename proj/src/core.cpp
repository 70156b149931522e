#include "gpcal/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gpcal {

GaussianPrediction::GaussianPrediction(double mu_, double var_) {
  if (!std::isfinite(mu_) || !std::isfinite(var_)) {
    throw std::invalid_argument("GaussianPrediction: non-finite mu or var");
  }
  mu = mu_;
  var = std::max(var_, kVarianceFloor);
}

void validate_dataset(const Dataset& ds) {
  if (ds.targets.size() < 2) {
    throw std::invalid_argument("Dataset: need at least 2 instances");
  }
  if (ds.features.rows() != ds.targets.size()) {
    throw std::invalid_argument("Dataset: feature/target row counts disagree");
  }
  if (!ds.features.allFinite() || !ds.targets.allFinite()) {
    throw std::invalid_argument("Dataset: non-finite values");
  }
}

void GridDistribution::validate() const {
  const Eigen::Index g = ys.size();
  if (g < 2 || pdf.size() != g || cdf.size() != g) {
    throw std::invalid_argument("GridDistribution: inconsistent lengths");
  }
  for (Eigen::Index i = 1; i < g; ++i) {
    if (!(ys[i] > ys[i - 1])) {
      throw std::invalid_argument("GridDistribution: grid not strictly increasing");
    }
    if (cdf[i] < cdf[i - 1]) {
      throw std::invalid_argument("GridDistribution: cdf decreases");
    }
  }
  if (pdf.minCoeff() < 0.0) {
    throw std::invalid_argument("GridDistribution: negative pdf");
  }
  if (cdf.minCoeff() < 0.0 || cdf.maxCoeff() > 1.0 + 1e-9) {
    throw std::invalid_argument("GridDistribution: cdf outside [0,1]");
  }
  if (cdf[g - 1] < 1.0 - 1e-3) {
    throw std::invalid_argument("GridDistribution: cdf does not reach 1");
  }
  const double mass = trapezoid_integral(ys, pdf);
  if (std::abs(mass - 1.0) > 1e-3) {
    throw std::invalid_argument("GridDistribution: pdf mass " +
                                std::to_string(mass) + " not within 1e-3 of 1");
  }
  double acc = 0.0;
  for (Eigen::Index i = 1; i < g; ++i) {
    acc += 0.5 * (pdf[i] + pdf[i - 1]) * (ys[i] - ys[i - 1]);
    if (std::abs(cdf[i] - cdf[i - 1] -
                 0.5 * (pdf[i] + pdf[i - 1]) * (ys[i] - ys[i - 1])) > 1e-6) {
      throw std::invalid_argument("GridDistribution: pdf/cdf inconsistent at cell " +
                                  std::to_string(i));
    }
  }
  (void)acc;
}

std::uint64_t RngStream::next_u64() { return state_(); }

double RngStream::uniform() {
  ++position_;
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  ++position_;
  // u1 in (0,1] so the log is finite; the sine partner is discarded to keep
  // one draw == two uniforms.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::uniform_below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  ++position_;
  // Multiply-shift; bias is < n / 2^64 and irrelevant next to determinism.
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(wide >> 64);
}

Eigen::VectorXd make_grid(const std::vector<GaussianPrediction>& preds,
                          int grid_size, double pad) {
  if (preds.empty()) throw std::invalid_argument("make_grid: no predictions");
  if (grid_size < 16) throw std::invalid_argument("make_grid: grid_size < 16");
  if (!(pad > 0.0)) throw std::invalid_argument("make_grid: pad must be positive");
  double mu_min = preds[0].mu, mu_max = preds[0].mu, sd_max = preds[0].std_dev();
  for (const auto& p : preds) {
    mu_min = std::min(mu_min, p.mu);
    mu_max = std::max(mu_max, p.mu);
    sd_max = std::max(sd_max, p.std_dev());
  }
  const double lo = mu_min - pad * sd_max;
  const double hi = mu_max + pad * sd_max;
  return Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
}

double trapezoid_integral(const Eigen::VectorXd& ys, const Eigen::VectorXd& vals) {
  if (ys.size() != vals.size()) {
    throw std::invalid_argument("trapezoid_integral: length mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 1; i < ys.size(); ++i) {
    if (!(ys[i] > ys[i - 1])) {
      throw std::invalid_argument("trapezoid_integral: ys not strictly increasing");
    }
    acc += 0.5 * (vals[i] + vals[i - 1]) * (ys[i] - ys[i - 1]);
  }
  return acc;
}

Eigen::VectorXd cumulative_trapezoid(const Eigen::VectorXd& ys,
                                     const Eigen::VectorXd& vals) {
  if (ys.size() != vals.size()) {
    throw std::invalid_argument("cumulative_trapezoid: length mismatch");
  }
  Eigen::VectorXd out(ys.size());
  if (ys.size() == 0) return out;
  out[0] = 0.0;
  for (Eigen::Index i = 1; i < ys.size(); ++i) {
    out[i] = out[i - 1] + 0.5 * (vals[i] + vals[i - 1]) * (ys[i] - ys[i - 1]);
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, RngStream& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split: fraction must be in (0,1)");
  }
  const auto n_first =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (n_first == 0 || n_first >= n) {
    throw std::invalid_argument("split: degenerate split leaves one side empty");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<std::size_t> first(idx.begin(), idx.begin() + n_first);
  std::vector<std::size_t> second(idx.begin() + n_first, idx.end());
  return {std::move(first), std::move(second)};
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             RngStream& rng) {
  validate_dataset(ds);
  auto [ia, ib] = split_indices(static_cast<std::size_t>(ds.size()), fraction, rng);
  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
    out.targets.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) =
          ds.features.row(static_cast<Eigen::Index>(idx[r]));
      out.targets[static_cast<Eigen::Index>(r)] =
          ds.targets[static_cast<Eigen::Index>(idx[r])];
    }
    return out;
  };
  return {take(ia), take(ib)};
}

double gaussian_log_pdf(double y, const GaussianPrediction& p) {
  const double z2 = (y - p.mu) * (y - p.mu) / p.var;
  return -0.5 * std::log(2.0 * std::numbers::pi * p.var) - 0.5 * z2;
}

double gaussian_pdf(double y, const GaussianPrediction& p) {
  return std::exp(gaussian_log_pdf(y, p));
}

double gaussian_cdf(double y, const GaussianPrediction& p) {
  const double z = (y - p.mu) / p.std_dev();
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double gaussian_cdf_complement(double y, const GaussianPrediction& p) {
  const double z = (y - p.mu) / p.std_dev();
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

GridDistribution grid_distribution_from_gaussian(const GaussianPrediction& p,
                                                 const Eigen::VectorXd& ys) {
  GridDistribution d;
  d.ys = ys;
  d.pdf.resize(ys.size());
  for (Eigen::Index i = 0; i < ys.size(); ++i) d.pdf[i] = gaussian_pdf(ys[i], p);
  d.cdf = cumulative_trapezoid(ys, d.pdf);
  return d;
}

}  // namespace gpcal
