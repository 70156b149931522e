#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gpcal {

/// Thrown when a computation fails numerically (factorization breakdown,
/// non-finite objective, divergence). Distinct from std::invalid_argument,
/// which covers malformed inputs; the CLI maps the two to exit codes 2 and 1.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Lower bound applied to every predictive variance. Exact-fit base models
/// would otherwise emit zero-width densities.
inline constexpr double kVarianceFloor = 1e-12;

/// A Gaussian predictive distribution (mean, variance) for a single instance.
/// This is both what base regressors emit and what the calibrator consumes.
struct GaussianPrediction {
  double mu = 0.0;
  double var = 1.0;

  GaussianPrediction() = default;
  GaussianPrediction(double mu_, double var_);

  double std_dev() const { return std::sqrt(var); }
};

struct Dataset {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd targets;   // n

  Eigen::Index size() const { return targets.size(); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Throws std::invalid_argument unless n >= 2, rows agree, and all values
/// are finite.
void validate_dataset(const Dataset& ds);

/// A predictive distribution tabulated on a strictly increasing y-grid.
/// cdf is the cumulative trapezoid of pdf; see validate() for the exact
/// consistency requirements.
struct GridDistribution {
  Eigen::VectorXd ys;
  Eigen::VectorXd pdf;
  Eigen::VectorXd cdf;

  /// Throws std::invalid_argument if any structural invariant fails:
  /// strictly increasing grid, nonnegative pdf, nondecreasing cdf in [0,1],
  /// total mass within 1e-3 of 1, cdf[last] >= 1 - 1e-3, and per-cell
  /// pdf/cdf consistency within 1e-6.
  void validate() const;
};

/// Deterministic random stream: mt19937_64 drawn through fixed, documented
/// recipes (53-bit uniforms, Box-Muller normals) so that a given seed yields
/// the same sequence on every run. Single-owner; not safe to share across
/// threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller (cosine branch, two uniforms per draw).
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_below(std::size_t n);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_below(i)]);
    }
  }

 private:
  std::uint64_t next_u64();

  std::uint64_t seed_;
  std::mt19937_64 state_;
  std::uint64_t position_ = 0;
};

/// Equally spaced evaluation grid spanning
/// [min(mu) - pad * max(std), max(mu) + pad * max(std)] over `preds`,
/// endpoints included.
Eigen::VectorXd make_grid(const std::vector<GaussianPrediction>& preds,
                          int grid_size = 4096, double pad = 8.0);

/// Trapezoid quadrature of `vals` sampled at strictly increasing `ys`.
double trapezoid_integral(const Eigen::VectorXd& ys, const Eigen::VectorXd& vals);

/// Cumulative trapezoid; out[0] = 0.
Eigen::VectorXd cumulative_trapezoid(const Eigen::VectorXd& ys,
                                     const Eigen::VectorXd& vals);

/// Random disjoint split into (ceil(fraction * n), rest). The permutation is
/// drawn from `rng`.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             RngStream& rng);

/// Index-level variant of train_test_split for data that is not a Dataset
/// (e.g. externally supplied prediction streams).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, RngStream& rng);

// Gaussian density helpers shared across modules.
double gaussian_log_pdf(double y, const GaussianPrediction& p);
double gaussian_pdf(double y, const GaussianPrediction& p);
double gaussian_cdf(double y, const GaussianPrediction& p);
/// Upper-tail complement 1 - cdf, computed directly via erfc for accuracy.
double gaussian_cdf_complement(double y, const GaussianPrediction& p);

/// Tabulates the base Gaussian itself on a grid (pdf analytic, cdf by
/// cumulative trapezoid so the GridDistribution invariants hold exactly).
GridDistribution grid_distribution_from_gaussian(const GaussianPrediction& p,
                                                 const Eigen::VectorXd& ys);

}  // namespace gpcal
