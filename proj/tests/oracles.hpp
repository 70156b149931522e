// Test-side oracles, independent of the library code paths they check.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracles {

inline double rel_err(double got, double want, double floor = 1e-8) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

/// Exact isotonic least squares via the minimax characterization
/// f_i = max_{j<=i} min_{k>=i} mean(y_j..y_k). Independent of PAV.
inline std::vector<double> isotonic_minimax(const std::vector<double>& ys) {
  const std::size_t n = ys.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + ys[i];
  auto mean = [&](std::size_t j, std::size_t k) {  // inclusive
    return (prefix[k + 1] - prefix[j]) / static_cast<double>(k - j + 1);
  };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j <= i; ++j) {
      double inner = 1e300;
      for (std::size_t k = i; k < n; ++k) inner = std::min(inner, mean(j, k));
      best = std::max(best, inner);
    }
    out[i] = best;
  }
  return out;
}

/// Standard normal CDF through erf (closed form used as quadrature oracle).
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double sup_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace oracles
