#include "gpcal/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gpcal {

void IsotonicMap::validate() const {
  if (knot_x.empty() || knot_x.size() != knot_y.size()) {
    throw std::invalid_argument("IsotonicMap: need matching nonempty knots");
  }
  for (std::size_t i = 0; i < knot_x.size(); ++i) {
    if (knot_x[i] < 0.0 || knot_x[i] > 1.0 || knot_y[i] < 0.0 || knot_y[i] > 1.0) {
      throw std::invalid_argument("IsotonicMap: knots outside [0,1]");
    }
    if (i > 0 && (knot_x[i] < knot_x[i - 1] || knot_y[i] < knot_y[i - 1])) {
      throw std::invalid_argument("IsotonicMap: knots not nondecreasing");
    }
  }
}

std::vector<double> empirical_frequencies(const std::vector<double>& taus) {
  if (taus.empty()) throw std::invalid_argument("empirical_frequencies: empty input");
  for (double t : taus) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw std::invalid_argument("empirical_frequencies: value outside [0,1]");
    }
  }
  const double n = static_cast<double>(taus.size());
  std::vector<double> out(taus.size());
  // Count via a sorted copy: #{j : tau_j <= tau_i} = upper_bound rank.
  std::vector<double> sorted = taus;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const auto rank =
        std::upper_bound(sorted.begin(), sorted.end(), taus[i]) - sorted.begin();
    out[i] = static_cast<double>(rank) / n;
  }
  return out;
}

IsotonicMap pav_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw std::invalid_argument("pav_fit: need matching nonempty inputs");
  }
  if (!std::is_sorted(xs.begin(), xs.end())) {
    throw std::invalid_argument("pav_fit: xs must be sorted ascending");
  }

  // Pool-adjacent-violators over blocks (sum, count, fitted value).
  struct Block {
    double sum;
    double count;
    std::size_t first;  // index of first element covered
          };
  std::vector<Block> stack;
  stack.reserve(xs.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    stack.push_back({ys[i], 1.0, i});
    while (stack.size() > 1) {
      auto& top = stack[stack.size() - 1];
      auto& prev = stack[stack.size() - 2];
      if (prev.sum / prev.count <= top.sum / top.count) break;
      prev.sum += top.sum;
      prev.count += top.count;
      stack.pop_back();
    }
  }

  std::vector<double> fitted(ys.size());
  for (std::size_t b = 0; b < stack.size(); ++b) {
    const std::size_t last = (b + 1 < stack.size()) ? stack[b + 1].first : ys.size();
    const double value = stack[b].sum / stack[b].count;
    for (std::size_t i = stack[b].first; i < last; ++i) fitted[i] = value;
  }

  IsotonicMap m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    // Merge duplicate x positions (keep the last fitted value, they pool to
    // the same block anyway) and collinear repeats.
    if (!m.knot_x.empty() && xs[i] == m.knot_x.back()) {
      m.knot_y.back() = fitted[i];
      continue;
    }
    m.knot_x.push_back(xs[i]);
    m.knot_y.push_back(fitted[i]);
  }
  return m;
}

namespace {

// Locates q's segment and returns the interpolated value and slope.
std::pair<double, double> interpolate(const IsotonicMap& m, double q) {
  const auto& kx = m.knot_x;
  const auto& ky = m.knot_y;
  if (q <= kx.front()) return {ky.front(), 0.0};
  if (q >= kx.back()) return {ky.back(), 0.0};
  const auto it = std::upper_bound(kx.begin(), kx.end(), q);
  const std::size_t hi = static_cast<std::size_t>(it - kx.begin());
  const std::size_t lo = hi - 1;
  const double dx = kx[hi] - kx[lo];
  if (dx <= 0.0) return {ky[hi], 0.0};
  const double slope = (ky[hi] - ky[lo]) / dx;
  return {ky[lo] + slope * (q - kx[lo]), slope};
}

}  // namespace

double apply_map(const IsotonicMap& m, double q) {
  m.validate();
  return std::clamp(interpolate(m, q).first, 0.0, 1.0);
}

double map_slope(const IsotonicMap& m, double q) {
  return interpolate(m, q).second;
}

IsotonicMap fit_quantile_recalibrator(const std::vector<GaussianPrediction>& preds,
                                      const Eigen::VectorXd& targets) {
  if (preds.size() != static_cast<std::size_t>(targets.size()) || preds.empty()) {
    throw std::invalid_argument("fit_quantile_recalibrator: size mismatch");
  }
  std::vector<double> taus(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    taus[i] = gaussian_cdf(targets[static_cast<Eigen::Index>(i)], preds[i]);
  }
  const std::vector<double> bars = empirical_frequencies(taus);
  std::vector<std::size_t> order(taus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return taus[a] < taus[b]; });
  std::vector<double> xs(taus.size()), ys(taus.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    xs[r] = taus[order[r]];
    ys[r] = bars[order[r]];
  }
  return pav_fit(xs, ys);
}

GridDistribution calibrate_distribution_iso(const IsotonicMap& m,
                                            const GaussianPrediction& pred,
                                            const Eigen::VectorXd& ys) {
  m.validate();
  GridDistribution d;
  d.ys = ys;
  d.pdf.resize(ys.size());
  for (Eigen::Index i = 0; i < ys.size(); ++i) {
    const double q = gaussian_cdf(ys[i], pred);
    d.pdf[i] = map_slope(m, q) * gaussian_pdf(ys[i], pred);
  }
  const double mass = trapezoid_integral(ys, d.pdf);
  if (!(mass > 0.0)) {
    throw NumericalError("calibrate_distribution_iso: zero total mass on grid");
  }
  d.pdf /= mass;
  d.cdf = cumulative_trapezoid(ys, d.pdf);
  return d;
}

}  // namespace gpcal
