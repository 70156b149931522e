#pragma once

#include "gpcal/core.hpp"

namespace gpcal {

/// Synthetic one-dimensional benchmark: x uniform on [-10, 40], each point
/// assigned with probability 1/2 to y = 0.5 x + eps or y = eps, where eps is
/// zero-mean Gaussian with standard deviation sqrt(2).
Dataset gen_synthetic(int n, RngStream& rng);
inline constexpr int kSyntheticDefaultSize = 360;

/// CSV with a header row; every column but the last is a feature, the last
/// is the target. Comma separated, decimal points, UTF-8.
Dataset load_csv(const std::string& path);

/// CSV with header columns mu, var, y (any order): an externally produced
/// prediction stream plus targets. Rows with var <= 0 are rejected with a
/// line-numbered diagnostic.
std::pair<std::vector<GaussianPrediction>, Eigen::VectorXd> load_predictions_csv(
    const std::string& path);

void write_dataset_csv(const Dataset& ds, const std::string& path);
void write_predictions_csv(const std::vector<GaussianPrediction>& preds,
                           const Eigen::VectorXd& targets,
                           const std::string& path);

}  // namespace gpcal
