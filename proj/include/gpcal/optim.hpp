#pragma once

#include "gpcal/core.hpp"

#include <functional>

namespace gpcal {

/// Adam state for one parameter vector. Step counter starts at 0; bias
/// correction uses the post-increment count.
struct AdamState {
  Eigen::VectorXd m;  // first moment
  Eigen::VectorXd v;  // second moment
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(Eigen::Index dim, double learning_rate_ = 1e-3)
      : m(Eigen::VectorXd::Zero(dim)),
        v(Eigen::VectorXd::Zero(dim)),
        learning_rate(learning_rate_) {}
};

/// One Adam descent step; mutates `state` and returns the updated parameters.
/// Throws NumericalError naming the offending indices if any gradient entry
/// is non-finite.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grads);

/// Central finite differences (f(x + h e_i) - f(x - h e_i)) / (2h). When
/// `scale_step` is set the per-coordinate step is h * max(1, |x_i|).
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-5,
                                 bool scale_step = true);

}  // namespace gpcal
