#include "gpcal/optim.hpp"

#include <cmath>
#include <sstream>

namespace gpcal {

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: dimension mismatch");
  }
  if (!grads.allFinite()) {
    std::ostringstream msg;
    msg << "adam_step: non-finite gradient at indices";
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) msg << ' ' << i;
    }
    throw NumericalError(msg.str());
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v +
            (1.0 - state.beta2) * grads.array().square().matrix();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Eigen::VectorXd out = params;
  out.array() -= state.learning_rate * (state.m.array() / c1) /
                 ((state.v.array() / c2).sqrt() + state.epsilon);
  return out;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h,
                                 bool scale_step) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = scale_step ? h * std::max(1.0, std::abs(x[i])) : h;
    probe[i] = x[i] + hi;
    const double fp = f(probe);
    probe[i] = x[i] - hi;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * hi);
  }
  return g;
}

}  // namespace gpcal
