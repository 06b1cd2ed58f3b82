#include "cacl/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cacl {

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamConfig& config) {
  if (grad.size() != param.size()) {
    throw std::invalid_argument("adam_step: gradient size " + std::to_string(grad.size()) +
                                " != parameter size " + std::to_string(param.size()));
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  } else if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grad[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(ParameterSet params, AdamConfig config)
    : params_(std::move(params)), config_(config), states_(params_.size()) {}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    TensorImpl* impl = params_[i].tensor.impl();
    if (impl->grad.empty()) {
      const std::vector<double> zeros(impl->value.size(), 0.0);
      adam_step(impl->value, zeros, states_[i], config_);
    } else {
      adam_step(impl->value, impl->grad, states_[i], config_);
    }
  }
}

}  // namespace cacl
