#include "groundlm/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace glm {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (!(state.lr > 0)) throw std::invalid_argument("adam: learning rate must be > 0");
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam: state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (state.m[i].shape() != p.value.shape()) {
      throw std::invalid_argument("adam: moment shape " + shape_str(state.m[i].shape()) +
                                  " does not match parameter " + p.name + " " +
                                  shape_str(p.value.shape()));
    }
    if (!p.grad.empty() && !p.grad.all_finite()) {
      throw std::domain_error("adam: non-finite gradient for parameter " + p.name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    auto w = p.value.values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    const bool has_grad = p.grad.size() == w.size();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = has_grad ? double(p.grad[j]) : 0.0;
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = Real(mj);
      v[j] = Real(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      w[j] = Real(double(w[j]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    if (p->trainable) p->zero_grad();
    else p->grad = Tensor();
  }
}

}  // namespace glm
