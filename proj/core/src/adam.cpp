#include "meshsplat/adam.hpp"

#include "meshsplat/errors.hpp"

#include <cmath>

namespace meshsplat {

AdamState AdamState::make(std::size_t n, double lr_value) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr_value;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      state.m.size() != state.v.size()) {
    throw ParameterError("adam_step: parameter/gradient/state sizes disagree");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void adam_select_rows(AdamState& state, const std::vector<int>& keep, int stride) {
  std::vector<double> m, v;
  m.reserve(keep.size() * stride);
  v.reserve(keep.size() * stride);
  for (int row : keep) {
    for (int k = 0; k < stride; ++k) {
      m.push_back(state.m[static_cast<std::size_t>(row) * stride + k]);
      v.push_back(state.v[static_cast<std::size_t>(row) * stride + k]);
    }
  }
  state.m = std::move(m);
  state.v = std::move(v);
}

void adam_append_rows(AdamState& state, int added, int stride) {
  state.m.resize(state.m.size() + static_cast<std::size_t>(added) * stride, 0.0);
  state.v.resize(state.v.size() + static_cast<std::size_t>(added) * stride, 0.0);
}

}  // namespace meshsplat
