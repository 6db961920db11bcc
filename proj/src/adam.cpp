#include "decra/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace decra {

AdamState AdamState::init(const std::vector<Tensor>& params,
                          double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state does not match parameters");
  for (const Tensor& p : params)
    if (!p.has_grad())
      throw std::runtime_error("adam_step: parameter has no gradient");

  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].values();
    auto& g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size())
      throw std::invalid_argument("adam_step: moment length mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      w[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    params[i].zero_grad();
  }
}

}  // namespace decra
