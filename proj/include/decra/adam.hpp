#pragma once

#include <cstdint>
#include <vector>

#include "decra/tensor.hpp"

namespace decra {

// Bias-corrected Adam over a fixed list of parameter tensors.
struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments

  static AdamState init(const std::vector<Tensor>& params,
                        double learning_rate);
};

// Applies one Adam update to every parameter, then clears their grads.
// A parameter with no populated grad is a contract violation.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace decra
