#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "decra/tensor.hpp"

namespace decra::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences against recorded autodiff grads. The loss
// function must re-run the forward pass from the current parameter values.
// Grads on params must already be populated (call backward first).
inline GradCheckResult fd_compare(const std::vector<Tensor>& params,
                                  const std::function<double()>& loss_fn,
                                  double h = 1e-4) {
  GradCheckResult res;
  for (const Tensor& p : params) {
    auto& w = const_cast<Tensor&>(p).values();
    const auto& g = p.grad_view();
    for (std::size_t i = 0; i < w.size(); ++i) {
      double saved = w[i];
      w[i] = saved + h;
      double up = loss_fn();
      w[i] = saved - h;
      double down = loss_fn();
      w[i] = saved;
      double fd = (up - down) / (2.0 * h);
      double ad = g[i];
      double diff = std::abs(fd - ad);
      if (diff > 1e-6) {
        double rel = diff / std::max(std::abs(fd), std::abs(ad));
        res.max_rel_error = std::max(res.max_rel_error, rel);
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace decra::testing
