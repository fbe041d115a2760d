#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace faithscan {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One AdamW update in place. The decay term lr * wd * param is applied to the
// pre-update parameter, separately from the bias-corrected adaptive step.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& config);

}  // namespace faithscan
