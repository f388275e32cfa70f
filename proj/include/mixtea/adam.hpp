#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixtea/tensor.hpp"

namespace mixtea {

struct AdamOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam moments for an ordered list of parameters.
struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamOptions opts, std::span<Tensor* const> params);
};

// Updates `params` in place from `grads`; shapes must agree pairwise with the state.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace mixtea
