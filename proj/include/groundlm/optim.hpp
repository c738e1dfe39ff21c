#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "groundlm/autograd.hpp"

namespace glm {

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected Adam update over the trainable parameters. Gradients are
// read from Parameter::grad (an empty grad counts as zero). Throws
// std::domain_error naming the parameter when a gradient is not finite.
void adam_step(std::span<Parameter* const> params, AdamState& state);

void zero_grads(std::span<Parameter* const> params);

}  // namespace glm
