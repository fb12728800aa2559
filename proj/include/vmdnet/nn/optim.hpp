#pragma once

#include "vmdnet/nn/tensor.hpp"

namespace vmdnet::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter from its grad slot.
/// Gradients are left in place.
void adam_step(ParamStore& store, const AdamConfig& cfg);

}  // namespace vmdnet::nn
