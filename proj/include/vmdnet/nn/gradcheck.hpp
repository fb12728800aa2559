#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "vmdnet/nn/tape.hpp"

namespace vmdnet::nn {

struct GradcheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "name[flat index]"
};

/// Builds a scalar loss on a fresh tape from the store's current values.
using LossFn = std::function<Var(Tape&)>;

/// Compares backprop gradients against central differences with step h.
/// Relative error is |a - n| / max(|a|, |n|, floor). With max_entries > 0 only
/// that many entries, drawn uniformly with the seed, are checked.
GradcheckReport gradcheck(ParamStore& store, const LossFn& loss, double h = 1e-4, std::size_t max_entries = 0,
                          std::uint64_t seed = 0, double floor = 1e-6);

}  // namespace vmdnet::nn
