#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vmdnet::selfcheck {

struct GradcheckRow {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst;

  bool ok() const { return max_rel_error <= tolerance; }
};

/// Finite-difference checks of every differentiable op on random inputs
/// (tolerance 1e-4), then of a tiny end-to-end model on 50 random parameter
/// entries (tolerance 1e-3).
std::vector<GradcheckRow> gradient_suite(std::uint64_t seed = 0);

}  // namespace vmdnet::selfcheck
