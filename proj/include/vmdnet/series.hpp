#pragma once

#include <cstdint>
#include <vector>

namespace vmdnet {

/// A univariate series in file order. Timestamps are seconds since the Unix
/// epoch (UTC); when empty, sample i is taken to be hour i.
struct Series {
  std::vector<double> values;
  std::vector<std::int64_t> timestamps;

  std::size_t size() const { return values.size(); }
  bool has_timestamps() const { return !timestamps.empty(); }
};

}  // namespace vmdnet
