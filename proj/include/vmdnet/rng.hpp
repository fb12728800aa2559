#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vmdnet {

/// 64-bit mixing function (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Seed for a named sub-stream of a root seed, e.g. derive_seed(2021, "dropout").
/// Distinct names give statistically independent streams; the mapping is stable
/// across platforms.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; unlike
/// std::uniform_real_distribution the result is fixed by the standard engine.
double uniform01(Rng& rng);

/// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

}  // namespace vmdnet
