#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vmdnet/series.hpp"
#include "vmdnet/vmd.hpp"

namespace vmdnet::windowing {

/// Hour-of-day and day-of-week as sin/cos pairs.
inline constexpr std::size_t kTimeFeatures = 4;

struct WindowSpec {
  std::size_t lookback = 336;
  std::size_t horizon = 96;
  std::size_t stride = 1;

  void validate() const;
};

/// Number of windows for a series of length T: floor((T - P - F) / s) + 1.
std::size_t window_count(std::size_t series_length, const WindowSpec& spec);

struct WindowedDataset {
  WindowSpec spec;
  /// B x P, row b = series[t_b - P + 1 .. t_b] (1-based, inclusive).
  std::vector<double> inputs;
  /// B x F, row b = series[t_b + 1 .. t_b + F].
  std::vector<double> targets;
  /// t_b = P + (b - 1) s, 1-based.
  std::vector<std::size_t> endpoints;
  /// B x kTimeFeatures x P, calendar features of the input positions.
  std::vector<double> time_features;

  std::size_t size() const { return endpoints.size(); }
  std::span<const double> input(std::size_t b) const {
    return {inputs.data() + b * spec.lookback, spec.lookback};
  }
  std::span<const double> target(std::size_t b) const {
    return {targets.data() + b * spec.horizon, spec.horizon};
  }
};

/// Throws SeriesTooShort when T < P + F.
WindowedDataset make_windows(const Series& series, const WindowSpec& spec);

/// Calendar features for one timestamp (seconds since epoch, UTC).
std::array<double, kTimeFeatures> calendar_features(std::int64_t timestamp);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

struct Split {
  Series train;
  Series val;
  Series test;
  NormStats stats;
};

/// Chronological split followed by z-scoring all three parts with the
/// training mean and (population) standard deviation. Part lengths are
/// round(T f_train), round(T f_val) and the remainder.
/// Throws InvalidConfig for bad fractions, DegenerateSplit when a part is
/// shorter than min_part_length, NonFiniteNormalization when std = 0.
Split split_and_normalize(const Series& series, std::array<double, 3> fractions,
                          std::size_t min_part_length);

std::vector<double> denormalize(std::span<const double> values, const NormStats& stats);

struct DecomposedDataset {
  std::size_t batch = 0;
  std::size_t modes = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  /// B x K x P
  std::vector<double> U;
  /// B x K, each row ascending.
  std::vector<double> omega;
  /// B x F
  std::vector<double> targets;
  /// B x kTimeFeatures x P
  std::vector<double> time_features;
  std::vector<std::size_t> endpoints;
  vmd::VmdConfig vmd;
  NormStats norm;
  /// Per-window relative reconstruction error.
  std::vector<double> reconstruction_error;

  std::span<const double> modes_of(std::size_t b) const {
    return {U.data() + b * modes * lookback, modes * lookback};
  }
  std::span<const double> omega_of(std::size_t b) const { return {omega.data() + b * modes, modes}; }
  std::span<const double> target(std::size_t b) const {
    return {targets.data() + b * horizon, horizon};
  }
  std::span<const double> time_features_of(std::size_t b) const {
    return {time_features.data() + b * kTimeFeatures * lookback, kTimeFeatures * lookback};
  }
};

/// Decomposes every input window independently with `cfg` using up to
/// `workers` threads. Output is independent of `workers`. A failing window
/// is reported with its index.
DecomposedDataset decompose_windows(const WindowedDataset& ds, const vmd::VmdConfig& cfg,
                                    unsigned workers = 1);

/// The raw window as a single "mode" with zero frequency; the input of the
/// no-decomposition ablation.
DecomposedDataset raw_dataset(const WindowedDataset& ds);

// Binary cache, little-endian:
//   0  char[8]  magic "VMDNCACH"
//   8  u32      version (1)
//   12 u32      reserved (0)
//   16 u64      B
//   24 u64      K
//   32 u64      P
//   40 u64      F
//   48 f64      alpha
//   56 u64      CRC-32 of the payload bytes (zero-extended)
//   64 f64[B*K*P] U, then f64[B*K] Omega, then f64[B*F] Y, all row-major.
inline constexpr std::uint32_t kCacheVersion = 1;

struct CacheHeader {
  std::uint64_t batch = 0;
  std::uint64_t modes = 0;
  std::uint64_t lookback = 0;
  std::uint64_t horizon = 0;
  double alpha = 0.0;
  std::uint64_t checksum = 0;
};

void write_cache(const std::filesystem::path& path, const DecomposedDataset& ds);

/// Reads U, Omega and Y into `ds`; the remaining fields are left untouched.
/// Throws CacheCorrupt on a bad magic, version, checksum or size.
CacheHeader read_cache(const std::filesystem::path& path, DecomposedDataset& ds);

/// Loads the cache at `path` if it matches `ds`'s windows and `cfg`, otherwise
/// decomposes and writes it. Returns true on a cache hit.
bool load_or_decompose(const std::filesystem::path& path, const WindowedDataset& ds,
                       const vmd::VmdConfig& cfg, unsigned workers, DecomposedDataset& out);

/// Stable cache file name for (windows, vmd config).
std::string cache_key(const WindowedDataset& ds, const vmd::VmdConfig& cfg);

}  // namespace vmdnet::windowing
