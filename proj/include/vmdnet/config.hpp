#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vmdnet/forecaster.hpp"
#include "vmdnet/search.hpp"
#include "vmdnet/vmd.hpp"
#include "vmdnet/windowing.hpp"

namespace vmdnet::pipeline {

enum class Variant { Full, NoVmd, NoFreq, NoParallel, FixedParams };

std::string_view to_string(Variant v);
/// "full", "no_vmd", "no_freq", "no_parallel" or "fixed_params"; InvalidConfig otherwise.
Variant parse_variant(std::string_view name);

struct RunConfig {
  std::string data_path;
  std::string timestamp_column = "timestamp";
  std::string value_column = "value";
  std::array<double, 3> split{0.7, 0.1, 0.2};

  /// Stride applies to training windows and val_stride to validation windows;
  /// every test window is scored.
  windowing::WindowSpec window;
  std::size_t val_stride = 1;

  /// With auto_vmd the bilevel search picks num_modes and alpha; the other
  /// VMD settings are used as given.
  bool auto_vmd = true;
  vmd::VmdConfig vmd;

  search::SearchSpace search_space;
  search::SearchConfig search;
  /// The search sees the last search_max_length training samples (0 = all).
  std::size_t search_max_length = 0;
  /// Score each candidate pair by the validation MSE of a short training run.
  bool search_validate = false;
  int search_validation_epochs = 2;

  /// num_modes, lookback, horizon, variant flags and rng_seed are set per run.
  forecast::ModelConfig model;
  forecast::TrainConfig train;

  /// The pair used by the fixed_params variant.
  int fixed_k = 4;
  double fixed_alpha = 2000.0;

  std::vector<std::uint64_t> seeds{2021, 2022, 2023, 2024, 2025};
  std::string output_dir = "runs";
  unsigned workers = 1;
  /// Also report metrics in the units of the input file.
  bool original_units = false;

  void validate() const;
};

/// Parses a JSON document, then applies "dotted.key=value" overrides (the
/// value is read as JSON when possible, otherwise as a string). Unknown keys
/// and wrong types throw InvalidConfig naming the key.
RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Inverse of parse_config.
std::string to_json(const RunConfig& cfg);

}  // namespace vmdnet::pipeline
