#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmdnet/config.hpp"
#include "vmdnet/error.hpp"
#include "vmdnet/forecaster.hpp"
#include "vmdnet/search.hpp"
#include "vmdnet/series.hpp"
#include "vmdnet/windowing.hpp"

namespace vmdnet::pipeline {

/// Which split part ("train", "val", "test" or "series") each stage read.
struct AccessLog {
  struct Entry {
    std::string part;
    std::string stage;
  };
  std::vector<Entry> entries;

  /// Reads of `part`, optionally only those by `stage`.
  std::size_t count(std::string_view part, std::string_view stage = {}) const;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::optional<ErrorCode> error_code;
  std::string error;
  int num_modes = 0;  // 0 without decomposition
  double alpha = 0.0;
  std::size_t parameters = 0;
  /// Normalized scale.
  forecast::Metrics metrics;
  /// Units of the input file, when requested.
  std::optional<forecast::Metrics> original;
  forecast::TrainHistory history;
};

struct Aggregate {
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
};

/// Mean and sample standard deviation over the successful seeds (std 0 for a
/// single success).
Aggregate aggregate(std::span<const SeedOutcome> outcomes);

struct ExperimentResult {
  Variant variant = Variant::Full;
  std::vector<SeedOutcome> seeds;
  Aggregate aggregate;
};

/// One variant of a run configuration, stage by stage. Per-seed artifacts go
/// to <output_dir>/<variant>/seed_<seed>/, search results (shared by the
/// variants) to <output_dir>/search/seed_<seed>/ and window decompositions to
/// <output_dir>/cache/.
class Experiment {
 public:
  explicit Experiment(RunConfig cfg, Variant variant = Variant::Full, AccessLog* log = nullptr);

  const RunConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  std::filesystem::path search_dir(std::uint64_t seed) const;
  std::filesystem::path cache_dir() const;
  /// Model settings this variant trains with for a VMD configuration.
  forecast::ModelConfig model_config(const vmd::VmdConfig& vmd, std::uint64_t seed) const;

  /// Bilevel search on the training split, or the configured pair for fixed
  /// VMD settings. Writes search_trace.jsonl and search_summary.json.
  search::SearchResult search(std::uint64_t seed);
  /// The fixed settings, else a matching earlier search, else a new search.
  vmd::VmdConfig vmd_config(std::uint64_t seed);
  /// Decomposes the training and validation windows into the cache.
  void decompose(std::uint64_t seed);
  /// Trains on the training windows with early stopping on validation and
  /// writes model.ckpt and history.jsonl.
  forecast::TrainHistory train(std::uint64_t seed);
  /// Scores the checkpoint on every test window and writes metrics.json. The
  /// only stage that reads the test split.
  SeedOutcome evaluate(std::uint64_t seed);
  /// Forecast of the horizon after the last sample, in input units; writes
  /// forecast.csv.
  std::vector<double> predict(std::uint64_t seed);

  /// search, train and evaluate; a failing stage is recorded in the outcome.
  SeedOutcome run_seed(std::uint64_t seed);
  /// Every configured seed, then summary.json.
  ExperimentResult run();

 private:
  const Series& series();
  const windowing::Split& split();
  const Series& read(const std::string& part, const std::string& stage);
  windowing::WindowedDataset windows(const std::string& part, const std::string& stage);
  windowing::DecomposedDataset dataset(const windowing::WindowedDataset& windows, const vmd::VmdConfig& vmd);
  std::string search_key(std::uint64_t seed, bool fixed) const;
  double validation_score(const vmd::VmdConfig& vmd, std::uint64_t seed);
  bool uses_vmd() const { return variant_ != Variant::NoVmd; }

  RunConfig cfg_;
  Variant variant_;
  AccessLog* log_;
  std::optional<Series> series_;
  std::optional<windowing::Split> split_;
};

ExperimentResult run_experiment(const RunConfig& cfg, Variant variant = Variant::Full, AccessLog* log = nullptr);

struct AblationTable {
  std::vector<ExperimentResult> rows;

  /// One line per variant: per-seed test MSE, then mean and std of MSE and MAE.
  std::string to_text() const;
  std::string to_json() const;
};

/// Runs each variant with the configured seeds; writes ablation.txt and
/// ablation.json to the output directory.
AblationTable run_ablation(const RunConfig& cfg, std::span<const Variant> variants, AccessLog* log = nullptr);

}  // namespace vmdnet::pipeline
