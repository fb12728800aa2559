#include "vmdnet/windowing.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <thread>

#include "vmdnet/error.hpp"

namespace vmdnet::windowing {

void WindowSpec::validate() const {
  if (lookback < 1) fail(ErrorCode::InvalidConfig, "lookback must be >= 1");
  if (horizon < 1) fail(ErrorCode::InvalidConfig, "horizon must be >= 1");
  if (stride < 1) fail(ErrorCode::InvalidConfig, "stride must be >= 1");
}

std::size_t window_count(std::size_t series_length, const WindowSpec& spec) {
  const std::size_t span = spec.lookback + spec.horizon;
  if (series_length < span) return 0;
  return (series_length - span) / spec.stride + 1;
}

std::array<double, kTimeFeatures> calendar_features(std::int64_t timestamp) {
  constexpr std::int64_t kDay = 86400;
  constexpr std::int64_t kWeek = 7 * kDay;
  // 1970-01-01 was a Thursday; shift so that Monday 00:00 is phase zero.
  constexpr std::int64_t kMondayOffset = 3 * kDay;
  auto mod = [](std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; };
  const double day_phase = static_cast<double>(mod(timestamp, kDay)) / kDay;
  const double week_phase = static_cast<double>(mod(timestamp + kMondayOffset, kWeek)) / kWeek;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return {std::sin(two_pi * day_phase), std::cos(two_pi * day_phase),
          std::sin(two_pi * week_phase), std::cos(two_pi * week_phase)};
}

WindowedDataset make_windows(const Series& series, const WindowSpec& spec) {
  spec.validate();
  const std::size_t n = series.size();
  if (n < spec.lookback + spec.horizon) {
    fail(ErrorCode::SeriesTooShort, "series of length " + std::to_string(n) +
                                        " is shorter than lookback + horizon = " +
                                        std::to_string(spec.lookback + spec.horizon));
  }
  if (series.has_timestamps() && series.timestamps.size() != n)
    fail(ErrorCode::ShapeMismatch, "timestamps and values differ in length");

  const std::size_t count = window_count(n, spec);
  const std::size_t p = spec.lookback;
  const std::size_t f = spec.horizon;
  WindowedDataset ds;
  ds.spec = spec;
  ds.inputs.resize(count * p);
  ds.targets.resize(count * f);
  ds.endpoints.resize(count);
  ds.time_features.resize(count * kTimeFeatures * p);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t end = p + b * spec.stride;  // 1-based t_b
    ds.endpoints[b] = end;
    const std::size_t first = end - p;  // 0-based index of the first input sample
    for (std::size_t i = 0; i < p; ++i) ds.inputs[b * p + i] = series.values[first + i];
    for (std::size_t i = 0; i < f; ++i) ds.targets[b * f + i] = series.values[end + i];
    double* tf = ds.time_features.data() + b * kTimeFeatures * p;
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t idx = first + i;
      const std::int64_t ts = series.has_timestamps() ? series.timestamps[idx]
                                                      : static_cast<std::int64_t>(idx) * 3600;
      const auto feats = calendar_features(ts);
      for (std::size_t c = 0; c < kTimeFeatures; ++c) tf[c * p + i] = feats[c];
    }
  }
  return ds;
}

Split split_and_normalize(const Series& series, std::array<double, 3> fractions,
                          std::size_t min_part_length) {
  double total = 0.0;
  for (double fr : fractions) {
    if (!(fr > 0.0)) fail(ErrorCode::InvalidConfig, "split fractions must be positive");
    total += fr;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::InvalidConfig, "split fractions must sum to 1");

  const std::size_t n = series.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[0]));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
  if (n_train + n_val > n) fail(ErrorCode::DegenerateSplit, "split fractions leave no test data");
  const std::size_t n_test = n - n_train - n_val;
  for (auto [name, len] : {std::pair{"train", n_train}, {"validation", n_val}, {"test", n_test}}) {
    if (len < min_part_length) {
      fail(ErrorCode::DegenerateSplit, std::string(name) + " split has " + std::to_string(len) +
                                           " samples, fewer than lookback + horizon = " +
                                           std::to_string(min_part_length));
    }
  }

  double mean = 0.0;
  for (std::size_t i = 0; i < n_train; ++i) mean += series.values[i];
  mean /= static_cast<double>(n_train);
  double var = 0.0;
  for (std::size_t i = 0; i < n_train; ++i) var += (series.values[i] - mean) * (series.values[i] - mean);
  const double sd = std::sqrt(var / static_cast<double>(n_train));
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean))
    fail(ErrorCode::NonFiniteNormalization, "training split has zero or non-finite standard deviation");

  Split out;
  out.stats = {mean, sd};
  auto part = [&](std::size_t begin, std::size_t len) {
    Series s;
    s.values.resize(len);
    s.timestamps.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      s.values[i] = (series.values[begin + i] - mean) / sd;
      s.timestamps[i] = series.has_timestamps() ? series.timestamps[begin + i]
                                                : static_cast<std::int64_t>(begin + i) * 3600;
    }
    return s;
  };
  out.train = part(0, n_train);
  out.val = part(n_train, n_val);
  out.test = part(n_train + n_val, n_test);
  return out;
}

std::vector<double> denormalize(std::span<const double> values, const NormStats& stats) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.std + stats.mean;
  return out;
}

namespace {

DecomposedDataset shell(const WindowedDataset& ds, std::size_t modes) {
  DecomposedDataset out;
  out.batch = ds.size();
  out.modes = modes;
  out.lookback = ds.spec.lookback;
  out.horizon = ds.spec.horizon;
  out.U.assign(out.batch * modes * out.lookback, 0.0);
  out.omega.assign(out.batch * modes, 0.0);
  out.targets = ds.targets;
  out.time_features = ds.time_features;
  out.endpoints = ds.endpoints;
  out.reconstruction_error.assign(out.batch, 0.0);
  return out;
}

}  // namespace

DecomposedDataset decompose_windows(const WindowedDataset& ds, const vmd::VmdConfig& cfg,
                                    unsigned workers) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.num_modes);
  DecomposedDataset out = shell(ds, k);
  out.vmd = cfg;
  const std::size_t p = ds.spec.lookback;
  const std::size_t count = ds.size();

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> first_failure{count};
  std::vector<std::optional<Error>> errors(count);

  auto work = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= count || b > first_failure.load()) return;
      try {
        const auto r = vmd::decompose(ds.input(b), cfg);
        std::copy(r.modes.begin(), r.modes.end(), out.U.begin() + static_cast<std::ptrdiff_t>(b * k * p));
        std::copy(r.center_frequencies.begin(), r.center_frequencies.end(),
                  out.omega.begin() + static_cast<std::ptrdiff_t>(b * k));
        out.reconstruction_error[b] = r.reconstruction_error;
      } catch (const Error& e) {
        errors[b] = e;
        std::size_t cur = first_failure.load();
        while (b < cur && !first_failure.compare_exchange_weak(cur, b)) {
        }
      }
    }
  };

  const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(work);
  }
  if (const std::size_t b = first_failure.load(); b < count) {
    const Error& e = *errors[b];
    fail(e.code(), "window " + std::to_string(b) + " (endpoint " + std::to_string(ds.endpoints[b]) +
                       "): " + e.what());
  }
  return out;
}

DecomposedDataset raw_dataset(const WindowedDataset& ds) {
  DecomposedDataset out = shell(ds, 1);
  out.U = ds.inputs;
  out.vmd.num_modes = 1;
  return out;
}

}  // namespace vmdnet::windowing
