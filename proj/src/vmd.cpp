#include "vmdnet/vmd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "fft.hpp"
#include "vmdnet/error.hpp"
#include "vmdnet/rng.hpp"

namespace vmdnet::vmd {

using detail::Complex;

void VmdConfig::validate() const {
  if (num_modes < 1) fail(ErrorCode::InvalidConfig, "num_modes must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    fail(ErrorCode::InvalidConfig, "alpha must be a positive finite number");
  if (!(tau >= 0.0) || !std::isfinite(tau)) fail(ErrorCode::InvalidConfig, "tau must be >= 0");
  if (!(tolerance > 0.0)) fail(ErrorCode::InvalidConfig, "tolerance must be > 0");
  if (max_iterations < 1) fail(ErrorCode::InvalidConfig, "max_iterations must be >= 1");
}

std::size_t min_length(int num_modes) {
  return std::max<std::size_t>(8, 4 * static_cast<std::size_t>(std::max(num_modes, 0)));
}

namespace {

std::vector<double> extend(std::span<const double> x, Boundary boundary, std::size_t& offset) {
  const std::size_t n = x.size();
  if (boundary == Boundary::None) {
    offset = 0;
    return {x.begin(), x.end()};
  }
  const std::size_t head = n / 2;
  const std::size_t tail = n - head;
  std::vector<double> out;
  out.reserve(2 * n);
  for (std::size_t i = head; i-- > 0;) out.push_back(x[i]);
  out.insert(out.end(), x.begin(), x.end());
  for (std::size_t i = n; i-- > n - tail;) out.push_back(x[i]);
  offset = head;
  return out;
}

std::vector<double> initial_omegas(const VmdConfig& cfg, std::size_t extended_length) {
  const auto k_count = static_cast<std::size_t>(cfg.num_modes);
  std::vector<double> omega(k_count, 0.0);
  switch (cfg.omega_init) {
    case OmegaInit::UniformSpread:
      for (std::size_t k = 0; k < k_count; ++k)
        omega[k] = 0.5 * static_cast<double>(k) / static_cast<double>(k_count);
      break;
    case OmegaInit::Zero:
      break;
    case OmegaInit::SeededRandom: {
      // Log-uniform between one bin and Nyquist.
      Rng rng(derive_seed(cfg.rng_seed, "vmd-init"));
      const double lo = std::log(1.0 / static_cast<double>(extended_length));
      const double hi = std::log(0.5);
      for (auto& w : omega) w = std::exp(lo + (hi - lo) * uniform01(rng));
      std::sort(omega.begin(), omega.end());
      break;
    }
  }
  return omega;
}

double squared_norm(std::span<const Complex> v) {
  double s = 0.0;
  for (const auto& c : v) s += std::norm(c);
  return s;
}

}  // namespace

VmdResult decompose(std::span<const double> signal, const VmdConfig& config) {
  config.validate();
  const std::size_t n = signal.size();
  if (n < min_length(config.num_modes)) {
    fail(ErrorCode::SignalTooShort, "signal of length " + std::to_string(n) +
                                        " is shorter than max(8, 4K) = " +
                                        std::to_string(min_length(config.num_modes)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(signal[i]))
      fail(ErrorCode::NonFiniteInput, "sample " + std::to_string(i) + " is not finite");
  }

  std::size_t offset = 0;
  const std::vector<double> ext = extend(signal, config.boundary, offset);
  const std::size_t m = ext.size();
  const std::size_t half = (m + 1) / 2;  // bins 0..half-1 are 0 <= w < 1/2
  const auto k_count = static_cast<std::size_t>(config.num_modes);

  std::vector<Complex> spectrum = detail::fft_real(ext);
  const std::span<const Complex> f_plus(spectrum.data(), half);
  std::vector<double> freqs(half);
  for (std::size_t j = 0; j < half; ++j) freqs[j] = static_cast<double>(j) / static_cast<double>(m);

  std::vector<Complex> u(k_count * half, Complex{});
  std::vector<Complex> sum_all(half, Complex{});
  std::vector<Complex> lambda(half, Complex{});
  std::vector<double> omega = initial_omegas(config, m);

  VmdResult result;
  result.num_modes = k_count;
  result.length = n;

  const double f_energy = squared_norm(f_plus);
  const double two_alpha = 2.0 * config.alpha;

  auto objective = [&] {
    double fidelity = 0.0;
    for (std::size_t j = 0; j < half; ++j) fidelity += std::norm(f_plus[j] - sum_all[j]);
    double bandwidth = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const Complex* uk = u.data() + k * half;
      for (std::size_t j = 0; j < half; ++j) {
        const double d = freqs[j] - omega[k];
        bandwidth += d * d * std::norm(uk[j]);
      }
    }
    return fidelity + two_alpha * bandwidth;
  };

  if (f_energy == 0.0) {
    result.converged = true;
  } else {
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
      double change = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        Complex* uk = u.data() + k * half;
        const double wk = omega[k];
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < half; ++j) {
          const Complex others = sum_all[j] - uk[j];
          const double d = freqs[j] - wk;
          const Complex next = (f_plus[j] - others + 0.5 * lambda[j]) / (1.0 + two_alpha * d * d);
          change += std::norm(next - uk[j]);
          uk[j] = next;
          sum_all[j] = others + next;
          const double p = std::norm(next);
          num += freqs[j] * p;
          den += p;
        }
        if (den > 0.0) omega[k] = num / den;
      }
      // Refresh the running sum so rounding does not drift across iterations.
      std::fill(sum_all.begin(), sum_all.end(), Complex{});
      for (std::size_t k = 0; k < k_count; ++k) {
        const Complex* uk = u.data() + k * half;
        for (std::size_t j = 0; j < half; ++j) sum_all[j] += uk[j];
      }
      if (config.tau > 0.0) {
        // The multiplier is part of the iterate: a run only counts as
        // converged once lambda/2 has settled as well as the modes.
        for (std::size_t j = 0; j < half; ++j) {
          const Complex step = config.tau * (f_plus[j] - sum_all[j]);
          lambda[j] += step;
          change += 0.25 * std::norm(step);
        }
      }
      if (config.record_objective) result.objective_trace.push_back(objective());
      result.iterations_used = iter;
      if (change / f_energy < config.tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  // Canonical order: ascending centre frequency (stable for ties).
  std::vector<std::size_t> order(k_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return omega[a] < omega[b]; });

  result.modes.assign(k_count * n, 0.0);
  result.center_frequencies.resize(k_count);
  std::vector<Complex> full(m);
  for (std::size_t r = 0; r < k_count; ++r) {
    const std::size_t k = order[r];
    result.center_frequencies[r] = std::clamp(omega[k], 0.0, 0.5);
    const Complex* uk = u.data() + k * half;
    // Hermitian completion of the one-sided spectrum; the Nyquist bin of an
    // even-length transform is not part of the one-sided band and stays zero.
    std::fill(full.begin(), full.end(), Complex{});
    for (std::size_t j = 0; j < half; ++j) full[j] = uk[j];
    for (std::size_t j = 1; j < half; ++j) full[m - j] = std::conj(uk[j]);
    detail::fft_inverse(full);
    double* row = result.modes.data() + r * n;
    for (std::size_t t = 0; t < n; ++t) row[t] = full[offset + t].real();
  }

  const std::vector<double> sum = reconstruct(result);
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    err += (signal[t] - sum[t]) * (signal[t] - sum[t]);
    ref += signal[t] * signal[t];
  }
  result.reconstruction_error = ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
  return result;
}

std::vector<double> reconstruct(const VmdResult& result) {
  std::vector<double> out(result.length, 0.0);
  for (std::size_t k = 0; k < result.num_modes; ++k) {
    const auto row = result.mode(k);
    for (std::size_t t = 0; t < result.length; ++t) out[t] += row[t];
  }
  return out;
}

double mode_bandwidth(std::span<const double> mode, double omega) {
  for (double v : mode) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "mode contains a non-finite sample");
  }
  if (!std::isfinite(omega)) fail(ErrorCode::NonFiniteInput, "omega is not finite");
  const std::size_t n = mode.size();
  if (n == 0) return 0.0;
  const auto spec = detail::fft_real(mode);
  const std::size_t half = (n + 1) / 2;
  double acc = 0.0;
  for (std::size_t j = 0; j < half; ++j) {
    const double w = 2.0 * std::numbers::pi * (static_cast<double>(j) / static_cast<double>(n) - omega);
    const double gain = j == 0 ? 1.0 : 4.0;  // |2 U|^2 for the analytic signal
    acc += w * w * gain * std::norm(spec[j]);
  }
  return acc / static_cast<double>(n);
}

}  // namespace vmdnet::vmd
