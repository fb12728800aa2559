#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vmdnet::vmd {

enum class OmegaInit { UniformSpread, Zero, SeededRandom };
enum class Boundary { Mirror, None };

/// Solver settings for one variational mode decomposition.
///
/// The ADMM update for mode k in the one-sided spectrum is the Wiener filter
///   u_k(w) <- (f(w) - sum_{i!=k} u_i(w) + lambda(w)/2) / (1 + 2 alpha (w - w_k)^2)
/// followed by the spectral-centroid update of w_k and the dual ascent
///   lambda <- lambda + tau (f - sum_k u_k).
/// Frequencies are in cycles/sample.
struct VmdConfig {
  int num_modes = 1;
  double alpha = 2000.0;
  double tau = 0.0;
  /// Stop when (sum_k ||u_k^{n+1} - u_k^n||^2 + ||(lambda^{n+1} - lambda^n)/2||^2) / ||f||^2
  /// drops below this; all norms over the one-sided spectrum.
  double tolerance = 1e-7;
  int max_iterations = 500;
  OmegaInit omega_init = OmegaInit::UniformSpread;
  Boundary boundary = Boundary::Mirror;
  std::uint64_t rng_seed = 0;
  /// Record the penalized objective after every outer iteration.
  bool record_objective = false;

  void validate() const;
};

struct VmdResult {
  std::size_t num_modes = 0;
  std::size_t length = 0;
  /// Row-major num_modes x length; row k is mode k in signal units.
  std::vector<double> modes;
  /// Ascending, cycles/sample in [0, 0.5].
  std::vector<double> center_frequencies;
  int iterations_used = 0;
  bool converged = false;
  /// ||x - sum_k u_k|| / ||x|| on the original (un-extended) samples.
  double reconstruction_error = 0.0;
  /// Only filled when VmdConfig::record_objective is set. Entry n is
  ///   sum_w |f - sum_k u_k|^2 + 2 alpha sum_k sum_w (w - w_k)^2 |u_k|^2
  /// over the one-sided spectrum of the (extended) signal after iteration n.
  std::vector<double> objective_trace;

  std::span<const double> mode(std::size_t k) const {
    return {modes.data() + k * length, length};
  }
};

/// Minimum accepted signal length for a K-mode decomposition: max(8, 4K).
std::size_t min_length(int num_modes);

/// Throws SignalTooShort, NonFiniteInput or InvalidConfig.
VmdResult decompose(std::span<const double> signal, const VmdConfig& config);

/// Element-wise sum of the modes.
std::vector<double> reconstruct(const VmdResult& result);

/// Squared L2 norm of d/dt[ z_k(t) e^{-j 2 pi omega t} ], z_k the analytic
/// signal of the mode, evaluated by Parseval on the DFT of the mode:
///   (1/N) sum_{0 <= w < 1/2} (2 pi (w - omega))^2 |c_w U(w)|^2,  c_0 = 1, c_w = 2.
/// On this scale the energy of the analytic signal is 2 sum_t u_t^2.
double mode_bandwidth(std::span<const double> mode, double omega);

}  // namespace vmdnet::vmd
