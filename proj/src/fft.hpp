#pragma once

#include <complex>
#include <span>
#include <vector>

namespace vmdnet::detail {

using Complex = std::complex<double>;

// Unnormalized forward DFT, in place.
void fft_forward(std::span<Complex> data);

// Inverse DFT including the 1/n factor, in place.
void fft_inverse(std::span<Complex> data);

std::vector<Complex> fft_real(std::span<const double> x);

}  // namespace vmdnet::detail
