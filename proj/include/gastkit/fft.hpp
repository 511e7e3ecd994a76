#pragma once

#include <complex>
#include <span>
#include <vector>

namespace gastkit {

using Complex = std::complex<double>;

/// Unnormalized forward DFT, X(u) = sum_j x(j) exp(-2 pi i j u / n), in
/// O(n log n) for any n: radix-2 for powers of two, Bluestein otherwise.
std::vector<Complex> fft(std::span<const Complex> x);

/// Unnormalized inverse, x(j) = sum_u X(u) exp(+2 pi i j u / n).
std::vector<Complex> ifft(std::span<const Complex> x);

std::vector<Complex> fft_real(std::span<const double> x);

}  // namespace gastkit
