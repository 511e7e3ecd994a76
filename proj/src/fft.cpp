#include "gastkit/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <numbers>

namespace gastkit {

namespace {

// exp(-2 pi i k / n) for k < n/2, computed directly (no recurrence) and
// cached per size.
const std::vector<Complex>& twiddles(std::size_t n) {
    thread_local std::map<std::size_t, std::vector<Complex>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<Complex> w(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = Complex(std::cos(ang), std::sin(ang));
    }
    return cache.emplace(n, std::move(w)).first->second;
}

// In-place iterative radix-2; n must be a power of two. sign = -1 forward.
void radix2(std::vector<Complex>& a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& tw = twiddles(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex w = sign < 0 ? tw[k * stride] : std::conj(tw[k * stride]);
                const Complex u = a[i + k];
                const Complex b = a[i + k + half];
                const Complex v(b.real() * w.real() - b.imag() * w.imag(),
                                b.real() * w.imag() + b.imag() * w.real());
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

// Chirp-z (Bluestein) for arbitrary n via a power-of-two convolution.
std::vector<Complex> bluestein(std::span<const Complex> x, int sign) {
    const std::size_t n = x.size();
    const std::size_t m = std::bit_ceil(2 * n - 1);
    std::vector<Complex> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for large n.
        const auto k2 = static_cast<double>((static_cast<unsigned long long>(k) * k) % (2 * n));
        const double ang = sign * std::numbers::pi * k2 / static_cast<double>(n);
        chirp[k] = Complex(std::cos(ang), std::sin(ang));
    }
    std::vector<Complex> a(m), b(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
    radix2(a, -1);
    radix2(b, -1);
    for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
    radix2(a, +1);
    std::vector<Complex> out(n);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * inv_m * chirp[k];
    return out;
}

std::vector<Complex> transform(std::span<const Complex> x, int sign) {
    if (x.empty()) return {};
    if (std::has_single_bit(x.size())) {
        std::vector<Complex> a(x.begin(), x.end());
        radix2(a, sign);
        return a;
    }
    return bluestein(x, sign);
}

}  // namespace

std::vector<Complex> fft(std::span<const Complex> x) { return transform(x, -1); }

std::vector<Complex> ifft(std::span<const Complex> x) { return transform(x, +1); }

std::vector<Complex> fft_real(std::span<const double> x) {
    std::vector<Complex> c(x.begin(), x.end());
    return transform(c, -1);
}

}  // namespace gastkit
