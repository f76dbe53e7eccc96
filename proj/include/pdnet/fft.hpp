#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pdnet/error.hpp"

namespace pdnet {

inline bool is_power_of_two(std::size_t n) noexcept { return std::has_single_bit(n); }

/// In-place iterative radix-2 Cooley-Tukey transform, X_k = sum x_n e^{-2 pi i kn/N}.
/// Twiddles are evaluated directly per index rather than by recurrence.
inline void fft_inplace(std::span<std::complex<double>> data) {
    const std::size_t n = data.size();
    require(is_power_of_two(n), ErrorKind::BadLength, "FFT size " + std::to_string(n) + " is not a power of two");
    if (n == 1) return;

    const int bits = std::countr_zero(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
        if (r > i) std::swap(data[i], data[r]);
    }

    std::vector<std::complex<double>> twiddle(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle[k] = {std::cos(angle), std::sin(angle)};
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const auto w = twiddle[j * step];
                const auto a = data[start + j];
                const auto b = data[start + j + half] * w;
                data[start + j] = a + b;
                data[start + j + half] = a - b;
            }
        }
    }
}

/// Zero-pads `x` to `n_fft` and transforms it.
inline std::vector<std::complex<double>> fft_real(std::span<const double> x, std::size_t n_fft) {
    require(is_power_of_two(n_fft), ErrorKind::BadLength, "n_fft " + std::to_string(n_fft) + " is not a power of two");
    require(n_fft >= x.size(), ErrorKind::BadLength,
            "n_fft " + std::to_string(n_fft) + " shorter than signal length " + std::to_string(x.size()));
    std::vector<std::complex<double>> buf(n_fft);
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    fft_inplace(buf);
    return buf;
}

/// One-sided magnitude spectrum, n_fft / 2 + 1 bins.
inline std::vector<double> magnitude_spectrum(std::span<const double> x, std::size_t n_fft) {
    auto spec = fft_real(x, n_fft);
    std::vector<double> mag(n_fft / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(spec[k]);
    return mag;
}

/// Smallest power of two >= n.
inline std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

}  // namespace pdnet
