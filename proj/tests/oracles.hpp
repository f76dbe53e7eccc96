#pragma once

// Brute-force reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

/// X_k = sum_j x_j exp(-2 pi i jk / n), O(n^2). The angle index (jk mod n)
/// is reduced exactly in integers before the trig call.
inline std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> w(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        w[m] = {std::cos(a), std::sin(a)};
    }
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += x[j] * w[(j * k) % n];
        out[k] = acc;
    }
    return out;
}

inline std::vector<std::complex<double>> dft_real_padded(std::span<const double> x, std::size_t n) {
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    return dft(buf);
}

/// max_k |a_k - b_k| / max_k |b_k|
template <typename T>
double max_rel_error(std::span<const T> a, std::span<const T> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, static_cast<double>(std::abs(a[i] - b[i])));
        den = std::max(den, static_cast<double>(std::abs(b[i])));
    }
    return den == 0.0 ? num : num / den;
}

/// Valid cross-correlation, one sample: in[c][t], w[o][c][j] (flattened
/// row-major), out[o][t'] = b[o] + sum_c sum_j w[o][c][j] in[c][t' s + j].
inline std::vector<std::vector<double>> conv1d(const std::vector<std::vector<double>>& in,
                                               const std::vector<double>& w, const std::vector<double>& b,
                                               std::size_t kernel, std::size_t stride) {
    const std::size_t cin = in.size(), len = in.front().size(), cout = b.size();
    const std::size_t out_len = len < kernel ? 0 : (len - kernel) / stride + 1;
    std::vector<std::vector<double>> out(cout, std::vector<double>(out_len));
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t t = 0; t < out_len; ++t) {
            double acc = b[o];
            for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t j = 0; j < kernel; ++j) acc += w[(o * cin + c) * kernel + j] * in[c][t * stride + j];
            out[o][t] = acc;
        }
    return out;
}

/// (f(x + h e_i) - f(x - h e_i)) / 2h, restoring x[i] afterwards.
inline double central_difference(const std::function<double()>& f, double& xi, double h) {
    const double saved = xi;
    xi = saved + h;
    const double up = f();
    xi = saved - h;
    const double down = f();
    xi = saved;
    return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients
/// from being judged on rounding noise alone.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle
