// Copyright 2026 The Wingbeat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "wingbeat/common.hpp"

namespace wingbeat::fft {

using cd = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform. n must be a power of two.
inline void transform_pow2(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    if (n <= 1) return;
    // bit reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cd wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                cd u = a[i + k];
                cd v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

namespace detail {

// Bluestein chirp-z: re-expresses a length-n DFT as a circular convolution
// that runs on a power-of-two transform. Handles any n (1028 included).
inline void transform_bluestein(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    // chirp w[k] = exp(-i*pi*k^2/n); k^2 taken mod 2n to keep the phase
    // argument small and accurate for large k
    std::vector<cd> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        const uint64_t k2 = (static_cast<uint64_t>(k) * k) % (2 * n);
        const double ang =
            kPi * static_cast<double>(k2) / static_cast<double>(n) * (inverse ? -1.0 : 1.0);
        chirp[k] = cd(std::cos(ang), -std::sin(ang));  // e^{-i*ang}
    }

    std::vector<cd> x(m, cd{}), y(m, cd{});
    for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);

    transform_pow2(x, false);
    transform_pow2(y, false);
    for (size_t k = 0; k < m; ++k) x[k] *= y[k];
    transform_pow2(x, true);

    for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    if (inverse) {
        const double invn = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= invn;
    }
}

}  // namespace detail

// DFT of any length; inverse applies the 1/n factor.
inline void transform(std::vector<cd>& a, bool inverse = false) {
    if (a.empty()) return;
    if (is_pow2(a.size())) {
        transform_pow2(a, inverse);
    } else {
        detail::transform_bluestein(a, inverse);
    }
}

// One-sided power spectrum |X_k|^2, k = 0..n/2, of a real frame.
inline void power_spectrum(const double* frame, size_t n, double* out) {
    std::vector<cd> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = cd(frame[i], 0.0);
    transform(buf, false);
    const size_t bins = n / 2 + 1;
    for (size_t k = 0; k < bins; ++k) out[k] = std::norm(buf[k]);
}

}  // namespace wingbeat::fft
