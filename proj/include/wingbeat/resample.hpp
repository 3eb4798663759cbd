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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wingbeat/common.hpp"
#include "wingbeat/threading.hpp"

namespace wingbeat {

namespace detail {

inline double bessel_i0(double x) {
    // power series; converges fast for the argument range a Kaiser window uses
    double sum = 1.0, term = 1.0;
    const double x2 = 0.25 * x * x;
    for (int k = 1; k < 128; ++k) {
        term *= x2 / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-16) break;
    }
    return sum;
}

inline double sinc_pi(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    const double px = 3.141592653589793238462643383279502884 * x;
    return std::sin(px) / px;
}

}  // namespace detail

// Bandlimited sample-rate conversion: windowed-sinc interpolation with a
// Kaiser window, beta = 8, 64 taps per output sample. Downsampling only —
// upsampling is refused since the pipeline standardizes to the lowest rate.
//
// Output positions are tracked as exact rationals (m * src / dst), so long
// files do not accumulate phase drift. Each output sample is normalized by
// the local kernel sum, which pins DC gain to exactly 1.
inline std::vector<float> resample(const std::vector<float>& in, int src_rate, int dst_rate) {
    if (src_rate <= 0 || dst_rate <= 0) fail("resample: rates must be positive");
    if (dst_rate > src_rate) {
        fail(strfmt("resample: refusing to upsample %d Hz -> %d Hz", src_rate, dst_rate));
    }
    if (dst_rate == src_rate) return in;

    constexpr int kHalfTaps = 32;  // 64 taps per branch
    constexpr double kBeta = 8.0;
    const double i0_beta = detail::bessel_i0(kBeta);

    const int64_t n = static_cast<int64_t>(in.size());
    const int64_t out_n = n * dst_rate / src_rate;
    // cutoff just below the output Nyquist, in cycles per input sample
    const double fc = 0.475 * static_cast<double>(dst_rate) / src_rate;

    std::vector<float> out(static_cast<size_t>(out_n));
    parallel_for(out_n, 1024, [&](int64_t b, int64_t e) {
        for (int64_t m = b; m < e; ++m) {
            const int64_t num = m * src_rate;
            const int64_t i0 = num / dst_rate;
            const double frac = static_cast<double>(num % dst_rate) / dst_rate;
            double acc = 0.0, ksum = 0.0;
            for (int t = -kHalfTaps + 1; t <= kHalfTaps; ++t) {
                const double u = static_cast<double>(t) - frac;
                const double wu = u / kHalfTaps;
                const double win =
                    detail::bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - wu * wu))) / i0_beta;
                const double k = win * detail::sinc_pi(2.0 * fc * u);
                ksum += k;
                const int64_t idx = i0 + t;
                if (idx >= 0 && idx < n) acc += k * in[static_cast<size_t>(idx)];
            }
            out[static_cast<size_t>(m)] = static_cast<float>(acc / ksum);
        }
    });
    return out;
}

}  // namespace wingbeat
