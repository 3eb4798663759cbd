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
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "wingbeat/audio.hpp"
#include "wingbeat/common.hpp"
#include "wingbeat/labels.hpp"
#include "wingbeat/rng.hpp"
#include "wingbeat/wav.hpp"

namespace wingbeat {

// Synthetic wingbeat-like fixtures: each class is a harmonic stack on a
// distinct fundamental, with per-file random phases, mild amplitude jitter
// and white noise at a chosen SNR. Deterministic per (seed, class, file).

struct SynthClass {
    int species = 0;              // index into the fixed label set
    double fundamental_hz = 0.0;
    int harmonics = 4;
};

struct SynthSpec {
    std::vector<SynthClass> classes;
    double snr_db = 20.0;  // +infinity = noiseless
    int files_per_class = 2;
    double seconds_per_file = 30.0;
    int sample_rate = kStandardRate;
    uint64_t seed = 0;
};

inline std::vector<float> synth_tone_stack(const SynthClass& cls, double seconds, int sample_rate,
                                           double snr_db, Rng& rng) {
    const double nyquist = sample_rate / 2.0;
    if (cls.fundamental_hz <= 0.0 || cls.fundamental_hz >= nyquist) {
        fail(strfmt("synthetic class %s: fundamental %.1f Hz outside (0, %.0f)",
                    std::string(species::name(cls.species)).c_str(), cls.fundamental_hz, nyquist));
    }
    const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
    if (n < 1) fail("synthetic file must be at least one sample long");

    struct Partial {
        double freq, amp, phase;
    };
    std::vector<Partial> partials;
    for (int h = 1; h <= cls.harmonics; ++h) {
        const double f = cls.fundamental_hz * h;
        if (f >= nyquist) break;
        Partial p;
        p.freq = f;
        p.amp = (1.0 / h) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
        p.phase = rng.uniform(0.0, 2.0 * 3.141592653589793238462643383279502884);
        partials.push_back(p);
    }
    if (partials.empty()) fail("synthetic class has no partials below Nyquist");

    std::vector<float> x(static_cast<size_t>(n), 0.0f);
    const double w0 = 2.0 * 3.141592653589793238462643383279502884 / sample_rate;
    double sum_sq = 0.0;
    for (int64_t t = 0; t < n; ++t) {
        double v = 0.0;
        for (const auto& p : partials) v += p.amp * std::sin(w0 * p.freq * t + p.phase);
        x[static_cast<size_t>(t)] = static_cast<float>(v);
        sum_sq += v * v;
    }
    const double rms = std::sqrt(sum_sq / static_cast<double>(n));

    // scale the tone stack to a fixed RMS, then add noise for the SNR
    const double target_rms = 0.15;
    const double scale = rms > 0.0 ? target_rms / rms : 1.0;
    double noise_sigma = 0.0;
    if (std::isfinite(snr_db)) noise_sigma = target_rms * std::pow(10.0, -snr_db / 20.0);
    float peak = 0.0f;
    for (auto& v : x) {
        double s = v * scale;
        if (noise_sigma > 0.0) s += noise_sigma * rng.normal();
        v = static_cast<float>(s);
        peak = std::max(peak, std::fabs(v));
    }
    if (peak > 0.99f) {
        const float norm = 0.99f / peak;
        for (auto& v : x) v *= norm;
    }
    return x;
}

// Writes the WAV files plus a keep-all manifest under out_dir; returns the
// manifest path.
inline std::string generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
    if (spec.classes.empty()) fail("synthetic spec has no classes");
    if (spec.classes.size() > static_cast<size_t>(species::kCount)) {
        fail(strfmt("synthetic spec has %zu classes, the label set has %d", spec.classes.size(),
                    species::kCount));
    }
    if (spec.files_per_class < 1) fail("synthetic spec: files_per_class must be >= 1");

    std::filesystem::create_directories(out_dir);
    const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.csv").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) fail(strfmt("%s: cannot open for writing", manifest_path.c_str()));
    manifest << "file_path,species,segments\n";

    for (size_t c = 0; c < spec.classes.size(); ++c) {
        const SynthClass& cls = spec.classes[c];
        species::name(cls.species);  // validates
        for (int fi = 0; fi < spec.files_per_class; ++fi) {
            Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(cls.species),
                             static_cast<uint64_t>(fi)));
            const std::vector<float> x =
                synth_tone_stack(cls, spec.seconds_per_file, spec.sample_rate, spec.snr_db, rng);
            const std::string rel =
                strfmt("%s_%02d.wav", std::string(species::name(cls.species)).c_str(), fi);
            write_wav((std::filesystem::path(out_dir) / rel).string(), x, spec.sample_rate);
            manifest << rel << "," << species::name(cls.species) << ",\n";
        }
    }
    if (!manifest) fail(strfmt("%s: write failed", manifest_path.c_str()));
    return manifest_path;
}

}  // namespace wingbeat
