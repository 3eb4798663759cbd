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
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "wingbeat/audio.hpp"
#include "wingbeat/common.hpp"
#include "wingbeat/fft.hpp"
#include "wingbeat/tensor.hpp"
#include "wingbeat/threading.hpp"

namespace wingbeat {

// Spectrogram front-end configuration. Ids 1..11 name the rows of the
// parameter grid the models were compared on; id 0 marks a custom
// combination. The pipeline constants (overlap, rate, dB floor) are fixed.
struct FeatureConfig {
    int id = 0;
    int n_bands = 60;        // mel bands
    int n_frames = 40;       // frames per patch
    int hop_length = 256;    // samples
    int window_size = 1024;  // samples
    double patch_overlap = 0.5;
    int sample_rate = kStandardRate;
    double db_floor = -80.0;

    int bins() const { return window_size / 2 + 1; }

    void validate() const {
        if (n_bands < 1) fail("feature config: n_bands must be >= 1");
        if (n_frames < 1) fail("feature config: n_frames must be >= 1");
        if (hop_length < 1) fail("feature config: hop_length must be >= 1");
        if (window_size < hop_length) fail("feature config: window_size must be >= hop_length");
        if (patch_overlap < 0.0 || patch_overlap >= 1.0) {
            fail("feature config: patch_overlap must be in [0, 1)");
        }
        if (sample_rate < 1) fail("feature config: sample_rate must be positive");
        if (db_floor >= 0.0) fail("feature config: db_floor must be negative");
    }

    // The evaluated parameter grid. Rows vary one parameter at a time around
    // the 60-band / 40-frame / hop-128 / window-1024 base.
    static FeatureConfig from_table(int id) {
        struct Row {
            int bands, frames, hop, window;
        };
        static constexpr Row rows[11] = {
            {20, 40, 128, 1024}, {40, 40, 128, 1024}, {60, 40, 128, 1024}, {80, 40, 128, 1024},
            {60, 20, 128, 1024}, {60, 60, 128, 1024}, {60, 40, 64, 1024},  {60, 40, 256, 1024},
            {60, 40, 512, 1024}, {60, 40, 256, 512},  {60, 40, 256, 2048},
        };
        if (id < 1 || id > 11) fail(strfmt("unknown feature configuration id %d (valid: 1..11)", id));
        FeatureConfig c;
        c.id = id;
        c.n_bands = rows[id - 1].bands;
        c.n_frames = rows[id - 1].frames;
        c.hop_length = rows[id - 1].hop;
        c.window_size = rows[id - 1].window;
        c.validate();
        return c;
    }
};

// Triangular mel filterbank. weights is n_bands x (window/2 + 1).
struct MelFilterbank {
    Tensor<double> weights;
    std::vector<double> band_centers_hz;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// One training/testing instance: a bands x frames matrix in [0, 1].
struct FeaturePatch {
    Tensor<float> values;  // shape {n_bands, n_frames}
    int label = -1;        // species index
    std::string source_id;
    int patch_index = 0;
};

// Short-time power spectrogram. Frame t covers samples
// [t*hop, t*hop + window); a periodic Hann window is applied and the output
// is the squared magnitude of the one-sided spectrum, shape {bins, T} with
// T = floor((len - window) / hop) + 1.
inline Tensor<double> stft_power(const AudioClip& clip, const FeatureConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate != cfg.sample_rate) {
        fail(strfmt("stft: clip rate %d Hz does not match config rate %d Hz", clip.sample_rate,
                    cfg.sample_rate));
    }
    const int64_t len = static_cast<int64_t>(clip.samples.size());
    const int w = cfg.window_size;
    const int hop = cfg.hop_length;
    if (len < w) {
        fail(strfmt("stft: clip \"%s\" has %lld samples, shorter than one %d-sample window",
                    clip.source_id.c_str(), static_cast<long long>(len), w));
    }
    const int64_t frames = (len - w) / hop + 1;
    const int bins = cfg.bins();

    std::vector<double> window(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) {
        window[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * fft::kPi * static_cast<double>(i) / w);
    }

    Tensor<double> power({bins, static_cast<int>(frames)});
    parallel_for(frames, 4, [&](int64_t b, int64_t e) {
        std::vector<double> frame(static_cast<size_t>(w));
        std::vector<double> spec(static_cast<size_t>(bins));
        for (int64_t t = b; t < e; ++t) {
            const float* src = clip.samples.data() + t * hop;
            for (int i = 0; i < w; ++i) {
                frame[static_cast<size_t>(i)] = src[i] * window[static_cast<size_t>(i)];
            }
            fft::power_spectrum(frame.data(), static_cast<size_t>(w), spec.data());
            for (int k = 0; k < bins; ++k) {
                power.at(k, static_cast<int>(t)) = spec[static_cast<size_t>(k)];
            }
        }
    });
    return power;
}

// Triangular filters with centers equally spaced on the mel scale between
// 0 Hz and Nyquist; each filter spans its two neighbouring centers and is
// area-normalized (integral over Hz equals 1).
inline MelFilterbank build_mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    if (cfg.n_bands >= cfg.window_size / 2) {
        fail(strfmt("mel filterbank: %d bands is too many for window %d (max %d)", cfg.n_bands,
                    cfg.window_size, cfg.window_size / 2 - 1));
    }
    const int bins = cfg.bins();
    const double nyquist = cfg.sample_rate / 2.0;
    const double mel_max = hz_to_mel(nyquist);

    std::vector<double> edges_hz(static_cast<size_t>(cfg.n_bands) + 2);
    for (int i = 0; i < cfg.n_bands + 2; ++i) {
        edges_hz[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (cfg.n_bands + 1));
    }

    MelFilterbank fb;
    fb.weights = Tensor<double>({cfg.n_bands, bins});
    fb.band_centers_hz.resize(static_cast<size_t>(cfg.n_bands));
    const double df = static_cast<double>(cfg.sample_rate) / cfg.window_size;

    for (int b = 0; b < cfg.n_bands; ++b) {
        const double lo = edges_hz[static_cast<size_t>(b)];
        const double c = edges_hz[static_cast<size_t>(b) + 1];
        const double hi = edges_hz[static_cast<size_t>(b) + 2];
        fb.band_centers_hz[static_cast<size_t>(b)] = c;
        const double norm = 2.0 / (hi - lo);
        bool any = false;
        for (int k = 0; k < bins; ++k) {
            const double f = k * df;
            double wgt = 0.0;
            if (f > lo && f < c) {
                wgt = (f - lo) / (c - lo);
            } else if (f == c) {
                wgt = 1.0;
            } else if (f > c && f < hi) {
                wgt = (hi - f) / (hi - c);
            }
            wgt *= norm;
            fb.weights.at(b, k) = wgt;
            any = any || wgt > 0.0;
        }
        if (!any) {
            fail(strfmt("mel filterbank: band %d (center %.1f Hz) captures no FFT bin; too many "
                        "bands for this spectral resolution",
                        b, c));
        }
    }
    return fb;
}

// The affine map from the [db_floor, 0] dB range to [0, 1]:
// out = dB/80 + 1 for the standard -80 dB floor. Inputs are clamped to the
// range first; division keeps the endpoints exact (-80 -> 0, 0 -> 1).
inline double normalize_db(double db, double db_floor = -80.0) {
    if (db < db_floor) db = db_floor;
    if (db > 0.0) db = 0.0;
    return db / (-db_floor) + 1.0;
}

// Mel projection, dB conversion against the per-spectrogram maximum with a
// floor clamp, then the affine map to [0, 1]:
//
//   dB = 10*log10(mel / max(mel)), clamped to [db_floor, 0]
//   out = dB / 80 + 1
//
// A silent spectrogram (max power 0) maps entirely to 0.
inline Tensor<double> mel_db_normalize(const Tensor<double>& power, const MelFilterbank& fb,
                                       double db_floor = -80.0) {
    const int bands = fb.weights.rows();
    const int bins = fb.weights.cols();
    if (power.rows() != bins) {
        fail(strfmt("mel: power spectrogram has %d bins, filterbank expects %d", power.rows(),
                    bins));
    }
    const int frames = power.cols();
    Tensor<double> mel({bands, frames});
    parallel_for(bands, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const double* wrow = &fb.weights.v[static_cast<size_t>(b) * bins];
            for (int t = 0; t < frames; ++t) {
                double acc = 0.0;
                for (int k = 0; k < bins; ++k) acc += wrow[k] * power.at(k, t);
                mel.at(static_cast<int>(b), t) = acc;
            }
        }
    });

    double peak = 0.0;
    for (double x : mel.v) peak = std::max(peak, x);

    for (double& x : mel.v) {
        const double db =
            (peak <= 0.0 || x <= 0.0) ? db_floor : 10.0 * std::log10(x / peak);
        x = normalize_db(db, db_floor);
    }
    return mel;
}

inline int64_t patch_stride(const FeatureConfig& cfg) {
    int64_t stride = static_cast<int64_t>(cfg.n_frames * (1.0 - cfg.patch_overlap));
    return stride < 1 ? 1 : stride;
}

// Cuts a normalized spectrogram into fixed-size patches at 50% overlap
// (configurable). Returns an empty list when fewer than n_frames frames are
// available.
inline std::vector<FeaturePatch> patchify(const Tensor<double>& spec, const FeatureConfig& cfg,
                                          SpeciesLabel label, const std::string& source_id) {
    std::vector<FeaturePatch> patches;
    const int T = spec.cols();
    if (T < cfg.n_frames) return patches;
    const int64_t stride = patch_stride(cfg);
    const int64_t count = (T - cfg.n_frames) / stride + 1;
    patches.reserve(static_cast<size_t>(count));
    for (int64_t p = 0; p < count; ++p) {
        const int start = static_cast<int>(p * stride);
        FeaturePatch patch;
        patch.values = Tensor<float>({cfg.n_bands, cfg.n_frames});
        for (int b = 0; b < cfg.n_bands; ++b) {
            for (int t = 0; t < cfg.n_frames; ++t) {
                patch.values.at(b, t) = static_cast<float>(spec.at(b, start + t));
            }
        }
        patch.label = label.index;
        patch.source_id = source_id;
        patch.patch_index = static_cast<int>(p);
        patches.push_back(std::move(patch));
    }
    return patches;
}

struct ExtractResult {
    std::vector<FeaturePatch> patches;
    std::vector<std::string> warnings;
};

// Full front end over a clip list. The per-clip transforms fan out across
// the pool; the patch order is (clip order, patch_index) regardless of
// scheduling. Clips too short for one window or one patch produce warnings,
// not failures.
inline ExtractResult extract_features(const std::vector<AudioClip>& clips,
                                      const FeatureConfig& cfg) {
    cfg.validate();
    const MelFilterbank fb = build_mel_filterbank(cfg);

    std::vector<std::vector<FeaturePatch>> per_clip(clips.size());
    std::vector<std::string> per_clip_warning(clips.size());
    // outer loop sequential: clip counts are small and the inner ops are
    // already parallel
    for (size_t i = 0; i < clips.size(); ++i) {
        const AudioClip& clip = clips[i];
        if (static_cast<int>(clip.samples.size()) < cfg.window_size) {
            per_clip_warning[i] = strfmt("skipped \"%s\": %zu samples < window %d",
                                         clip.source_id.c_str(), clip.samples.size(),
                                         cfg.window_size);
            continue;
        }
        const Tensor<double> power = stft_power(clip, cfg);
        const Tensor<double> normalized = mel_db_normalize(power, fb, cfg.db_floor);
        per_clip[i] = patchify(normalized, cfg, clip.species, clip.source_id);
        if (per_clip[i].empty()) {
            per_clip_warning[i] = strfmt("skipped \"%s\": %d frames < patch length %d",
                                         clip.source_id.c_str(), normalized.cols(), cfg.n_frames);
        }
    }

    ExtractResult out;
    for (size_t i = 0; i < clips.size(); ++i) {
        for (auto& p : per_clip[i]) out.patches.push_back(std::move(p));
        if (!per_clip_warning[i].empty()) out.warnings.push_back(per_clip_warning[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch cache: one binary file per (manifest, config). Header, then raw
// float32 patch values, then label / patch-index / source tables.

namespace detail {

inline constexpr char kCacheMagic[4] = {'W', 'B', 'P', 'C'};
inline constexpr uint32_t kCacheVersion = 1;

inline void w_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}

inline void w_u64(std::ofstream& f, uint64_t v) {
    w_u32(f, static_cast<uint32_t>(v));
    w_u32(f, static_cast<uint32_t>(v >> 32));
}

inline void w_f64(std::ofstream& f, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    w_u64(f, bits);
}

inline uint32_t r_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t r_u64(std::ifstream& f) {
    uint64_t lo = r_u32(f);
    uint64_t hi = r_u32(f);
    return lo | (hi << 32);
}

inline double r_f64(std::ifstream& f) {
    uint64_t bits = r_u64(f);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline void write_patch_cache(const std::string& path, const FeatureConfig& cfg,
                              const std::vector<FeaturePatch>& patches) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(strfmt("%s: cannot open for writing", path.c_str()));
    f.write(detail::kCacheMagic, 4);
    detail::w_u32(f, detail::kCacheVersion);
    detail::w_u32(f, static_cast<uint32_t>(cfg.id));
    detail::w_u32(f, static_cast<uint32_t>(cfg.n_bands));
    detail::w_u32(f, static_cast<uint32_t>(cfg.n_frames));
    detail::w_u32(f, static_cast<uint32_t>(cfg.hop_length));
    detail::w_u32(f, static_cast<uint32_t>(cfg.window_size));
    detail::w_f64(f, cfg.patch_overlap);
    detail::w_u32(f, static_cast<uint32_t>(cfg.sample_rate));
    detail::w_f64(f, cfg.db_floor);
    detail::w_u64(f, patches.size());

    for (const auto& p : patches) {
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.numel() * 4));
    }
    for (const auto& p : patches) detail::w_u32(f, static_cast<uint32_t>(p.label));
    for (const auto& p : patches) detail::w_u32(f, static_cast<uint32_t>(p.patch_index));

    // source table: unique strings + per-patch index
    std::vector<std::string> sources;
    std::vector<uint32_t> src_idx(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) {
        size_t j = 0;
        for (; j < sources.size(); ++j) {
            if (sources[j] == patches[i].source_id) break;
        }
        if (j == sources.size()) sources.push_back(patches[i].source_id);
        src_idx[i] = static_cast<uint32_t>(j);
    }
    detail::w_u32(f, static_cast<uint32_t>(sources.size()));
    for (const auto& s : sources) {
        detail::w_u32(f, static_cast<uint32_t>(s.size()));
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    for (uint32_t i : src_idx) detail::w_u32(f, i);
    if (!f) fail(strfmt("%s: write failed", path.c_str()));
}

struct PatchCache {
    FeatureConfig config;
    std::vector<FeaturePatch> patches;
};

inline PatchCache read_patch_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(strfmt("%s: cannot open", path.c_str()));
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, detail::kCacheMagic, 4) != 0) {
        fail(strfmt("%s: not a patch cache file", path.c_str()));
    }
    const uint32_t version = detail::r_u32(f);
    if (version != detail::kCacheVersion) {
        fail(strfmt("%s: unsupported patch cache version %u", path.c_str(), version));
    }
    PatchCache out;
    out.config.id = static_cast<int>(detail::r_u32(f));
    out.config.n_bands = static_cast<int>(detail::r_u32(f));
    out.config.n_frames = static_cast<int>(detail::r_u32(f));
    out.config.hop_length = static_cast<int>(detail::r_u32(f));
    out.config.window_size = static_cast<int>(detail::r_u32(f));
    out.config.patch_overlap = detail::r_f64(f);
    out.config.sample_rate = static_cast<int>(detail::r_u32(f));
    out.config.db_floor = detail::r_f64(f);
    const uint64_t count = detail::r_u64(f);
    out.config.validate();

    out.patches.resize(count);
    for (auto& p : out.patches) {
        p.values = Tensor<float>({out.config.n_bands, out.config.n_frames});
        f.read(reinterpret_cast<char*>(p.values.data()),
               static_cast<std::streamsize>(p.values.numel() * 4));
    }
    for (auto& p : out.patches) p.label = static_cast<int>(detail::r_u32(f));
    for (auto& p : out.patches) p.patch_index = static_cast<int>(detail::r_u32(f));
    const uint32_t n_sources = detail::r_u32(f);
    std::vector<std::string> sources(n_sources);
    for (auto& s : sources) {
        const uint32_t len = detail::r_u32(f);
        s.resize(len);
        f.read(s.data(), len);
    }
    for (auto& p : out.patches) {
        const uint32_t i = detail::r_u32(f);
        if (i >= n_sources) fail(strfmt("%s: corrupt source table", path.c_str()));
        p.source_id = sources[i];
    }
    if (!f) fail(strfmt("%s: truncated patch cache", path.c_str()));
    return out;
}

}  // namespace wingbeat
