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
#include <map>
#include <string>
#include <vector>

#include "wingbeat/common.hpp"
#include "wingbeat/labels.hpp"
#include "wingbeat/manifest.hpp"
#include "wingbeat/resample.hpp"
#include "wingbeat/threading.hpp"
#include "wingbeat/wav.hpp"

namespace wingbeat {

inline constexpr int kStandardRate = 8000;  // Hz; lowest rate in the source corpus

// Decoded, mono, rate-standardized audio with its label. The unit the
// feature extractor consumes.
struct AudioClip {
    std::vector<float> samples;  // mono, in [-1, 1]
    int sample_rate = 0;
    SpeciesLabel species;
    std::string source_id;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

namespace detail {

inline void check_segments_fit(const ManifestEntry& e, double file_duration_s,
                               const std::string& path) {
    for (const auto& s : e.keep_segments) {
        if (s.end_s > file_duration_s + 1e-9) {
            fail(strfmt("%s: keep segment %.6g-%.6g exceeds file duration %.6g s", path.c_str(),
                        s.start_s, s.end_s, file_duration_s));
        }
    }
}

}  // namespace detail

// Decode -> downmix (arithmetic channel mean) -> resample to target_rate ->
// concatenate the kept segments. Kept regions from one file are joined into
// a single clip; see the patching notes in the README for the boundary
// caveat.
inline AudioClip decode_and_standardize(const ManifestEntry& entry, int target_rate,
                                        const std::string& base_dir = "") {
    std::string path = entry.file_path;
    if (!base_dir.empty() && !std::filesystem::path(path).is_absolute()) {
        path = (std::filesystem::path(base_dir) / path).string();
    }

    const WavData wav = read_wav(path);
    if (target_rate > wav.sample_rate) {
        fail(strfmt("%s: source rate %d Hz is below the target %d Hz; upsampling is refused",
                    path.c_str(), wav.sample_rate, target_rate));
    }
    detail::check_segments_fit(entry, static_cast<double>(wav.frames()) / wav.sample_rate, path);

    std::vector<float> mono;
    mono.resize(static_cast<size_t>(wav.frames()));
    if (wav.channels == 1) {
        mono = wav.samples;
    } else {
        for (int64_t i = 0; i < wav.frames(); ++i) {
            const float l = wav.samples[static_cast<size_t>(2 * i)];
            const float r = wav.samples[static_cast<size_t>(2 * i + 1)];
            mono[static_cast<size_t>(i)] = 0.5f * (l + r);
        }
    }

    std::vector<float> standardized = resample(mono, wav.sample_rate, target_rate);

    AudioClip clip;
    clip.sample_rate = target_rate;
    clip.species = entry.species;
    clip.source_id = entry.file_path;
    if (entry.keep_segments.empty()) {
        clip.samples = std::move(standardized);
    } else {
        const int64_t len = static_cast<int64_t>(standardized.size());
        for (const auto& s : entry.keep_segments) {
            int64_t b = std::llround(s.start_s * target_rate);
            int64_t e = std::llround(s.end_s * target_rate);
            if (b < 0) b = 0;
            if (e > len) e = len;
            for (int64_t i = b; i < e; ++i) {
                clip.samples.push_back(standardized[static_cast<size_t>(i)]);
            }
        }
    }
    if (clip.samples.empty()) {
        fail(strfmt("%s: no samples left after keep-segment application", path.c_str()));
    }
    return clip;
}

// Decodes every manifest entry. Files are processed in parallel; the result
// order is the manifest order regardless of scheduling.
inline std::vector<AudioClip> decode_all(const Manifest& m, int target_rate = kStandardRate) {
    std::vector<AudioClip> clips(m.entries.size());
    parallel_for(static_cast<int64_t>(m.entries.size()), [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            clips[static_cast<size_t>(i)] =
                decode_and_standardize(m.entries[static_cast<size_t>(i)], target_rate, m.base_dir);
        }
    });
    return clips;
}

struct SpeciesStats {
    int file_count = 0;
    double total_duration_s = 0.0;  // after keep-segment application
};

// Per-species file counts and post-curation durations. Reads headers only;
// keyed by species index, species absent from the manifest are absent from
// the map.
inline std::map<int, SpeciesStats> dataset_stats(const Manifest& m) {
    std::map<int, SpeciesStats> stats;
    for (const auto& e : m.entries) {
        const std::string path = resolve_audio_path(m, e);
        WavInfo info;
        try {
            info = wav_info(path);
        } catch (const Error& err) {
            fail(strfmt("dataset stats: %s", err.what()));
        }
        detail::check_segments_fit(e, info.duration_s(), path);
        auto& s = stats[e.species.index];
        s.file_count += 1;
        s.total_duration_s += e.kept_duration_or(info.duration_s());
    }
    return stats;
}

}  // namespace wingbeat
