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

#include "wingbeat/common.hpp"

namespace wingbeat {

// RIFF/WAVE PCM reader and writer. Scope is integer PCM, 16 or 24 bit,
// 1 or 2 channels; anything else is refused with a decode error. Other
// container formats must be converted to WAV beforehand.

struct WavInfo {
    int sample_rate = 0;
    int channels = 0;
    int bits_per_sample = 0;
    int64_t frames = 0;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0;
    }
};

struct WavData {
    int sample_rate = 0;
    int channels = 0;
    std::vector<float> samples;  // interleaved, in [-1, 1]

    int64_t frames() const {
        return channels > 0 ? static_cast<int64_t>(samples.size()) / channels : 0;
    }
};

namespace detail {

struct WavChunks {
    WavInfo info;
    int64_t data_offset = 0;
    int64_t data_size = 0;
};

inline uint32_t rd_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t rd_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline WavChunks parse_wav_header(std::ifstream& f, const std::string& path) {
    auto read_exact = [&](unsigned char* dst, size_t n, const char* what) {
        f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(f.gcount()) != n) {
            fail(strfmt("%s: truncated WAV (%s)", path.c_str(), what));
        }
    };

    unsigned char hdr[12];
    read_exact(hdr, 12, "RIFF header");
    if (std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0) {
        fail(strfmt("%s: not a RIFF/WAVE file", path.c_str()));
    }

    WavChunks out;
    bool have_fmt = false;
    while (true) {
        unsigned char ch[8];
        f.read(reinterpret_cast<char*>(ch), 8);
        if (f.gcount() < 8) break;
        const uint32_t size = rd_u32(ch + 4);
        if (std::memcmp(ch, "fmt ", 4) == 0) {
            if (size < 16) fail(strfmt("%s: malformed fmt chunk", path.c_str()));
            unsigned char fmt[16];
            read_exact(fmt, 16, "fmt chunk");
            const uint16_t format = rd_u16(fmt);
            out.info.channels = rd_u16(fmt + 2);
            out.info.sample_rate = static_cast<int>(rd_u32(fmt + 4));
            out.info.bits_per_sample = rd_u16(fmt + 14);
            if (format != 1) {
                fail(strfmt("%s: unsupported codec (format tag %u, only integer PCM is decoded)",
                            path.c_str(), format));
            }
            if (size > 16) f.seekg(size - 16 + (size & 1), std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(ch, "data", 4) == 0) {
            out.data_offset = static_cast<int64_t>(f.tellg());
            out.data_size = size;
            f.seekg(size + (size & 1), std::ios::cur);
        } else {
            f.seekg(size + (size & 1), std::ios::cur);
        }
        if (!f) break;
    }

    if (!have_fmt || out.data_offset == 0) {
        fail(strfmt("%s: missing fmt or data chunk", path.c_str()));
    }
    if (out.info.channels < 1 || out.info.channels > 2) {
        fail(strfmt("%s: %d channels unsupported (expected 1 or 2)", path.c_str(),
                    out.info.channels));
    }
    if (out.info.bits_per_sample != 16 && out.info.bits_per_sample != 24) {
        fail(strfmt("%s: %d-bit PCM unsupported (expected 16 or 24)", path.c_str(),
                    out.info.bits_per_sample));
    }
    if (out.info.sample_rate <= 0) fail(strfmt("%s: bad sample rate", path.c_str()));
    const int frame_bytes = out.info.channels * out.info.bits_per_sample / 8;
    out.info.frames = out.data_size / frame_bytes;
    if (out.info.frames < 1) fail(strfmt("%s: empty data chunk", path.c_str()));
    return out;
}

}  // namespace detail

// Header-only scan; cheap enough to run over a whole manifest for stats.
inline WavInfo wav_info(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(strfmt("%s: cannot open file", path.c_str()));
    return detail::parse_wav_header(f, path).info;
}

inline WavData read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(strfmt("%s: cannot open file", path.c_str()));
    const auto chunks = detail::parse_wav_header(f, path);
    const WavInfo& info = chunks.info;

    f.clear();
    f.seekg(chunks.data_offset);
    std::vector<unsigned char> raw(static_cast<size_t>(chunks.data_size));
    f.read(reinterpret_cast<char*>(raw.data()), chunks.data_size);
    if (f.gcount() != chunks.data_size) fail(strfmt("%s: truncated data chunk", path.c_str()));

    WavData out;
    out.sample_rate = info.sample_rate;
    out.channels = info.channels;
    const int64_t n = info.frames * info.channels;
    out.samples.resize(static_cast<size_t>(n));
    if (info.bits_per_sample == 16) {
        for (int64_t i = 0; i < n; ++i) {
            const unsigned char* p = &raw[static_cast<size_t>(i) * 2];
            const int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
            out.samples[static_cast<size_t>(i)] = static_cast<float>(s) / 32768.0f;
        }
    } else {  // 24-bit
        for (int64_t i = 0; i < n; ++i) {
            const unsigned char* p = &raw[static_cast<size_t>(i) * 3];
            int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
            if (s & 0x800000) s |= ~0xFFFFFF;  // sign extend
            out.samples[static_cast<size_t>(i)] = static_cast<float>(s) / 8388608.0f;
        }
    }
    return out;
}

// Writes integer PCM (16 or 24 bit). Input is interleaved floats in [-1, 1];
// values outside are clamped.
inline void write_wav(const std::string& path, const std::vector<float>& samples,
                      int sample_rate, int channels = 1, int bits = 16) {
    if (channels < 1 || (bits != 16 && bits != 24)) {
        fail(strfmt("%s: unsupported write format", path.c_str()));
    }
    const int bytes = bits / 8;
    const uint32_t data_size = static_cast<uint32_t>(samples.size() * static_cast<size_t>(bytes));
    const uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * channels * bytes;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(strfmt("%s: cannot open for writing", path.c_str()));

    auto w_u32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto w_u16 = [&](uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };

    f.write("RIFF", 4);
    w_u32(36 + data_size);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    w_u32(16);
    w_u16(1);  // PCM
    w_u16(static_cast<uint16_t>(channels));
    w_u32(static_cast<uint32_t>(sample_rate));
    w_u32(byte_rate);
    w_u16(static_cast<uint16_t>(channels * bytes));
    w_u16(static_cast<uint16_t>(bits));
    f.write("data", 4);
    w_u32(data_size);

    const double scale = bits == 16 ? 32767.0 : 8388607.0;
    for (float s : samples) {
        double v = s;
        if (v > 1.0) v = 1.0;
        if (v < -1.0) v = -1.0;
        const int32_t q = static_cast<int32_t>(std::lround(v * scale));
        unsigned char b[3] = {static_cast<unsigned char>(q), static_cast<unsigned char>(q >> 8),
                              static_cast<unsigned char>(q >> 16)};
        f.write(reinterpret_cast<char*>(b), bytes);
    }
    if (!f) fail(strfmt("%s: write failed", path.c_str()));
}

}  // namespace wingbeat
