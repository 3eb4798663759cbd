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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "wingbeat/features.hpp"
#include "wingbeat/fft.hpp"

using namespace wingbeat;

namespace {

AudioClip clip_of(std::vector<float> samples, int rate = 8000, int label = 0) {
    AudioClip c;
    c.samples = std::move(samples);
    c.sample_rate = rate;
    c.species = SpeciesLabel(label);
    c.source_id = "test";
    return c;
}

// independent scalar mel oracle for filterbank checks
double oracle_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double oracle_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

TEST_CASE("fft matches the direct DFT for power-of-two and odd sizes") {
    Rng rng(11);
    for (size_t n : {8u, 16u, 64u, 243u, 1024u, 1028u}) {
        std::vector<std::complex<double>> x(n);
        for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        auto expected = testutil::naive_dft(x);
        auto got = x;
        fft::transform(got, false);
        double worst = 0.0;
        for (size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(got[k] - expected[k]));
        CHECK(worst < 1e-8);

        // inverse undoes forward
        fft::transform(got, true);
        double rt = 0.0;
        for (size_t k = 0; k < n; ++k) rt = std::max(rt, std::abs(got[k] - x[k]));
        CHECK(rt < 1e-10);
    }
}

TEST_CASE("table 2: the eleven configurations") {
    const FeatureConfig c8 = FeatureConfig::from_table(8);
    CHECK(c8.n_bands == 60);
    CHECK(c8.n_frames == 40);
    CHECK(c8.hop_length == 256);
    CHECK(c8.window_size == 1024);
    CHECK(c8.sample_rate == 8000);
    CHECK(c8.patch_overlap == 0.5);

    CHECK(FeatureConfig::from_table(1).n_bands == 20);
    CHECK(FeatureConfig::from_table(5).n_frames == 20);
    CHECK(FeatureConfig::from_table(7).hop_length == 64);
    CHECK(FeatureConfig::from_table(10).window_size == 512);
    CHECK(FeatureConfig::from_table(11).window_size == 2048);
    CHECK_THROWS_WITH_AS(FeatureConfig::from_table(12), doctest::Contains("unknown"), Error);
    CHECK_THROWS_WITH_AS(FeatureConfig::from_table(0), doctest::Contains("unknown"), Error);
}

TEST_CASE("stft: 1 kHz tone peaks at bin 128 in every frame") {
    // 1000/8000 * 1024 = 128 exactly
    const auto clip = clip_of(testutil::sine(1000.0, 8000, 1.0, 1.0));
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const Tensor<double> p = stft_power(clip, cfg);
    CHECK(p.rows() == 513);
    const int T = p.cols();
    CHECK(T == (8000 - 1024) / 256 + 1);
    for (int t = 0; t < T; ++t) {
        int argmax = 0;
        for (int k = 1; k < p.rows(); ++k) {
            if (p.at(k, t) > p.at(argmax, t)) argmax = k;
        }
        CHECK(argmax == 128);
    }
}

TEST_CASE("stft: all-zero clip of one window gives a single zero frame") {
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const auto clip = clip_of(std::vector<float>(1024, 0.0f));
    const Tensor<double> p = stft_power(clip, cfg);
    CHECK(p.cols() == 1);
    for (double v : p.v) CHECK(v == 0.0);
}

TEST_CASE("stft: frame-count formula on random lengths") {
    Rng rng(3);
    FeatureConfig cfg = FeatureConfig::from_table(8);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t len = 1024 + static_cast<int64_t>(rng.below(20000));
        const auto clip = clip_of(std::vector<float>(static_cast<size_t>(len), 0.1f));
        CHECK(stft_power(clip, cfg).cols() == static_cast<int>((len - 1024) / 256 + 1));
    }
}

TEST_CASE("stft: the literal 1028-sample window works via the chirp transform") {
    FeatureConfig cfg;
    cfg.n_bands = 60;
    cfg.n_frames = 40;
    cfg.hop_length = 256;
    cfg.window_size = 1028;
    const auto clip = clip_of(testutil::sine(1000.0, 8000, 0.5, 1.0));
    const Tensor<double> p = stft_power(clip, cfg);
    CHECK(p.rows() == 515);
    CHECK(p.cols() == static_cast<int>((4000 - 1028) / 256 + 1));
    // 1000 Hz lands at bin 128.5; the peak must be 128 or 129
    int argmax = 0;
    for (int k = 1; k < p.rows(); ++k) {
        if (p.at(k, 0) > p.at(argmax, 0)) argmax = k;
    }
    CHECK(argmax >= 128);
    CHECK(argmax <= 129);
}

TEST_CASE("stft: clip shorter than a window is an error") {
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const auto clip = clip_of(std::vector<float>(1023, 0.1f));
    CHECK_THROWS_WITH_AS(stft_power(clip, cfg), doctest::Contains("shorter"), Error);
}

TEST_CASE("mel filterbank: config 8 weight shape and coverage") {
    const FeatureConfig cfg = FeatureConfig::from_table(8);
    const MelFilterbank fb = build_mel_filterbank(cfg);
    CHECK(fb.weights.rows() == 60);
    CHECK(fb.weights.cols() == 513);

    for (int b = 0; b < 60; ++b) {
        bool any = false;
        for (int k = 0; k < 513; ++k) {
            CHECK(fb.weights.at(b, k) >= 0.0);
            any = any || fb.weights.at(b, k) > 0.0;
        }
        CHECK(any);
        if (b > 0) CHECK(fb.band_centers_hz[b] > fb.band_centers_hz[b - 1]);
    }

    // every bin strictly between the first and last center is covered
    const double df = 8000.0 / 1024.0;
    for (int k = 0; k < 513; ++k) {
        const double f = k * df;
        if (f > fb.band_centers_hz.front() && f < fb.band_centers_hz.back()) {
            double col = 0.0;
            for (int b = 0; b < 60; ++b) col += fb.weights.at(b, k);
            CHECK(col > 0.0);
        }
    }
}

TEST_CASE("mel filterbank: 2-band centers match the closed-form oracle") {
    FeatureConfig cfg;
    cfg.n_bands = 2;
    cfg.n_frames = 20;
    cfg.hop_length = 128;
    cfg.window_size = 512;
    const MelFilterbank fb = build_mel_filterbank(cfg);
    REQUIRE(fb.band_centers_hz.size() == 2);
    const double mel_max = oracle_mel(4000.0);
    CHECK(fb.band_centers_hz[0] == doctest::Approx(oracle_hz(mel_max / 3.0)).epsilon(1e-9));
    CHECK(fb.band_centers_hz[1] == doctest::Approx(oracle_hz(2.0 * mel_max / 3.0)).epsilon(1e-9));
}

TEST_CASE("mel filterbank: too many bands for the window is an error") {
    FeatureConfig cfg;
    cfg.n_bands = 256;
    cfg.window_size = 512;
    cfg.hop_length = 128;
    CHECK_THROWS_AS(build_mel_filterbank(cfg), Error);
}

TEST_CASE("normalize_db: endpoints exact, midpoint, clamping") {
    CHECK(normalize_db(-80.0) == 0.0);
    CHECK(normalize_db(0.0) == 1.0);
    CHECK(normalize_db(-40.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(normalize_db(-120.0) == 0.0);  // floor clamp
    CHECK(normalize_db(5.0) == 1.0);     // ceiling clamp
}

TEST_CASE("mel_db_normalize: dB anchor points through the pipeline") {
    FeatureConfig cfg;
    cfg.n_bands = 1;
    cfg.n_frames = 4;
    cfg.window_size = 512;
    cfg.hop_length = 128;
    const MelFilterbank fb = build_mel_filterbank(cfg);

    // columns proportional to 1, 1e-4, 1e-9, 0  ->  0 dB, -40 dB, floor, floor
    Tensor<double> power({fb.weights.cols(), 4});
    for (int k = 0; k < power.rows(); ++k) {
        const double base = fb.weights.at(0, k) > 0.0 ? 1.0 : 0.0;
        power.at(k, 0) = base;
        power.at(k, 1) = base * 1e-4;
        power.at(k, 2) = base * 1e-9;
        power.at(k, 3) = 0.0;
    }
    const Tensor<double> out = mel_db_normalize(power, fb, cfg.db_floor);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(out.at(0, 2) == 0.0);
    CHECK(out.at(0, 3) == 0.0);
}

TEST_CASE("mel_db_normalize: silence maps to all zeros") {
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const MelFilterbank fb = build_mel_filterbank(cfg);
    Tensor<double> power({513, 3});
    const Tensor<double> out = mel_db_normalize(power, fb);
    for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("mel_db_normalize: monotone in the mel power") {
    Rng rng(5);
    FeatureConfig cfg;
    cfg.n_bands = 8;
    cfg.n_frames = 4;
    cfg.window_size = 512;
    cfg.hop_length = 128;
    const MelFilterbank fb = build_mel_filterbank(cfg);
    Tensor<double> power({fb.weights.cols(), 6});
    for (auto& v : power.v) v = rng.uniform() * rng.uniform();

    // recompute the mel projection to compare orderings
    Tensor<double> mel({8, 6});
    for (int b = 0; b < 8; ++b) {
        for (int t = 0; t < 6; ++t) {
            double acc = 0.0;
            for (int k = 0; k < power.rows(); ++k) acc += fb.weights.at(b, k) * power.at(k, t);
            mel.at(b, t) = acc;
        }
    }
    const Tensor<double> out = mel_db_normalize(power, fb);
    for (size_t a = 0; a < mel.v.size(); ++a) {
        for (size_t b = a + 1; b < mel.v.size(); ++b) {
            if (mel.v[a] >= mel.v[b] && mel.v[b] > 0.0) {
                CHECK(out.v[a] >= out.v[b]);
            }
        }
    }
}

TEST_CASE("patchify: worked examples and the count formula") {
    FeatureConfig cfg = FeatureConfig::from_table(8);  // 40 frames, overlap 0.5

    auto spec_of = [&](int T) {
        Tensor<double> s({60, T});
        for (int b = 0; b < 60; ++b) {
            for (int t = 0; t < T; ++t) s.at(b, t) = t;  // column index as value
        }
        return s;
    };

    SUBCASE("T = 79 gives 2 patches at frames 0 and 20") {
        const auto patches = patchify(spec_of(79), cfg, SpeciesLabel(0), "x");
        REQUIRE(patches.size() == 2);
        CHECK(patches[0].values.at(0, 0) == 0.0f);
        CHECK(patches[1].values.at(0, 0) == 20.0f);
        CHECK(patches[0].patch_index == 0);
        CHECK(patches[1].patch_index == 1);
    }
    SUBCASE("T = 40 gives exactly one patch") {
        CHECK(patchify(spec_of(40), cfg, SpeciesLabel(0), "x").size() == 1);
    }
    SUBCASE("T = 100 gives 4 patches at 0, 20, 40, 60") {
        const auto patches = patchify(spec_of(100), cfg, SpeciesLabel(0), "x");
        REQUIRE(patches.size() == 4);
        for (size_t p = 0; p < 4; ++p) {
            CHECK(patches[p].values.at(0, 0) == doctest::Approx(20.0 * p));
        }
    }
    SUBCASE("T below the patch length gives no patches") {
        CHECK(patchify(spec_of(39), cfg, SpeciesLabel(0), "x").empty());
    }
}

TEST_CASE("patchify: randomized count formula") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        FeatureConfig cfg;
        cfg.n_bands = 4;
        cfg.n_frames = 2 + static_cast<int>(rng.below(40));
        cfg.window_size = 64;
        cfg.hop_length = 16;
        cfg.patch_overlap = rng.uniform(0.0, 0.9);
        const int T = cfg.n_frames + static_cast<int>(rng.below(200));
        Tensor<double> spec({cfg.n_bands, T});
        const auto patches = patchify(spec, cfg, SpeciesLabel(0), "x");
        int64_t stride = static_cast<int64_t>(cfg.n_frames * (1.0 - cfg.patch_overlap));
        if (stride < 1) stride = 1;
        CHECK(static_cast<int64_t>(patches.size()) == (T - cfg.n_frames) / stride + 1);
    }
}

TEST_CASE("extract_features: one patch from window + 39 hops, purity, warnings") {
    FeatureConfig cfg = FeatureConfig::from_table(8);

    SUBCASE("exact one-patch clip") {
        const auto clip = clip_of(testutil::sine(700.0, 8000, (1024.0 + 39 * 256) / 8000.0));
        CHECK(static_cast<int>(clip.samples.size()) == 1024 + 39 * 256);
        const ExtractResult r = extract_features({clip}, cfg);
        REQUIRE(r.patches.size() == 1);
        CHECK(r.patches[0].values.rows() == 60);
        CHECK(r.patches[0].values.cols() == 40);
        CHECK(r.warnings.empty());
    }
    SUBCASE("empty clip list") {
        CHECK(extract_features({}, cfg).patches.empty());
    }
    SUBCASE("two identical clips differ only in source id") {
        auto a = clip_of(testutil::sine(500.0, 8000, 2.0));
        auto b = a;
        a.source_id = "first";
        b.source_id = "second";
        const ExtractResult r = extract_features({a, b}, cfg);
        REQUIRE(r.patches.size() % 2 == 0);
        const size_t half = r.patches.size() / 2;
        for (size_t i = 0; i < half; ++i) {
            CHECK(r.patches[i].values.v == r.patches[i + half].values.v);
            CHECK(r.patches[i].source_id == "first");
            CHECK(r.patches[i + half].source_id == "second");
        }
    }
    SUBCASE("too-short clip warns instead of failing") {
        const auto good = clip_of(testutil::sine(500.0, 8000, 2.0));
        const auto tiny = clip_of(std::vector<float>(100, 0.1f));
        const ExtractResult r = extract_features({tiny, good}, cfg);
        CHECK(!r.patches.empty());
        REQUIRE(r.warnings.size() == 1);
        CHECK(r.warnings[0].find("window") != std::string::npos);
    }
}

TEST_CASE("normalization bounds hold for arbitrary noise audio") {
    Rng rng(23);
    FeatureConfig cfg = FeatureConfig::from_table(8);
    std::vector<float> noise(16000);
    for (auto& v : noise) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const ExtractResult r = extract_features({clip_of(std::move(noise))}, cfg);
    REQUIRE(!r.patches.empty());
    for (const auto& p : r.patches) {
        for (float v : p.values.v) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("tone localization: argmax band center lands within one band spacing") {
    Rng rng(29);
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const MelFilterbank fb = build_mel_filterbank(cfg);
    for (int trial = 0; trial < 8; ++trial) {
        const double f = rng.uniform(300.0, 3500.0);
        const auto clip = clip_of(testutil::sine(f, 8000, 0.5, 1.0));
        const Tensor<double> norm = mel_db_normalize(stft_power(clip, cfg), fb);
        // average over frames, then argmax band
        int argmax = 0;
        double best = -1.0;
        for (int b = 0; b < cfg.n_bands; ++b) {
            double acc = 0.0;
            for (int t = 0; t < norm.cols(); ++t) acc += norm.at(b, t);
            if (acc > best) {
                best = acc;
                argmax = b;
            }
        }
        const double lo = argmax > 0 ? fb.band_centers_hz[argmax - 1] : 0.0;
        const double hi = argmax + 1 < cfg.n_bands ? fb.band_centers_hz[argmax + 1] : 4000.0;
        const double spacing = std::max(fb.band_centers_hz[argmax] - lo,
                                        hi - fb.band_centers_hz[argmax]);
        CHECK(std::fabs(fb.band_centers_hz[argmax] - f) <= spacing);
    }
}

TEST_CASE("patch cache round trip") {
    testutil::TempDir dir("cache");
    FeatureConfig cfg = FeatureConfig::from_table(8);
    const auto clip = clip_of(testutil::sine(600.0, 8000, 2.0), 8000, 3);
    ExtractResult r = extract_features({clip}, cfg);
    REQUIRE(!r.patches.empty());

    const std::string path = dir.file("patches.wbpc");
    write_patch_cache(path, cfg, r.patches);
    const PatchCache cache = read_patch_cache(path);
    CHECK(cache.config.id == cfg.id);
    CHECK(cache.config.n_bands == cfg.n_bands);
    CHECK(cache.config.hop_length == cfg.hop_length);
    REQUIRE(cache.patches.size() == r.patches.size());
    for (size_t i = 0; i < r.patches.size(); ++i) {
        CHECK(cache.patches[i].values.v == r.patches[i].values.v);
        CHECK(cache.patches[i].label == r.patches[i].label);
        CHECK(cache.patches[i].patch_index == r.patches[i].patch_index);
        CHECK(cache.patches[i].source_id == r.patches[i].source_id);
    }

    // refuse a non-cache file
    const std::string junk = dir.file("junk.bin");
    std::ofstream(junk) << "not a cache";
    CHECK_THROWS_AS(read_patch_cache(junk), Error);
}
