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

#include <cstdlib>
#include <limits>

#include "test_util.hpp"
#include "wingbeat/checkpoint.hpp"
#include "wingbeat/experiment.hpp"
#include "wingbeat/models.hpp"

using namespace wingbeat;
using testutil::TempDir;

namespace {

std::string synth_two_class(const TempDir& dir, double seconds, int files = 1,
                            uint64_t seed = 3) {
    SynthSpec spec;
    spec.classes.push_back({species::kPositive, 500.0, 4});
    spec.classes.push_back({species::find("Anopheles_freeborni"), 700.0, 4});
    spec.snr_db = 20.0;
    spec.files_per_class = files;
    spec.seconds_per_file = seconds;
    spec.seed = seed;
    return generate_synthetic(spec, dir.str());
}

int run_cli(const std::string& args) {
    const char* cli = std::getenv("WINGBEAT_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "WINGBEAT_CLI must point at the CLI binary");
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

int count_lines(const std::string& text, const std::string& prefix_filter = "") {
    int n = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        if (!line.empty() &&
            (prefix_filter.empty() || line.rfind(prefix_filter, 0) == 0)) {
            ++n;
        }
        pos = end + 1;
    }
    return n;
}

}  // namespace

TEST_CASE("run config file: parsing, overrides, unknown keys") {
    TempDir dir("runcfg");
    const std::string path = dir.file("run.cfg");
    {
        std::ofstream f(path);
        f << "# comment line\n"
          << "manifest = data/manifest.csv\n"
          << "config_id = 3\n"
          << "strategy = ensemble\n"
          << "thresholds = 0.5;0.9\n"
          << "epochs = 4\n"
          << "batch_size = 16\n"
          << "folds = 5\n"
          << "seed = 77\n"
          << "group_by_file = true\n";
    }
    const RunConfig cfg = parse_run_config_file(path);
    CHECK(cfg.manifest == "data/manifest.csv");
    CHECK(cfg.feature.id == 3);
    CHECK(cfg.feature.n_bands == 60);
    CHECK(cfg.feature.hop_length == 128);
    CHECK(cfg.strategy == Strategy::Ensemble);
    CHECK(cfg.thresholds == std::vector<double>{0.5, 0.9});
    CHECK(cfg.epochs == 4);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.k == 5);
    CHECK(cfg.seed == 77);
    CHECK(cfg.group_by_file);

    const std::string bad = dir.file("bad.cfg");
    std::ofstream(bad) << "not_a_key = 1\n";
    CHECK_THROWS_WITH_AS(parse_run_config_file(bad), doctest::Contains("unknown key"), Error);

    const std::string custom = dir.file("custom.cfg");
    std::ofstream(custom) << "n_bands = 20\nn_frames = 20\nwindow_size = 1028\n";
    const RunConfig c2 = parse_run_config_file(custom);
    CHECK(c2.feature.id == 0);  // custom combination
    CHECK(c2.feature.window_size == 1028);
}

TEST_CASE("run_experiment: binary protocol produces one row per fold") {
    TempDir data("pm");
    TempDir out("pmout");
    const std::string manifest = synth_two_class(data, 10.0);

    RunConfig cfg;
    cfg.manifest = manifest;
    cfg.feature = FeatureConfig::from_table(8);
    cfg.strategy = Strategy::Binary;
    cfg.epochs = 1;
    cfg.k = 10;
    cfg.seed = 5;
    cfg.out_dir = out.str();
    const ExperimentOutputs files = run_experiment(cfg);

    const std::string csv = testutil::read_file(files.folds_csv);
    CHECK(count_lines(csv, "# manifest") == 1);  // embedded run config
    REQUIRE(csv.find(kFoldCsvHeader) != std::string::npos);
    // 10 data rows, one per fold
    int rows = 0;
    for (int fold = 0; fold < 10; ++fold) {
        rows += csv.find(strfmt("\n%d,binary,,Aedes_aegypti,", fold)) != std::string::npos;
    }
    CHECK(rows == 10);

    const auto summary = nlohmann::json::parse(testutil::read_file(files.summary_json));
    CHECK(summary.at("run").at("strategy") == "binary");
    CHECK(summary.at("run").at("config_id") == "8");
    CHECK(summary.at("run").at("optimizer") == "rmsprop");
    CHECK(summary.at("results").at("folds").size() == 10);
    CHECK(summary.at("n_patches").get<int>() > 0);
}

TEST_CASE("run_experiment: bit-identical reports for the same seed") {
    TempDir data("det");
    TempDir out1("det1"), out2("det2"), out3("det3");
    const std::string manifest = synth_two_class(data, 8.0);

    RunConfig cfg;
    cfg.manifest = manifest;
    cfg.feature = FeatureConfig::from_table(8);
    cfg.strategy = Strategy::Binary;
    cfg.epochs = 1;
    cfg.k = 3;
    cfg.seed = 13;
    cfg.out_dir = out1.str();
    const ExperimentOutputs a = run_experiment(cfg);
    cfg.out_dir = out2.str();
    const ExperimentOutputs b = run_experiment(cfg);

    CHECK(testutil::read_file(a.folds_csv) == testutil::read_file(b.folds_csv));
    CHECK(testutil::read_file(a.summary_json) == testutil::read_file(b.summary_json));

    // a different seed produces a different report
    cfg.seed = 14;
    cfg.out_dir = out3.str();
    const ExperimentOutputs c = run_experiment(cfg);
    CHECK(testutil::read_file(a.folds_csv) != testutil::read_file(c.folds_csv));
}

TEST_CASE("run_experiment: missing audio names the path, no partial outputs") {
    TempDir dir("missing");
    const std::string manifest = dir.file("m.csv");
    std::ofstream(manifest) << "file_path,species,segments\nghost.wav,Aedes_aegypti,\n";

    RunConfig cfg;
    cfg.manifest = manifest;
    cfg.out_dir = dir.file("out");
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("ghost.wav"), Error);
    CHECK_FALSE(std::filesystem::exists(dir.file("out/folds.csv")));
    CHECK_FALSE(std::filesystem::exists(dir.file("out/summary.json")));
}

TEST_CASE("run_experiment: ensemble emits threshold and base rows") {
    TempDir data("ens");
    TempDir out("ensout");
    SynthSpec spec;
    spec.classes.push_back({species::kPositive, 500.0, 3});
    spec.classes.push_back({1, 900.0, 3});
    spec.classes.push_back({2, 1600.0, 3});
    spec.snr_db = 25.0;
    spec.files_per_class = 1;
    spec.seconds_per_file = 6.0;
    spec.seed = 21;
    const std::string manifest = generate_synthetic(spec, data.str());

    RunConfig cfg;
    cfg.manifest = manifest;
    cfg.feature.n_bands = 20;
    cfg.feature.n_frames = 20;
    cfg.feature.id = 0;
    cfg.strategy = Strategy::Ensemble;
    cfg.thresholds = {0.5, 0.9};
    cfg.epochs = 2;
    cfg.k = 2;
    cfg.seed = 9;
    cfg.out_dir = out.str();
    const ExperimentOutputs files = run_experiment(cfg);

    const std::string csv = testutil::read_file(files.folds_csv);
    CHECK(csv.find(",ensemble,0.50,Aedes_aegypti,") != std::string::npos);
    CHECK(csv.find(",ensemble,0.90,Aedes_aegypti,") != std::string::npos);
    CHECK(csv.find(",ensemble_base,,Aedes_albopictus,") != std::string::npos);
    CHECK(csv.find(",ensemble_base,,Aedes_mediovittatus,") != std::string::npos);

    const auto summary = nlohmann::json::parse(testutil::read_file(files.summary_json));
    CHECK(summary.at("results").at("thresholds").size() == 2);
    CHECK(summary.at("results").at("base_models").size() == 2);
}

TEST_CASE("sweep: eleven configurations, determinism, bad ids") {
    TempDir data("sweep");
    TempDir out1("sweep1"), out2("sweep2");
    const std::string manifest = synth_two_class(data, 6.0);

    RunConfig base;
    base.manifest = manifest;
    base.epochs = 1;
    base.k = 2;
    base.seed = 3;
    base.out_dir = out1.str();

    const SweepOutputs s1 = run_fft_sweep(base, "Anopheles_freeborni");
    const std::string csv = testutil::read_file(s1.sweep_csv);
    // header + 11 config rows
    for (int id = 1; id <= 11; ++id) {
        CHECK(csv.find(strfmt("\n%d,", id)) != std::string::npos);
    }
    CHECK(csv.find("accuracy_mean") != std::string::npos);

    base.out_dir = out2.str();
    const SweepOutputs s2 = run_fft_sweep(base, "Anopheles_freeborni");
    CHECK(testutil::read_file(s1.sweep_csv) == testutil::read_file(s2.sweep_csv));

    CHECK_THROWS_WITH_AS(run_fft_sweep(base, "Anopheles_freeborni", {12}),
                         doctest::Contains("unknown feature configuration id 12"), Error);
    CHECK_THROWS_WITH_AS(run_fft_sweep(base, "Not_a_species"), doctest::Contains("unknown"),
                         Error);
}

TEST_CASE("cli: synth + stats + extract + evaluate round trip") {
    TempDir dir("cli");
    const std::string data_dir = dir.file("data");
    const std::string out_dir = dir.file("out");

    CHECK(run_cli("synth --fundamental 500 --fundamental 700 --seconds 8 "
                  "--files-per-class 1 --seed 3 --out " +
                  data_dir) == 0);
    CHECK(std::filesystem::exists(data_dir + "/manifest.csv"));

    CHECK(run_cli("stats --manifest " + data_dir + "/manifest.csv --out " + out_dir) == 0);
    CHECK(std::filesystem::exists(out_dir + "/stats.csv"));
    const std::string stats = testutil::read_file(out_dir + "/stats.csv");
    CHECK(stats.find("Aedes_aegypti,1,8.00") != std::string::npos);

    CHECK(run_cli("extract --manifest " + data_dir + "/manifest.csv --config-id 8 --out " +
                  out_dir) == 0);
    const PatchCache cache = read_patch_cache(out_dir + "/patches_config8.wbpc");
    CHECK(cache.config.id == 8);
    CHECK(!cache.patches.empty());

    CHECK(run_cli("evaluate --manifest " + data_dir +
                  "/manifest.csv --config-id 8 --strategy binary --epochs 1 --folds 2 "
                  "--seed 5 --out " +
                  out_dir) == 0);
    CHECK(std::filesystem::exists(out_dir + "/folds.csv"));
    CHECK(std::filesystem::exists(out_dir + "/summary.json"));
}

TEST_CASE("cli: train writes loadable checkpoints for all strategies") {
    TempDir dir("clitrain");
    const std::string data_dir = dir.file("data");
    CHECK(run_cli("synth --fundamental 500 --fundamental 900 --fundamental 1600 --seconds 6 "
                  "--files-per-class 1 --seed 7 --out " +
                  data_dir) == 0);

    const std::string feat = " --bands 20 --frames 20 --epochs 1 --seed 2 ";
    const std::string bin_out = dir.file("bin");
    CHECK(run_cli("train --manifest " + data_dir + "/manifest.csv --strategy binary" + feat +
                  "--out " + bin_out) == 0);
    const LoadedModel binary = load_model(bin_out + "/binary.wbnn");
    CHECK(binary.metadata.at("strategy") == "binary");
    CHECK(binary.net.output_size() == 2);

    const std::string ens_out = dir.file("ens");
    CHECK(run_cli("train --manifest " + data_dir + "/manifest.csv --strategy ensemble" + feat +
                  "--threshold 0.9 --out " + ens_out) == 0);
    const EnsembleModel ensemble = load_ensemble(ens_out + "/ensemble.manifest");
    CHECK(ensemble.n_voters() == 2);
    CHECK(ensemble.vote_threshold == doctest::Approx(0.9));
}

TEST_CASE("synthetic audio: classes occupy distinct mel bands") {
    TempDir dir("synthbands");
    const std::string manifest = synth_two_class(dir, 4.0);
    const FeatureConfig cfg = FeatureConfig::from_table(8);
    const MelFilterbank fb = build_mel_filterbank(cfg);
    const auto clips = decode_all(load_manifest(manifest), cfg.sample_rate);
    REQUIRE(clips.size() == 2);

    auto argmax_band = [&](const AudioClip& clip) {
        const Tensor<double> norm = mel_db_normalize(stft_power(clip, cfg), fb);
        int band = 0;
        double best = -1.0;
        for (int b = 0; b < cfg.n_bands; ++b) {
            double acc = 0.0;
            for (int t = 0; t < norm.cols(); ++t) acc += norm.at(b, t);
            if (acc > best) {
                best = acc;
                band = b;
            }
        }
        return band;
    };
    const int band_500 = argmax_band(clips[0]);
    const int band_700 = argmax_band(clips[1]);
    CHECK(band_500 != band_700);
    // each argmax band center sits within a band spacing of its fundamental
    CHECK(std::fabs(fb.band_centers_hz[static_cast<size_t>(band_500)] - 500.0) < 120.0);
    CHECK(std::fabs(fb.band_centers_hz[static_cast<size_t>(band_700)] - 700.0) < 120.0);
}

TEST_CASE("synthetic audio: noiseless files peak exactly on a harmonic") {
    TempDir dir("synthinf");
    SynthSpec spec;
    spec.classes.push_back({species::kPositive, 500.0, 4});
    spec.snr_db = std::numeric_limits<double>::infinity();
    spec.files_per_class = 1;
    spec.seconds_per_file = 1.0;
    spec.seed = 9;
    const std::string manifest = generate_synthetic(spec, dir.str());
    const auto clips = decode_all(load_manifest(manifest), 8000);
    REQUIRE(clips.size() == 1);

    // direct-DFT oracle over one 1024-sample frame: the dominant bin must
    // sit on a multiple of 500 Hz (bin width 8000/1024)
    std::vector<float> frame(clips[0].samples.begin(), clips[0].samples.begin() + 1024);
    const int bin = testutil::dominant_bin(frame);
    const double freq = bin * 8000.0 / 1024.0;
    double nearest = 1e9;
    for (int h = 1; h <= 4; ++h) nearest = std::min(nearest, std::fabs(freq - 500.0 * h));
    CHECK(nearest <= 8000.0 / 1024.0);
}

TEST_CASE("synthetic audio: a window-length file yields exactly one frame") {
    TempDir dir("synth1f");
    SynthSpec spec;
    spec.classes.push_back({species::kPositive, 500.0, 2});
    spec.files_per_class = 1;
    spec.seconds_per_file = 1024.0 / 8000.0;
    spec.seed = 2;
    const std::string manifest = generate_synthetic(spec, dir.str());
    const auto clips = decode_all(load_manifest(manifest), 8000);
    REQUIRE(clips.size() == 1);
    CHECK(clips[0].samples.size() == 1024);
    CHECK(stft_power(clips[0], FeatureConfig::from_table(8)).cols() == 1);
}

TEST_CASE("cli: failures exit nonzero") {
    TempDir dir("clifail");
    CHECK(run_cli("evaluate --manifest /does/not/exist.csv") != 0);
    const std::string manifest = dir.file("m.csv");
    std::ofstream(manifest) << "file_path,species,segments\nghost.wav,Aedes_aegypti,\n";
    CHECK(run_cli("evaluate --manifest " + manifest + " --epochs 1") != 0);
    CHECK(run_cli("synth --fundamental 5000 --out " + dir.file("s")) != 0);  // over Nyquist
    CHECK(run_cli("bogus-verb") != 0);
}
