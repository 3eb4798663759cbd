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

//
// End-to-end experiment runner: manifest -> decode -> features ->
// cross-validation -> reports. Also the parameter-grid sweep and the
// run-config file format (flat `key = value` lines, `#` comments).
//
// Every output embeds the full run configuration and the fixed pipeline
// choices, and runs are bit-reproducible given (inputs, seed).
//

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wingbeat/audio.hpp"
#include "wingbeat/common.hpp"
#include "wingbeat/evaluation.hpp"
#include "wingbeat/features.hpp"
#include "wingbeat/manifest.hpp"
#include "wingbeat/report.hpp"
#include "wingbeat/synth.hpp"

namespace wingbeat {

struct RunConfig {
    std::string manifest;
    FeatureConfig feature = FeatureConfig::from_table(8);
    Strategy strategy = Strategy::Binary;
    std::vector<double> thresholds = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
    int epochs = 10;
    int batch_size = 32;
    int k = 10;
    uint64_t seed = 0;
    std::string out_dir = ".";
    bool group_by_file = false;
    ArchOptions arch;

    TrainParams train_params() const {
        TrainParams p;
        p.epochs = epochs;
        p.batch_size = batch_size;
        p.seed = seed;
        return p;
    }

    CvOptions cv_options() const {
        CvOptions o;
        o.k = k;
        o.seed = seed;
        o.group_by_file = group_by_file;
        return o;
    }
};

// Fixed pipeline choices, recorded into every output for provenance.
inline MetaKv design_decision_values(const RunConfig& cfg) {
    return {
        {"mel_scale", "htk: mel = 2595*log10(1 + f/700)"},
        {"mel_filter_normalization", "area (integral over Hz = 1)"},
        {"stft_window", "hann_periodic"},
        {"db_reference", "per_spectrogram_max"},
        {"db_floor", strfmt("%.0f", cfg.feature.db_floor)},
        {"patch_overlap", strfmt("%.2f", cfg.feature.patch_overlap)},
        {"optimizer", "rmsprop"},
        {"learning_rate", "0.001"},
        {"rmsprop_rho", "0.9"},
        {"rmsprop_epsilon", "1e-7"},
        {"lr_warmup", "linear_first_epoch"},
        {"sigmoid_clamp", "1e-7"},
        {"weight_init", "glorot_uniform"},
        {"dropout_rate", strfmt("%.2f", cfg.arch.dropout_rate)},
        {"binary_head", cfg.arch.binary_softmax_head ? "softmax" : "sigmoid"},
        {"loss", "categorical_cross_entropy (outputs renormalized to sum 1)"},
        {"probability_clamp", "1e-12"},
        {"maxpool_tie_break", "first_row_major"},
        {"resampler", "windowed_sinc_kaiser_beta8_64taps"},
        {"fold_unit", cfg.group_by_file ? "file" : "patch"},
        {"stddev", "sample_n_minus_1"},
    };
}

inline MetaKv run_config_values(const RunConfig& cfg) {
    std::string thresholds;
    for (size_t i = 0; i < cfg.thresholds.size(); ++i) {
        thresholds += strfmt("%.2f", cfg.thresholds[i]);
        if (i + 1 < cfg.thresholds.size()) thresholds += ";";
    }
    return {
        {"manifest", cfg.manifest},
        {"config_id", std::to_string(cfg.feature.id)},
        {"n_bands", std::to_string(cfg.feature.n_bands)},
        {"n_frames", std::to_string(cfg.feature.n_frames)},
        {"hop_length", std::to_string(cfg.feature.hop_length)},
        {"window_size", std::to_string(cfg.feature.window_size)},
        {"sample_rate", std::to_string(cfg.feature.sample_rate)},
        {"strategy", to_string(cfg.strategy)},
        {"thresholds", thresholds},
        {"epochs", std::to_string(cfg.epochs)},
        {"batch_size", std::to_string(cfg.batch_size)},
        {"folds", std::to_string(cfg.k)},
        {"seed", std::to_string(cfg.seed)},
        {"group_by_file", cfg.group_by_file ? "true" : "false"},
    };
}

inline MetaKv full_metadata(const RunConfig& cfg) {
    MetaKv meta = run_config_values(cfg);
    const MetaKv design = design_decision_values(cfg);
    meta.insert(meta.end(), design.begin(), design.end());
    return meta;
}

inline nlohmann::json meta_to_json(const MetaKv& meta) {
    nlohmann::json j;
    for (const auto& [k, v] : meta) j[k] = v;
    return j;
}

// ---------------------------------------------------------------------------
// Run-config file: `key = value` lines, `#` comments, UTF-8.

inline RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(strfmt("cannot open run config %s", path.c_str()));
    RunConfig cfg;
    bool custom_feature = false;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            fail(strfmt("%s:%d: expected key = value", path.c_str(), lineno));
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        try {
            if (key == "manifest") {
                cfg.manifest = value;
            } else if (key == "config_id") {
                cfg.feature = FeatureConfig::from_table(std::stoi(value));
            } else if (key == "n_bands") {
                cfg.feature.n_bands = std::stoi(value);
                custom_feature = true;
            } else if (key == "n_frames") {
                cfg.feature.n_frames = std::stoi(value);
                custom_feature = true;
            } else if (key == "hop_length") {
                cfg.feature.hop_length = std::stoi(value);
                custom_feature = true;
            } else if (key == "window_size") {
                cfg.feature.window_size = std::stoi(value);
                custom_feature = true;
            } else if (key == "strategy") {
                cfg.strategy = strategy_from_string(value);
            } else if (key == "thresholds") {
                cfg.thresholds.clear();
                for (const auto& piece : detail::split(value, ';')) {
                    if (!detail::trim(piece).empty()) cfg.thresholds.push_back(std::stod(piece));
                }
            } else if (key == "epochs") {
                cfg.epochs = std::stoi(value);
            } else if (key == "batch_size") {
                cfg.batch_size = std::stoi(value);
            } else if (key == "folds") {
                cfg.k = std::stoi(value);
            } else if (key == "seed") {
                cfg.seed = static_cast<uint64_t>(std::stoull(value));
            } else if (key == "out") {
                cfg.out_dir = value;
            } else if (key == "group_by_file") {
                cfg.group_by_file = value == "true" || value == "1";
            } else if (key == "dropout_rate") {
                cfg.arch.dropout_rate = std::stod(value);
            } else if (key == "binary_head") {
                cfg.arch.binary_softmax_head = value == "softmax";
            } else {
                fail(strfmt("%s:%d: unknown key \"%s\"", path.c_str(), lineno, key.c_str()));
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail(strfmt("%s:%d: cannot parse value \"%s\" for key \"%s\"", path.c_str(), lineno,
                        value.c_str(), key.c_str()));
        }
    }
    if (custom_feature) cfg.feature.id = 0;
    cfg.feature.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline stages shared by the runner and the CLI.

struct PreparedData {
    Manifest manifest;
    std::vector<AudioClip> clips;
    ExtractResult extracted;
};

inline PreparedData prepare_data(const RunConfig& cfg) {
    PreparedData d;
    d.manifest = load_manifest(cfg.manifest);
    if (d.manifest.entries.empty()) fail(strfmt("manifest %s has no rows", cfg.manifest.c_str()));
    d.clips = decode_all(d.manifest, cfg.feature.sample_rate);
    d.extracted = extract_features(d.clips, cfg.feature);
    if (d.extracted.patches.empty()) {
        fail(strfmt("no patches extracted from %s (every clip too short?)", cfg.manifest.c_str()));
    }
    return d;
}

// Removes files registered with track() unless commit() was reached, so a
// failed run does not leave partial outputs behind.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const auto& p : paths_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }
    void track(const std::string& path) { paths_.push_back(path); }
    void commit() { committed_ = true; }

private:
    std::vector<std::string> paths_;
    bool committed_ = false;
};

struct ExperimentOutputs {
    std::string folds_csv;
    std::string summary_json;
};

// Dataset -> features -> cross-validation -> folds.csv + summary.json.
// Bit-identical outputs for identical (inputs, config, seed).
inline ExperimentOutputs run_experiment(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const PreparedData data = prepare_data(cfg);

    const MetaKv meta = full_metadata(cfg);
    nlohmann::json summary;
    summary["run"] = meta_to_json(meta);
    summary["warnings"] = data.extracted.warnings;
    summary["n_patches"] = data.extracted.patches.size();

    std::string csv;
    if (cfg.strategy == Strategy::Ensemble) {
        const EnsembleCvResult r = cross_validate_ensemble(
            data.extracted.patches, cfg.feature, cfg.train_params(), cfg.cv_options(),
            cfg.thresholds, cfg.arch);
        csv = fold_report_csv(r, meta);
        summary["results"] = to_json(r);
    } else {
        const CvResult r = cross_validate(cfg.strategy, data.extracted.patches, cfg.feature,
                                          cfg.train_params(), cfg.cv_options(), cfg.arch);
        csv = fold_report_csv(r, meta);
        summary["results"] = to_json(r);
    }

    ExperimentOutputs out;
    out.folds_csv = (std::filesystem::path(cfg.out_dir) / "folds.csv").string();
    out.summary_json = (std::filesystem::path(cfg.out_dir) / "summary.json").string();

    OutputGuard guard;
    guard.track(out.folds_csv);
    atomic_write(out.folds_csv, csv);
    guard.track(out.summary_json);
    atomic_write(out.summary_json, summary.dump(2) + "\n");
    guard.commit();
    return out;
}

// ---------------------------------------------------------------------------
// Parameter-grid sweep: the binary strategy over configuration ids, on a
// two-species subset (target vs one negative), emitting mean/std per metric
// per configuration.

struct SweepOutputs {
    std::string sweep_csv;
    std::string summary_json;
};

inline SweepOutputs run_fft_sweep(const RunConfig& base, const std::string& negative_species,
                                  std::vector<int> config_ids = {}) {
    if (config_ids.empty()) {
        for (int id = 1; id <= 11; ++id) config_ids.push_back(id);
    }
    const int neg = species::find(negative_species);
    if (neg < 0) fail(strfmt("sweep: unknown negative species \"%s\"", negative_species.c_str()));
    if (neg == species::kPositive) fail("sweep: negative species cannot be the target");

    std::filesystem::create_directories(base.out_dir);
    const Manifest manifest = load_manifest(base.manifest);
    Manifest subset = manifest;
    subset.entries.clear();
    for (const auto& e : manifest.entries) {
        if (e.species.index == species::kPositive || e.species.index == neg) {
            subset.entries.push_back(e);
        }
    }
    if (subset.entries.empty()) {
        fail(strfmt("sweep: manifest has no %s or %s rows",
                    std::string(species::name(species::kPositive)).c_str(),
                    negative_species.c_str()));
    }
    const std::vector<AudioClip> clips = decode_all(subset, base.feature.sample_rate);

    MetaKv meta = run_config_values(base);
    meta.emplace_back("sweep_negative_species", negative_species);
    {
        const MetaKv design = design_decision_values(base);
        meta.insert(meta.end(), design.begin(), design.end());
    }

    std::string csv = csv_preamble(meta);
    csv += "config_id,n_bands,n_frames,hop_length,window_size,"
           "accuracy_mean,accuracy_std,precision_mean,precision_std,"
           "recall_mean,recall_std,f1_mean,f1_std\n";

    nlohmann::json summary;
    summary["run"] = meta_to_json(meta);
    summary["configs"] = nlohmann::json::array();

    for (int id : config_ids) {
        const FeatureConfig fc = FeatureConfig::from_table(id);
        const ExtractResult ex = extract_features(clips, fc);
        if (ex.patches.empty()) {
            fail(strfmt("sweep config %d: no patches extracted", id));
        }
        RunConfig cfg = base;
        cfg.feature = fc;
        const CvResult r = cross_validate(Strategy::Binary, ex.patches, fc, cfg.train_params(),
                                          cfg.cv_options(), cfg.arch);
        csv += strfmt("%d,%d,%d,%d,%d,%s,%s,%s,%s,%s,%s,%s,%s\n", id, fc.n_bands, fc.n_frames,
                      fc.hop_length, fc.window_size, fmt_metric(r.mean.accuracy).c_str(),
                      fmt_metric(r.stddev.accuracy).c_str(), fmt_metric(r.mean.precision).c_str(),
                      fmt_metric(r.stddev.precision).c_str(), fmt_metric(r.mean.recall).c_str(),
                      fmt_metric(r.stddev.recall).c_str(), fmt_metric(r.mean.f1).c_str(),
                      fmt_metric(r.stddev.f1).c_str());
        nlohmann::json cj;
        cj["config_id"] = id;
        cj["mean"] = to_json(r.mean);
        cj["stddev"] = to_json(r.stddev);
        summary["configs"].push_back(cj);
    }

    SweepOutputs out;
    out.sweep_csv = (std::filesystem::path(base.out_dir) / "sweep.csv").string();
    out.summary_json = (std::filesystem::path(base.out_dir) / "sweep_summary.json").string();

    OutputGuard guard;
    guard.track(out.sweep_csv);
    atomic_write(out.sweep_csv, csv);
    guard.track(out.summary_json);
    atomic_write(out.summary_json, summary.dump(2) + "\n");
    guard.commit();
    return out;
}

}  // namespace wingbeat
