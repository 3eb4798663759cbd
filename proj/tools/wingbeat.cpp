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

// wingbeat CLI: mosquito wingbeat audio classification experiments.
//
//   stats     per-species file counts and post-curation durations
//   extract   write a patch cache for a (manifest, feature config) pair
//   train     train checkpoint(s) on the full manifest
//   evaluate  stratified cross-validation with fold reports
//   sweep     binary-classifier comparison across feature configurations
//   synth     generate a synthetic harmonic-tone dataset

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wingbeat/checkpoint.hpp"
#include "wingbeat/experiment.hpp"
#include "wingbeat/models.hpp"
#include "wingbeat/synth.hpp"

namespace {

using namespace wingbeat;

struct CommonArgs {
    std::string run_config_path;
    std::string manifest;
    int config_id = 0;
    int n_bands = 0, n_frames = 0, hop_length = 0, window_size = 0;
    std::string strategy;
    std::vector<double> thresholds;
    int epochs = -1, batch_size = -1, folds = -1;
    int64_t seed = -1;
    std::string out;
    bool group_by_file = false;
};

void add_common_options(CLI::App* cmd, CommonArgs& a, bool needs_manifest) {
    cmd->add_option("--run-config", a.run_config_path,
                    "run configuration file (key = value lines); flags override it");
    auto* m = cmd->add_option("--manifest", a.manifest, "dataset manifest CSV");
    if (needs_manifest) m->check(CLI::ExistingFile);
    cmd->add_option("--config-id", a.config_id, "feature configuration id (1..11)");
    cmd->add_option("--bands", a.n_bands, "mel bands (custom feature config)");
    cmd->add_option("--frames", a.n_frames, "frames per patch (custom feature config)");
    cmd->add_option("--hop", a.hop_length, "hop length in samples (custom feature config)");
    cmd->add_option("--window", a.window_size, "window size in samples (custom feature config)");
    cmd->add_option("--strategy", a.strategy, "binary | multiclass | ensemble");
    cmd->add_option("--threshold", a.thresholds, "ensemble voting threshold(s)");
    cmd->add_option("--epochs", a.epochs, "training epochs (default 10)");
    cmd->add_option("--batch-size", a.batch_size, "training batch size (default 32)");
    cmd->add_option("--folds", a.folds, "cross-validation folds (default 10)");
    cmd->add_option("--seed", a.seed, "run seed (default 0)");
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_flag("--group-by-file", a.group_by_file,
                  "fold at the source-file level instead of the patch level");
}

RunConfig build_run_config(const CommonArgs& a) {
    RunConfig cfg;
    if (!a.run_config_path.empty()) cfg = parse_run_config_file(a.run_config_path);
    if (!a.manifest.empty()) cfg.manifest = a.manifest;
    if (a.config_id > 0) cfg.feature = FeatureConfig::from_table(a.config_id);
    bool custom = false;
    if (a.n_bands > 0) {
        cfg.feature.n_bands = a.n_bands;
        custom = true;
    }
    if (a.n_frames > 0) {
        cfg.feature.n_frames = a.n_frames;
        custom = true;
    }
    if (a.hop_length > 0) {
        cfg.feature.hop_length = a.hop_length;
        custom = true;
    }
    if (a.window_size > 0) {
        cfg.feature.window_size = a.window_size;
        custom = true;
    }
    if (custom) cfg.feature.id = 0;
    cfg.feature.validate();
    if (!a.strategy.empty()) cfg.strategy = strategy_from_string(a.strategy);
    if (!a.thresholds.empty()) cfg.thresholds = a.thresholds;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.batch_size > 0) cfg.batch_size = a.batch_size;
    if (a.folds > 0) cfg.k = a.folds;
    if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
    if (!a.out.empty()) cfg.out_dir = a.out;
    cfg.group_by_file = a.group_by_file;
    if (cfg.manifest.empty()) fail("no manifest given (use --manifest or --run-config)");
    return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_stats(const CommonArgs& a) {
    const RunConfig cfg = build_run_config(a);
    const Manifest manifest = load_manifest(cfg.manifest);
    const auto stats = dataset_stats(manifest);

    std::string csv = "species,file_count,total_duration_s\n";
    std::printf("%-30s %10s %16s\n", "species", "files", "duration (s)");
    for (const auto& [sp, s] : stats) {
        std::printf("%-30s %10d %16.2f\n", std::string(species::name(sp)).c_str(), s.file_count,
                    s.total_duration_s);
        csv += strfmt("%s,%d,%.2f\n", std::string(species::name(sp)).c_str(), s.file_count,
                      s.total_duration_s);
    }
    if (!a.out.empty()) {
        std::filesystem::create_directories(a.out);
        const std::string path = (std::filesystem::path(a.out) / "stats.csv").string();
        atomic_write(path, csv);
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

int cmd_extract(const CommonArgs& a) {
    const RunConfig cfg = build_run_config(a);
    const PreparedData data = prepare_data(cfg);
    print_warnings(data.extracted.warnings);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / strfmt("patches_config%d.wbpc", cfg.feature.id))
            .string();
    write_patch_cache(path, cfg.feature, data.extracted.patches);
    std::printf("wrote %zu patches to %s\n", data.extracted.patches.size(), path.c_str());
    return 0;
}

nlohmann::json checkpoint_metadata(const RunConfig& cfg, const char* strategy,
                                   const std::vector<double>& loss_curve, uint64_t seed,
                                   int negative_species = -1) {
    nlohmann::json meta = meta_to_json(full_metadata(cfg));
    meta["strategy"] = strategy;
    meta["train_seed"] = seed;
    meta["loss_curve"] = loss_curve;
    meta["positive_species"] = std::string(species::name(species::kPositive));
    if (negative_species >= 0) {
        meta["negative_species"] = std::string(species::name(negative_species));
    }
    return meta;
}

int cmd_train(const CommonArgs& a) {
    const RunConfig cfg = build_run_config(a);
    const PreparedData data = prepare_data(cfg);
    print_warnings(data.extracted.warnings);
    const auto& patches = data.extracted.patches;
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<Tensor<float>> inputs(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) inputs[i] = patch_as_input(patches[i]);

    if (cfg.strategy == Strategy::Ensemble) {
        std::vector<int> negatives;
        for (const auto& p : patches) {
            if (!species::is_positive(p.label) &&
                std::find(negatives.begin(), negatives.end(), p.label) == negatives.end()) {
                negatives.push_back(p.label);
            }
        }
        std::sort(negatives.begin(), negatives.end());
        if (negatives.empty()) fail("train ensemble: no negative species in the manifest");

        std::vector<std::pair<int, std::string>> checkpoints;
        for (int neg : negatives) {
            std::vector<const Tensor<float>*> in;
            std::vector<int> tg;
            for (size_t i = 0; i < patches.size(); ++i) {
                if (species::is_positive(patches[i].label)) {
                    in.push_back(&inputs[i]);
                    tg.push_back(kBinaryPositive);
                } else if (patches[i].label == neg) {
                    in.push_back(&inputs[i]);
                    tg.push_back(kBinaryNegative);
                }
            }
            Network<float> net(model_input_shape(cfg.feature), binary_architecture(cfg.arch));
            TrainParams tp = cfg.train_params();
            tp.seed = mix_seed(cfg.seed, static_cast<uint64_t>(neg));
            const auto loss = train_network(net, in, tg, tp);
            const std::string rel =
                strfmt("base_%s.wbnn", std::string(species::name(neg)).c_str());
            const std::string path = (std::filesystem::path(cfg.out_dir) / rel).string();
            save_model(path, net, checkpoint_metadata(cfg, "ensemble_base", loss, tp.seed, neg));
            checkpoints.emplace_back(neg, rel);
            std::printf("trained base model vs %s (final loss %.4f) -> %s\n",
                        std::string(species::name(neg)).c_str(), loss.back(), path.c_str());
        }
        const double threshold = cfg.thresholds.empty() ? 0.9 : cfg.thresholds.back();
        const std::string manifest_path =
            (std::filesystem::path(cfg.out_dir) / "ensemble.manifest").string();
        save_ensemble_manifest(manifest_path, checkpoints, threshold);
        std::printf("wrote %s (threshold %.2f, %zu base models)\n", manifest_path.c_str(),
                    threshold, checkpoints.size());
        return 0;
    }

    std::vector<const Tensor<float>*> in;
    std::vector<int> tg;
    for (size_t i = 0; i < patches.size(); ++i) {
        in.push_back(&inputs[i]);
        if (cfg.strategy == Strategy::Binary) {
            tg.push_back(species::is_positive(patches[i].label) ? kBinaryPositive
                                                                : kBinaryNegative);
        } else {
            tg.push_back(patches[i].label);
        }
    }
    const auto specs = cfg.strategy == Strategy::Binary
                           ? binary_architecture(cfg.arch)
                           : multiclass_architecture(species::kCount, cfg.arch);
    Network<float> net(model_input_shape(cfg.feature), specs);
    const auto loss = train_network(net, in, tg, cfg.train_params());
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / strfmt("%s.wbnn", to_string(cfg.strategy)))
            .string();
    save_model(path, net, checkpoint_metadata(cfg, to_string(cfg.strategy), loss, cfg.seed));
    std::printf("trained %s model on %zu patches (final loss %.4f) -> %s\n",
                to_string(cfg.strategy), patches.size(), loss.back(), path.c_str());
    return 0;
}

int cmd_evaluate(const CommonArgs& a) {
    const RunConfig cfg = build_run_config(a);
    const ExperimentOutputs out = run_experiment(cfg);
    std::printf("wrote %s\n", out.folds_csv.c_str());
    std::printf("wrote %s\n", out.summary_json.c_str());
    return 0;
}

int cmd_sweep(const CommonArgs& a, const std::string& negative, std::vector<int> config_ids) {
    const RunConfig cfg = build_run_config(a);
    const SweepOutputs out = run_fft_sweep(cfg, negative, std::move(config_ids));
    std::printf("wrote %s\n", out.sweep_csv.c_str());
    std::printf("wrote %s\n", out.summary_json.c_str());
    return 0;
}

struct SynthArgs {
    std::vector<double> fundamentals;
    int harmonics = 4;
    double snr_db = 20.0;
    int files_per_class = 2;
    double seconds = 30.0;
    int sample_rate = kStandardRate;
    int64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    if (a.fundamentals.empty()) fail("synth: give at least one --fundamental");
    SynthSpec spec;
    for (size_t i = 0; i < a.fundamentals.size(); ++i) {
        SynthClass cls;
        cls.species = static_cast<int>(i);  // first N names of the label set
        cls.fundamental_hz = a.fundamentals[i];
        cls.harmonics = a.harmonics;
        spec.classes.push_back(cls);
    }
    spec.snr_db = a.snr_db;
    spec.files_per_class = a.files_per_class;
    spec.seconds_per_file = a.seconds;
    spec.sample_rate = a.sample_rate;
    spec.seed = static_cast<uint64_t>(a.seed);
    const std::string manifest = generate_synthetic(spec, a.out);
    std::printf("wrote %s (%zu classes x %d files x %.1f s)\n", manifest.c_str(),
                spec.classes.size(), spec.files_per_class, spec.seconds_per_file);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mosquito wingbeat audio classification toolkit"};
    app.require_subcommand(1);

    CommonArgs stats_args, extract_args, train_args, eval_args, sweep_args;
    std::string sweep_negative = "Anopheles_freeborni";
    std::vector<int> sweep_configs;
    SynthArgs synth_args;

    auto* stats = app.add_subcommand("stats", "per-species dataset statistics");
    add_common_options(stats, stats_args, true);

    auto* extract = app.add_subcommand("extract", "extract patches into a cache file");
    add_common_options(extract, extract_args, true);

    auto* train = app.add_subcommand("train", "train model checkpoint(s) on the full manifest");
    add_common_options(train, train_args, true);

    auto* evaluate = app.add_subcommand("evaluate", "cross-validate a strategy");
    add_common_options(evaluate, eval_args, true);

    auto* sweep = app.add_subcommand("sweep", "binary sweep over feature configurations");
    add_common_options(sweep, sweep_args, true);
    sweep->add_option("--negative", sweep_negative,
                      "negative species for the two-class sweep subset");
    sweep->add_option("--configs", sweep_configs, "configuration ids to run (default 1..11)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--fundamental", synth_args.fundamentals,
                      "per-class fundamental frequency in Hz (repeatable)")
        ->required();
    synth->add_option("--harmonics", synth_args.harmonics, "harmonics per tone stack");
    synth->add_option("--snr-db", synth_args.snr_db, "signal-to-noise ratio in dB (inf = none)");
    synth->add_option("--files-per-class", synth_args.files_per_class, "WAV files per class");
    synth->add_option("--seconds", synth_args.seconds, "seconds per file");
    synth->add_option("--sample-rate", synth_args.sample_rate, "output sample rate in Hz");
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--out", synth_args.out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (stats->parsed()) return cmd_stats(stats_args);
        if (extract->parsed()) return cmd_extract(extract_args);
        if (train->parsed()) return cmd_train(train_args);
        if (evaluate->parsed()) return cmd_evaluate(eval_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_negative, sweep_configs);
        if (synth->parsed()) return cmd_synth(synth_args);
    } catch (const wingbeat::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
