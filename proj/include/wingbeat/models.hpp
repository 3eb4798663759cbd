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
// The three classification strategies over the shared NN core:
//
//   binary     - target species vs everything else, one CNN
//   multiclass - one CNN over all 23 classes
//   ensemble   - one binary CNN per non-target species, threshold voting
//
// Patches enter the CNNs with mel bands along the image height and time
// frames along the width, so the multiclass 20x5 kernel spans 20 bands by
// 5 frames.
//

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "wingbeat/checkpoint.hpp"
#include "wingbeat/common.hpp"
#include "wingbeat/features.hpp"
#include "wingbeat/labels.hpp"
#include "wingbeat/nn.hpp"

namespace wingbeat {

struct ArchOptions {
    double dropout_rate = 0.5;
    // ablation switch; the reference head is two sigmoid units
    bool binary_softmax_head = false;
};

// conv(32,3x3) -> pool -> conv(64,3x3) -> pool -> conv(64,3x3) -> flatten ->
// dense(256, relu) -> dropout -> dense(2, sigmoid)
inline std::vector<LayerSpec> binary_architecture(const ArchOptions& opt = {}) {
    return {
        LayerSpec::conv2d(32, 3, 3, Activation::Relu),
        LayerSpec::maxpool2d(2, 2, 1),
        LayerSpec::conv2d(64, 3, 3, Activation::Relu),
        LayerSpec::maxpool2d(2, 2, 1),
        LayerSpec::conv2d(64, 3, 3, Activation::Relu),
        LayerSpec::flatten(),
        LayerSpec::dense(256, Activation::Relu),
        LayerSpec::dropout(opt.dropout_rate),
        LayerSpec::dense(2, opt.binary_softmax_head ? Activation::Softmax : Activation::Sigmoid),
    };
}

// conv(32,20x5) -> pool -> conv(32,8x4) -> pool -> flatten -> dropout ->
// dense(n_classes, softmax)
inline std::vector<LayerSpec> multiclass_architecture(int n_classes = species::kCount,
                                                      const ArchOptions& opt = {}) {
    return {
        LayerSpec::conv2d(32, 20, 5, Activation::Relu),
        LayerSpec::maxpool2d(2, 2, 1),
        LayerSpec::conv2d(32, 8, 4, Activation::Relu),
        LayerSpec::maxpool2d(2, 2, 1),
        LayerSpec::flatten(),
        LayerSpec::dropout(opt.dropout_rate),
        LayerSpec::dense(n_classes, Activation::Softmax),
    };
}

inline std::vector<int> model_input_shape(const FeatureConfig& cfg) {
    return {cfg.n_bands, cfg.n_frames, 1};
}

inline Tensor<float> patch_as_input(const FeaturePatch& p) {
    Tensor<float> t;
    t.shape = {p.values.shape[0], p.values.shape[1], 1};
    t.v = p.values.v;
    return t;
}

struct TrainedModel {
    Network<float> net;
    nlohmann::json meta;
};

// --------------------------------------------------------------------------
// Prediction interfaces.

// Binary classes are fixed as index 0 = positive (the target species),
// index 1 = negative.
inline constexpr int kBinaryPositive = 0;
inline constexpr int kBinaryNegative = 1;

// Exact ties resolve to negative.
inline bool binary_label_from_scores(float positive_score, float negative_score) {
    return positive_score > negative_score;
}

struct BinaryPrediction {
    bool positive = false;
    float scores[2] = {0.0f, 0.0f};  // positive, negative
};

inline BinaryPrediction predict_binary(const TrainedModel& model, const FeaturePatch& patch) {
    const Tensor<float> out = model.net.predict(patch_as_input(patch));
    if (out.numel() != 2) fail("predict_binary: model does not have 2 outputs");
    BinaryPrediction p;
    p.scores[0] = out.v[0];
    p.scores[1] = out.v[1];
    p.positive = binary_label_from_scores(p.scores[0], p.scores[1]);
    return p;
}

struct MulticlassPrediction {
    int label = 0;  // argmax, ties to the lowest class index
    std::vector<float> probabilities;
};

inline MulticlassPrediction predict_multiclass(const TrainedModel& model,
                                               const FeaturePatch& patch) {
    const Tensor<float> out = model.net.predict(patch_as_input(patch));
    MulticlassPrediction p;
    p.probabilities = out.v;
    p.label = 0;
    for (size_t i = 1; i < out.numel(); ++i) {
        if (out.v[i] > out.v[static_cast<size_t>(p.label)]) p.label = static_cast<int>(i);
    }
    return p;
}

// --------------------------------------------------------------------------
// Ensemble voting.

// Smallest vote count that meets the threshold fraction:
// ceil(threshold * n_voters), with a tiny slack so exact rational products
// (0.5 * 22 = 11) are not bumped up by floating-point noise.
inline int vote_threshold_to_min_votes(double threshold, int n_voters) {
    if (threshold <= 0.0 || threshold > 1.0) {
        fail(strfmt("vote threshold %.4f out of (0, 1]", threshold));
    }
    if (n_voters < 1) fail("vote_threshold_to_min_votes: need at least one voter");
    return static_cast<int>(std::ceil(threshold * n_voters - 1e-9));
}

inline bool ensemble_decision(int positive_votes, double threshold, int n_voters) {
    return positive_votes >= vote_threshold_to_min_votes(threshold, n_voters);
}

// 22 binary base models (one per non-target species) plus the voting
// threshold. Scaled-down datasets carry one base model per negative species
// present, with the same voting rule over however many voters exist.
struct EnsembleModel {
    std::vector<std::pair<int, TrainedModel>> base;  // negative species index, model
    double vote_threshold = 0.9;

    int n_voters() const { return static_cast<int>(base.size()); }

    void validate(const std::vector<int>* expected_negatives = nullptr) const {
        if (base.empty()) fail("ensemble: no base models");
        std::vector<bool> seen(species::kCount, false);
        for (const auto& [sp, model] : base) {
            if (sp == species::kPositive) {
                fail("ensemble: the target species cannot be a negative class");
            }
            species::name(sp);
            if (seen[static_cast<size_t>(sp)]) {
                fail(strfmt("ensemble: duplicate base model for %s",
                            std::string(species::name(sp)).c_str()));
            }
            seen[static_cast<size_t>(sp)] = true;
        }
        if (expected_negatives) {
            for (int sp : *expected_negatives) {
                if (sp != species::kPositive && !seen[static_cast<size_t>(sp)]) {
                    fail(strfmt("ensemble: missing base model for %s",
                                std::string(species::name(sp)).c_str()));
                }
            }
        }
        if (vote_threshold <= 0.0 || vote_threshold > 1.0) {
            fail("ensemble: vote threshold out of (0, 1]");
        }
    }
};

struct EnsemblePrediction {
    bool positive = false;
    int positive_votes = 0;
};

inline EnsemblePrediction predict_ensemble(const EnsembleModel& ensemble,
                                           const FeaturePatch& patch) {
    ensemble.validate();
    EnsemblePrediction p;
    for (const auto& [sp, model] : ensemble.base) {
        if (predict_binary(model, patch).positive) ++p.positive_votes;
    }
    p.positive = ensemble_decision(p.positive_votes, ensemble.vote_threshold, ensemble.n_voters());
    return p;
}

// --------------------------------------------------------------------------
// Ensemble manifest: versioned text file listing the base checkpoints keyed
// by negative-species name, plus the threshold.

inline constexpr const char* kEnsembleManifestMagic = "wingbeat-ensemble v1";

inline void save_ensemble_manifest(const std::string& path,
                                   const std::vector<std::pair<int, std::string>>& checkpoints,
                                   double threshold) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(strfmt("%s: cannot open for writing", path.c_str()));
    f << kEnsembleManifestMagic << "\n";
    f << "threshold = " << strfmt("%.6g", threshold) << "\n";
    for (const auto& [sp, ckpt] : checkpoints) {
        f << species::name(sp) << " = " << ckpt << "\n";
    }
    if (!f) fail(strfmt("%s: write failed", path.c_str()));
}

inline EnsembleModel load_ensemble(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) fail(strfmt("%s: cannot open", manifest_path.c_str()));
    std::string line;
    if (!std::getline(f, line) || detail::trim(line) != kEnsembleManifestMagic) {
        fail(strfmt("%s: not an ensemble manifest (expected \"%s\")", manifest_path.c_str(),
                    kEnsembleManifestMagic));
    }
    const std::string base_dir = std::filesystem::path(manifest_path).parent_path().string();

    EnsembleModel ensemble;
    bool have_threshold = false;
    while (std::getline(f, line)) {
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            fail(strfmt("%s: malformed line \"%s\"", manifest_path.c_str(), t.c_str()));
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key == "threshold") {
            ensemble.vote_threshold = std::stod(value);
            have_threshold = true;
            continue;
        }
        const int sp = species::find(key);
        if (sp < 0) {
            fail(strfmt("%s: unknown species \"%s\"", manifest_path.c_str(), key.c_str()));
        }
        std::string ckpt = value;
        if (!std::filesystem::path(ckpt).is_absolute() && !base_dir.empty()) {
            ckpt = (std::filesystem::path(base_dir) / ckpt).string();
        }
        LoadedModel loaded = load_model(ckpt);
        ensemble.base.emplace_back(sp,
                                   TrainedModel{std::move(loaded.net), std::move(loaded.metadata)});
    }
    if (!have_threshold) fail(strfmt("%s: missing threshold", manifest_path.c_str()));
    ensemble.validate();
    return ensemble;
}

}  // namespace wingbeat
