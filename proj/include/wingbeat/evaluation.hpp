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
#include <map>
#include <string>
#include <vector>

#include "wingbeat/common.hpp"
#include "wingbeat/features.hpp"
#include "wingbeat/labels.hpp"
#include "wingbeat/models.hpp"
#include "wingbeat/nn.hpp"
#include "wingbeat/rng.hpp"

namespace wingbeat {

// --------------------------------------------------------------------------
// Stratified folds.

struct FoldPlan {
    int k = 10;
    uint64_t seed = 0;
    std::vector<int> assignment;  // item index -> fold id
};

namespace detail {

inline std::string class_display_name(int label) {
    if (label >= 0 && label < species::kCount) return std::string(species::name(label));
    return strfmt("class %d", label);
}

}  // namespace detail

// Within each class, items are shuffled with the seed and dealt round-robin
// to folds, so per-class fold counts differ by at most one. Classes with
// fewer than k items are an error naming the class.
inline FoldPlan make_stratified_folds(const std::vector<int>& labels, int k, uint64_t seed) {
    if (k < 2) fail("stratified folds: k must be >= 2");
    if (labels.empty()) fail("stratified folds: no items");

    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignment.assign(labels.size(), -1);
    for (auto& [label, items] : by_class) {
        if (static_cast<int>(items.size()) < k) {
            fail(strfmt("stratified folds: %s has %zu items, fewer than k = %d",
                        detail::class_display_name(label).c_str(), items.size(), k));
        }
        Rng rng(mix_seed(seed, static_cast<uint64_t>(label)));
        rng.shuffle(items);
        for (size_t j = 0; j < items.size(); ++j) {
            plan.assignment[items[j]] = static_cast<int>(j % static_cast<size_t>(k));
        }
    }
    return plan;
}

// Fold at the source-file level: every patch of a file lands in the file's
// fold, which removes cross-patch leakage between train and test at the
// cost of coarser stratification.
inline FoldPlan make_grouped_stratified_folds(const std::vector<FeaturePatch>& patches, int k,
                                              uint64_t seed) {
    std::vector<std::string> files;
    std::vector<int> file_labels;
    std::vector<size_t> patch_file(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) {
        size_t j = 0;
        for (; j < files.size(); ++j) {
            if (files[j] == patches[i].source_id) break;
        }
        if (j == files.size()) {
            files.push_back(patches[i].source_id);
            file_labels.push_back(patches[i].label);
        }
        patch_file[i] = j;
    }
    const FoldPlan file_plan = make_stratified_folds(file_labels, k, seed);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignment.resize(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) {
        plan.assignment[i] = file_plan.assignment[patch_file[i]];
    }
    return plan;
}

// --------------------------------------------------------------------------
// Confusion matrices and metrics.

// Rows are true labels, columns predicted. Counts are doubles so averaged
// matrices (fold means) can flow through the same metric computation.
struct ConfusionMatrix {
    int n = 0;
    std::vector<double> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int n_classes)
        : n(n_classes), counts(static_cast<size_t>(n_classes) * n_classes, 0.0) {}

    double& at(int t, int p) { return counts[static_cast<size_t>(t) * n + p]; }
    double at(int t, int p) const { return counts[static_cast<size_t>(t) * n + p]; }

    void add(int t, int p, double w = 1.0) { at(t, p) += w; }

    double total() const {
        double s = 0.0;
        for (double c : counts) s += c;
        return s;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (n == 0) {
            *this = o;
            return *this;
        }
        if (o.n != n) fail("confusion matrix: size mismatch");
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        return *this;
    }
};

struct BinaryCounts {
    double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BinaryCounts class_counts(const ConfusionMatrix& cm, int cls) {
    BinaryCounts c;
    for (int t = 0; t < cm.n; ++t) {
        for (int p = 0; p < cm.n; ++p) {
            const double v = cm.at(t, p);
            if (t == cls && p == cls) {
                c.tp += v;
            } else if (p == cls) {
                c.fp += v;
            } else if (t == cls) {
                c.fn += v;
            } else {
                c.tn += v;
            }
        }
    }
    return c;
}

struct MetricSet {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// One-vs-rest metrics for `positive_class`. Accuracy is the overall hit
// rate (matrix trace over total); undefined ratios (no predicted or no true
// positives) are pinned to 0.
inline MetricSet metrics_from_confusion(const ConfusionMatrix& cm, int positive_class) {
    if (cm.n == 0 || cm.total() <= 0.0) fail("metrics: empty confusion matrix");
    const BinaryCounts c = class_counts(cm, positive_class);
    MetricSet m;
    double trace = 0.0;
    for (int i = 0; i < cm.n; ++i) trace += cm.at(i, i);
    m.accuracy = trace / cm.total();
    m.precision = (c.tp + c.fp) > 0.0 ? c.tp / (c.tp + c.fp) : 0.0;
    m.recall = (c.tp + c.fn) > 0.0 ? c.tp / (c.tp + c.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

// Unweighted mean of the per-class one-vs-rest values over `classes`
// (normally the classes with true instances in the evaluated set).
inline MetricSet macro_metrics(const ConfusionMatrix& cm, const std::vector<int>& classes) {
    if (classes.empty()) fail("macro metrics: no classes");
    MetricSet m;
    for (int cls : classes) {
        const MetricSet per = metrics_from_confusion(cm, cls);
        m.precision += per.precision;
        m.recall += per.recall;
        m.f1 += per.f1;
    }
    const double inv = 1.0 / static_cast<double>(classes.size());
    m.precision *= inv;
    m.recall *= inv;
    m.f1 *= inv;
    double trace = 0.0;
    for (int i = 0; i < cm.n; ++i) trace += cm.at(i, i);
    m.accuracy = trace / cm.total();
    return m;
}

inline MetricSet mean_of(const std::vector<MetricSet>& sets) {
    MetricSet m;
    for (const auto& s : sets) {
        m.accuracy += s.accuracy;
        m.precision += s.precision;
        m.recall += s.recall;
        m.f1 += s.f1;
    }
    const double inv = sets.empty() ? 0.0 : 1.0 / static_cast<double>(sets.size());
    m.accuracy *= inv;
    m.precision *= inv;
    m.recall *= inv;
    m.f1 *= inv;
    return m;
}

// Sample standard deviation (n - 1 denominator).
inline MetricSet sample_std_of(const std::vector<MetricSet>& sets) {
    MetricSet sd;
    if (sets.size() < 2) return sd;
    const MetricSet m = mean_of(sets);
    for (const auto& s : sets) {
        sd.accuracy += (s.accuracy - m.accuracy) * (s.accuracy - m.accuracy);
        sd.precision += (s.precision - m.precision) * (s.precision - m.precision);
        sd.recall += (s.recall - m.recall) * (s.recall - m.recall);
        sd.f1 += (s.f1 - m.f1) * (s.f1 - m.f1);
    }
    const double inv = 1.0 / static_cast<double>(sets.size() - 1);
    sd.accuracy = std::sqrt(sd.accuracy * inv);
    sd.precision = std::sqrt(sd.precision * inv);
    sd.recall = std::sqrt(sd.recall * inv);
    sd.f1 = std::sqrt(sd.f1 * inv);
    return sd;
}

// --------------------------------------------------------------------------
// Cross-validation.

enum class Strategy { Binary, Multiclass, Ensemble };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::Binary: return "binary";
        case Strategy::Multiclass: return "multiclass";
        case Strategy::Ensemble: return "ensemble";
    }
    return "binary";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "binary") return Strategy::Binary;
    if (s == "multiclass") return Strategy::Multiclass;
    if (s == "ensemble") return Strategy::Ensemble;
    fail(strfmt("unknown strategy \"%s\" (binary|multiclass|ensemble)", s.c_str()));
}

struct CvOptions {
    int k = 10;
    uint64_t seed = 0;
    bool group_by_file = false;
};

struct FoldOutcome {
    int fold = 0;
    ConfusionMatrix cm;
    MetricSet metrics;                  // binary: positive class; multiclass: macro
    std::vector<MetricSet> per_class;   // multiclass: indexed by species, present classes only
    std::vector<double> train_loss;     // epoch loss curve
};

struct CvResult {
    Strategy strategy = Strategy::Binary;
    std::vector<int> classes_present;
    std::vector<FoldOutcome> folds;
    MetricSet mean, stddev;
    ConfusionMatrix summed;
};

namespace detail {

inline std::vector<int> sorted_classes_present(const std::vector<FeaturePatch>& patches) {
    std::vector<int> classes;
    for (const auto& p : patches) {
        if (std::find(classes.begin(), classes.end(), p.label) == classes.end()) {
            classes.push_back(p.label);
        }
    }
    std::sort(classes.begin(), classes.end());
    return classes;
}

inline FoldPlan plan_folds(const std::vector<FeaturePatch>& patches, const CvOptions& opt) {
    if (opt.group_by_file) return make_grouped_stratified_folds(patches, opt.k, opt.seed);
    std::vector<int> labels(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) labels[i] = patches[i].label;
    return make_stratified_folds(labels, opt.k, opt.seed);
}

inline void finalize(CvResult& r) {
    std::vector<MetricSet> per_fold;
    for (const auto& f : r.folds) {
        per_fold.push_back(f.metrics);
        r.summed += f.cm;
    }
    r.mean = mean_of(per_fold);
    r.stddev = sample_std_of(per_fold);
}

}  // namespace detail

// Stratified k-fold cross-validation of the binary or multiclass strategy.
// The binary strategy relabels every non-target species to one negative
// class before training; folds are stratified on the species labels either
// way. Deterministic given (patches, options, params).
inline CvResult cross_validate(Strategy strategy, const std::vector<FeaturePatch>& patches,
                               const FeatureConfig& cfg, const TrainParams& params,
                               const CvOptions& opt, const ArchOptions& arch = {}) {
    if (strategy == Strategy::Ensemble) {
        fail("cross_validate: use cross_validate_ensemble for the ensemble strategy");
    }
    const FoldPlan plan = detail::plan_folds(patches, opt);

    CvResult result;
    result.strategy = strategy;
    result.classes_present = detail::sorted_classes_present(patches);

    std::vector<Tensor<float>> inputs(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) inputs[i] = patch_as_input(patches[i]);

    for (int fold = 0; fold < opt.k; ++fold) {
        std::vector<const Tensor<float>*> train_in;
        std::vector<int> train_tg;
        std::vector<size_t> test_idx;
        for (size_t i = 0; i < patches.size(); ++i) {
            const int label = patches[i].label;
            const int target = strategy == Strategy::Binary
                                   ? (species::is_positive(label) ? kBinaryPositive : kBinaryNegative)
                                   : label;
            if (plan.assignment[i] == fold) {
                test_idx.push_back(i);
            } else {
                train_in.push_back(&inputs[i]);
                train_tg.push_back(target);
            }
        }

        const auto specs = strategy == Strategy::Binary
                               ? binary_architecture(arch)
                               : multiclass_architecture(species::kCount, arch);
        Network<float> net(model_input_shape(cfg), specs);

        TrainParams fold_params = params;
        fold_params.seed = mix_seed(params.seed, static_cast<uint64_t>(fold));

        FoldOutcome outcome;
        outcome.fold = fold;
        try {
            outcome.train_loss = train_network(net, train_in, train_tg, fold_params);
        } catch (const Error& e) {
            fail(strfmt("fold %d: %s", fold, e.what()));
        }

        if (strategy == Strategy::Binary) {
            outcome.cm = ConfusionMatrix(2);
            for (size_t i : test_idx) {
                const Tensor<float> out = net.predict(inputs[i]);
                const bool pred_pos = binary_label_from_scores(out.v[0], out.v[1]);
                const int truth = species::is_positive(patches[i].label) ? kBinaryPositive
                                                                         : kBinaryNegative;
                outcome.cm.add(truth, pred_pos ? kBinaryPositive : kBinaryNegative);
            }
            outcome.metrics = metrics_from_confusion(outcome.cm, kBinaryPositive);
        } else {
            outcome.cm = ConfusionMatrix(species::kCount);
            for (size_t i : test_idx) {
                const Tensor<float> out = net.predict(inputs[i]);
                int pred = 0;
                for (size_t c = 1; c < out.numel(); ++c) {
                    if (out.v[c] > out.v[static_cast<size_t>(pred)]) pred = static_cast<int>(c);
                }
                outcome.cm.add(patches[i].label, pred);
            }
            outcome.metrics = macro_metrics(outcome.cm, result.classes_present);
            outcome.per_class.resize(species::kCount);
            for (int cls : result.classes_present) {
                outcome.per_class[static_cast<size_t>(cls)] =
                    metrics_from_confusion(outcome.cm, cls);
            }
        }
        result.folds.push_back(std::move(outcome));
    }
    detail::finalize(result);
    return result;
}

// --------------------------------------------------------------------------
// Ensemble protocol: per fold, one shared stratified test set with patches
// of every class, and one training set per negative species made of the
// remaining target patches plus the remaining patches of that species.

struct EnsembleFoldSets {
    std::vector<size_t> test;
    std::vector<int> negatives;                   // species index per base model
    std::vector<std::vector<size_t>> train_per_base;
};

inline EnsembleFoldSets plan_ensemble_fold(const std::vector<FeaturePatch>& patches,
                                           const FoldPlan& plan, int fold) {
    EnsembleFoldSets sets;
    std::vector<size_t> target_train;
    std::map<int, std::vector<size_t>> negative_train;
    for (size_t i = 0; i < patches.size(); ++i) {
        if (plan.assignment[i] == fold) {
            sets.test.push_back(i);
        } else if (species::is_positive(patches[i].label)) {
            target_train.push_back(i);
        } else {
            negative_train[patches[i].label].push_back(i);
        }
    }
    if (target_train.empty()) fail("ensemble fold: no target-species training patches");
    for (auto& [sp, items] : negative_train) {
        sets.negatives.push_back(sp);
        std::vector<size_t> train = target_train;
        train.insert(train.end(), items.begin(), items.end());
        sets.train_per_base.push_back(std::move(train));
    }
    return sets;
}

struct EnsembleThresholdReport {
    double threshold = 0.0;
    std::vector<FoldOutcome> folds;
    MetricSet mean, stddev;
    ConfusionMatrix summed;
};

struct EnsembleBaseReport {
    int negative_species = -1;
    std::vector<FoldOutcome> folds;
    MetricSet mean, stddev;
};

struct EnsembleCvResult {
    std::vector<int> classes_present;
    std::vector<EnsembleThresholdReport> thresholds;
    std::vector<EnsembleBaseReport> bases;
    MetricSet base_mean;  // mean over base models of their fold means
};

inline EnsembleCvResult cross_validate_ensemble(const std::vector<FeaturePatch>& patches,
                                                const FeatureConfig& cfg,
                                                const TrainParams& params, const CvOptions& opt,
                                                const std::vector<double>& thresholds,
                                                const ArchOptions& arch = {}) {
    if (thresholds.empty()) fail("ensemble: no voting thresholds given");
    const FoldPlan plan = detail::plan_folds(patches, opt);

    EnsembleCvResult result;
    result.classes_present = detail::sorted_classes_present(patches);
    if (std::find(result.classes_present.begin(), result.classes_present.end(),
                  species::kPositive) == result.classes_present.end()) {
        fail("ensemble: the target species is not present in the dataset");
    }
    if (result.classes_present.size() < 2) fail("ensemble: need at least one negative species");

    std::vector<Tensor<float>> inputs(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) inputs[i] = patch_as_input(patches[i]);

    for (double t : thresholds) {
        EnsembleThresholdReport r;
        r.threshold = t;
        result.thresholds.push_back(r);
    }

    std::map<int, EnsembleBaseReport> base_reports;

    for (int fold = 0; fold < opt.k; ++fold) {
        const EnsembleFoldSets sets = plan_ensemble_fold(patches, plan, fold);
        const int n_voters = static_cast<int>(sets.negatives.size());
        std::vector<int> votes(sets.test.size(), 0);

        for (size_t b = 0; b < sets.negatives.size(); ++b) {
            const int neg_species = sets.negatives[b];
            std::vector<const Tensor<float>*> train_in;
            std::vector<int> train_tg;
            for (size_t i : sets.train_per_base[b]) {
                train_in.push_back(&inputs[i]);
                train_tg.push_back(species::is_positive(patches[i].label) ? kBinaryPositive
                                                                          : kBinaryNegative);
            }
            Network<float> net(model_input_shape(cfg), binary_architecture(arch));
            TrainParams base_params = params;
            base_params.seed = mix_seed(params.seed, static_cast<uint64_t>(fold),
                                        static_cast<uint64_t>(neg_species));
            FoldOutcome outcome;
            outcome.fold = fold;
            try {
                outcome.train_loss = train_network(net, train_in, train_tg, base_params);
            } catch (const Error& e) {
                fail(strfmt("fold %d, base model vs %s: %s", fold,
                            std::string(species::name(neg_species)).c_str(), e.what()));
            }

            outcome.cm = ConfusionMatrix(2);
            for (size_t ti = 0; ti < sets.test.size(); ++ti) {
                const size_t i = sets.test[ti];
                const Tensor<float> out = net.predict(inputs[i]);
                const bool pred_pos = binary_label_from_scores(out.v[0], out.v[1]);
                if (pred_pos) ++votes[ti];
                const int truth = species::is_positive(patches[i].label) ? kBinaryPositive
                                                                         : kBinaryNegative;
                outcome.cm.add(truth, pred_pos ? kBinaryPositive : kBinaryNegative);
            }
            outcome.metrics = metrics_from_confusion(outcome.cm, kBinaryPositive);

            auto& report = base_reports[neg_species];
            report.negative_species = neg_species;
            report.folds.push_back(std::move(outcome));
        }

        // vote counts are fixed now; each threshold just re-cuts them
        for (auto& tr : result.thresholds) {
            FoldOutcome outcome;
            outcome.fold = fold;
            outcome.cm = ConfusionMatrix(2);
            for (size_t ti = 0; ti < sets.test.size(); ++ti) {
                const size_t i = sets.test[ti];
                const bool pred_pos = ensemble_decision(votes[ti], tr.threshold, n_voters);
                const int truth = species::is_positive(patches[i].label) ? kBinaryPositive
                                                                         : kBinaryNegative;
                outcome.cm.add(truth, pred_pos ? kBinaryPositive : kBinaryNegative);
            }
            outcome.metrics = metrics_from_confusion(outcome.cm, kBinaryPositive);
            tr.folds.push_back(std::move(outcome));
        }
    }

    for (auto& tr : result.thresholds) {
        std::vector<MetricSet> per_fold;
        for (const auto& f : tr.folds) {
            per_fold.push_back(f.metrics);
            tr.summed += f.cm;
        }
        tr.mean = mean_of(per_fold);
        tr.stddev = sample_std_of(per_fold);
    }

    std::vector<MetricSet> base_means;
    for (auto& [sp, report] : base_reports) {
        std::vector<MetricSet> per_fold;
        for (const auto& f : report.folds) per_fold.push_back(f.metrics);
        report.mean = mean_of(per_fold);
        report.stddev = sample_std_of(per_fold);
        base_means.push_back(report.mean);
        result.bases.push_back(std::move(report));
    }
    result.base_mean = mean_of(base_means);
    return result;
}

}  // namespace wingbeat
