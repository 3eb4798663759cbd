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

#include <set>

#include "test_util.hpp"
#include "wingbeat/evaluation.hpp"
#include "wingbeat/synth.hpp"

using namespace wingbeat;

namespace {

// Brute-force metric oracle: recompute everything from the raw
// (truth, prediction) pairs, independent of the ConfusionMatrix path.
struct OracleMetrics {
    double accuracy, precision, recall, f1;
};

OracleMetrics oracle_metrics(const std::vector<std::pair<int, int>>& pairs, int positive) {
    double tp = 0, fp = 0, fn = 0, hits = 0;
    for (const auto& [t, p] : pairs) {
        hits += t == p;
        if (p == positive && t == positive) ++tp;
        if (p == positive && t != positive) ++fp;
        if (p != positive && t == positive) ++fn;
    }
    OracleMetrics m{};
    m.accuracy = hits / static_cast<double>(pairs.size());
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0
               ? 2 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

std::vector<FeaturePatch> tone_patches(const std::vector<std::pair<int, double>>& classes,
                                       const FeatureConfig& cfg, double seconds, int files,
                                       uint64_t seed, double snr_db = 25.0) {
    static int counter = 0;
    testutil::TempDir dir("evalsynth" + std::to_string(counter++));
    SynthSpec spec;
    for (const auto& [sp, f0] : classes) spec.classes.push_back({sp, f0, 3});
    spec.snr_db = snr_db;
    spec.files_per_class = files;
    spec.seconds_per_file = seconds;
    spec.seed = seed;
    const std::string manifest = generate_synthetic(spec, dir.str());
    const auto clips = decode_all(load_manifest(manifest), cfg.sample_rate);
    auto result = extract_features(clips, cfg);
    return std::move(result.patches);
}

FeatureConfig small_cfg(int bands, int frames) {
    FeatureConfig cfg;
    cfg.n_bands = bands;
    cfg.n_frames = frames;
    cfg.hop_length = 256;
    cfg.window_size = 1024;
    return cfg;
}

}  // namespace

TEST_CASE("stratified folds: exact divisibility") {
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) labels.push_back(0);
    for (int i = 0; i < 50; ++i) labels.push_back(1);
    const FoldPlan plan = make_stratified_folds(labels, 10, 3);

    std::vector<int> a(10, 0), b(10, 0);
    for (size_t i = 0; i < labels.size(); ++i) {
        REQUIRE(plan.assignment[i] >= 0);
        REQUIRE(plan.assignment[i] < 10);
        (labels[i] == 0 ? a : b)[static_cast<size_t>(plan.assignment[i])]++;
    }
    for (int f = 0; f < 10; ++f) {
        CHECK(a[static_cast<size_t>(f)] == 10);
        CHECK(b[static_cast<size_t>(f)] == 5);
    }
}

TEST_CASE("stratified folds: 23 items over 10 folds differ by at most one") {
    const std::vector<int> labels(23, 0);
    const FoldPlan plan = make_stratified_folds(labels, 10, 9);
    std::vector<int> counts(10, 0);
    for (int f : plan.assignment) counts[static_cast<size_t>(f)]++;
    int lo = 23, hi = 0;
    for (int c : counts) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    CHECK(lo >= 2);
    CHECK(hi <= 3);
    CHECK(hi - lo <= 1);
}

TEST_CASE("stratified folds: deterministic and seed-sensitive") {
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(i % 3);
    const FoldPlan p1 = make_stratified_folds(labels, 5, 42);
    const FoldPlan p2 = make_stratified_folds(labels, 5, 42);
    const FoldPlan p3 = make_stratified_folds(labels, 5, 43);
    CHECK(p1.assignment == p2.assignment);
    CHECK(p1.assignment != p3.assignment);
}

TEST_CASE("stratified folds: class smaller than k is an error naming the class") {
    std::vector<int> labels(20, species::kPositive);
    labels.resize(25, species::find("Culex_pipiens"));  // 5 items of the second class
    CHECK_THROWS_WITH_AS(make_stratified_folds(labels, 10, 0),
                         doctest::Contains("Culex_pipiens"), Error);
}

TEST_CASE("grouped folds keep all patches of a file together") {
    std::vector<FeaturePatch> patches;
    for (int f = 0; f < 8; ++f) {
        for (int p = 0; p < 7; ++p) {
            FeaturePatch patch;
            patch.values = Tensor<float>({2, 2});
            patch.label = f % 2;
            patch.source_id = strfmt("file%d", f);
            patch.patch_index = p;
            patches.push_back(std::move(patch));
        }
    }
    const FoldPlan plan = make_grouped_stratified_folds(patches, 2, 7);
    for (size_t i = 0; i < patches.size(); ++i) {
        for (size_t j = 0; j < patches.size(); ++j) {
            if (patches[i].source_id == patches[j].source_id) {
                CHECK(plan.assignment[i] == plan.assignment[j]);
            }
        }
    }
}

TEST_CASE("metrics match the brute-force oracle on random labeled predictions") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int n_classes = 2 + static_cast<int>(rng.below(22));
        const int n = 10 + static_cast<int>(rng.below(200));
        std::vector<std::pair<int, int>> pairs;
        ConfusionMatrix cm(n_classes);
        for (int i = 0; i < n; ++i) {
            const int t = static_cast<int>(rng.below(n_classes));
            const int p = static_cast<int>(rng.below(n_classes));
            pairs.emplace_back(t, p);
            cm.add(t, p);
        }
        const int positive = static_cast<int>(rng.below(n_classes));
        const MetricSet got = metrics_from_confusion(cm, positive);
        const OracleMetrics want = oracle_metrics(pairs, positive);
        CHECK(std::fabs(got.accuracy - want.accuracy) < 1e-12);
        CHECK(std::fabs(got.precision - want.precision) < 1e-12);
        CHECK(std::fabs(got.recall - want.recall) < 1e-12);
        CHECK(std::fabs(got.f1 - want.f1) < 1e-12);
    }
}

TEST_CASE("macro average equals the mean of per-class oracle values") {
    Rng rng(7);
    const int n_classes = 5;
    std::vector<std::pair<int, int>> pairs;
    ConfusionMatrix cm(n_classes);
    for (int i = 0; i < 500; ++i) {
        const int t = static_cast<int>(rng.below(n_classes));
        const int p = static_cast<int>(rng.below(n_classes));
        pairs.emplace_back(t, p);
        cm.add(t, p);
    }
    std::vector<int> classes{0, 1, 2, 3, 4};
    const MetricSet got = macro_metrics(cm, classes);
    double prec = 0, rec = 0, f1 = 0;
    for (int c : classes) {
        const OracleMetrics m = oracle_metrics(pairs, c);
        prec += m.precision;
        rec += m.recall;
        f1 += m.f1;
    }
    CHECK(got.precision == doctest::Approx(prec / 5).epsilon(1e-12));
    CHECK(got.recall == doctest::Approx(rec / 5).epsilon(1e-12));
    CHECK(got.f1 == doctest::Approx(f1 / 5).epsilon(1e-12));
}

TEST_CASE("the reported averaged confusion matrix reproduces the published rates") {
    // mean fold counts: TP 243.9, FN 31.7 / FP 26.3, TN 2170.9
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 243.9;
    cm.at(0, 1) = 31.7;
    cm.at(1, 0) = 26.3;
    cm.at(1, 1) = 2170.9;
    const MetricSet m = metrics_from_confusion(cm, 0);
    CHECK(std::fabs(m.accuracy - 0.9765) < 0.005);
    CHECK(std::fabs(m.recall - 0.8849) < 0.005);
    CHECK(std::fabs(m.precision - 0.9063) < 0.005);
    // tighter pin on the exact ratios of this matrix
    CHECK(m.accuracy == doctest::Approx(2414.8 / 2472.8).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(243.9 / 275.6).epsilon(1e-12));
}

TEST_CASE("degenerate confusion matrices") {
    SUBCASE("diagonal-only means perfect scores") {
        ConfusionMatrix cm(3);
        cm.at(0, 0) = 5;
        cm.at(1, 1) = 7;
        cm.at(2, 2) = 2;
        for (int c = 0; c < 3; ++c) {
            const MetricSet m = metrics_from_confusion(cm, c);
            CHECK(m.accuracy == 1.0);
            CHECK(m.precision == 1.0);
            CHECK(m.recall == 1.0);
            CHECK(m.f1 == 1.0);
        }
    }
    SUBCASE("everything predicted as one class, balanced") {
        ConfusionMatrix cm(2);
        cm.at(0, 0) = 5;
        cm.at(1, 0) = 5;
        const MetricSet pos = metrics_from_confusion(cm, 0);
        CHECK(pos.accuracy == 0.5);
        CHECK(pos.recall == 1.0);
        CHECK(pos.precision == 0.5);
        const MetricSet neg = metrics_from_confusion(cm, 1);
        CHECK(neg.recall == 0.0);
        CHECK(neg.precision == 0.0);  // pinned to 0, not undefined
        CHECK(neg.f1 == 0.0);
    }
}

TEST_CASE("mean and sample std over folds") {
    std::vector<MetricSet> sets(3);
    sets[0].accuracy = 0.9;
    sets[1].accuracy = 1.0;
    sets[2].accuracy = 0.8;
    const MetricSet m = mean_of(sets);
    CHECK(m.accuracy == doctest::Approx(0.9));
    const MetricSet s = sample_std_of(sets);
    CHECK(s.accuracy == doctest::Approx(0.1));  // sqrt(((0)^2+(0.1)^2+(0.1)^2)/2)
}

TEST_CASE("binary cross-validation separates synthetic tone classes") {
    const FeatureConfig cfg = small_cfg(20, 20);
    const auto patches = tone_patches(
        {{species::kPositive, 500.0}, {species::find("Anopheles_freeborni"), 1500.0}}, cfg, 8.0,
        1, 17);
    REQUIRE(patches.size() >= 40);

    TrainParams tp;
    tp.epochs = 10;
    tp.batch_size = 32;
    tp.seed = 4;
    CvOptions opt;
    opt.k = 5;
    opt.seed = 4;
    const CvResult r = cross_validate(Strategy::Binary, patches, cfg, tp, opt);

    REQUIRE(r.folds.size() == 5);
    CHECK(r.mean.accuracy >= 0.95);

    SUBCASE("summed-matrix accuracy equals the patch-weighted fold mean") {
        double weighted = 0.0;
        for (const auto& f : r.folds) weighted += f.metrics.accuracy * f.cm.total();
        weighted /= r.summed.total();
        const MetricSet summed = metrics_from_confusion(r.summed, kBinaryPositive);
        CHECK(summed.accuracy == doctest::Approx(weighted).epsilon(1e-12));
    }
    SUBCASE("mean/std agree with a recomputation from the fold reports") {
        std::vector<MetricSet> sets;
        for (const auto& f : r.folds) sets.push_back(f.metrics);
        const MetricSet m = mean_of(sets), s = sample_std_of(sets);
        CHECK(r.mean.accuracy == doctest::Approx(m.accuracy).epsilon(1e-15));
        CHECK(r.stddev.recall == doctest::Approx(s.recall).epsilon(1e-15));
    }
    SUBCASE("folds partition the patch set") {
        const FoldPlan plan = make_stratified_folds(
            [&] {
                std::vector<int> labels;
                for (const auto& p : patches) labels.push_back(p.label);
                return labels;
            }(),
            opt.k, opt.seed);
        std::set<int> folds(plan.assignment.begin(), plan.assignment.end());
        CHECK(static_cast<int>(folds.size()) == opt.k);
        double total = 0;
        for (const auto& f : r.folds) total += f.cm.total();
        CHECK(total == doctest::Approx(static_cast<double>(patches.size())));
    }
}

TEST_CASE("random labels score at chance level") {
    Rng rng(55);
    std::vector<FeaturePatch> patches;
    for (int i = 0; i < 240; ++i) {
        FeaturePatch p;
        p.values = Tensor<float>({20, 20});
        for (auto& v : p.values.v) v = static_cast<float>(rng.uniform());
        p.label = i % 2 == 0 ? species::kPositive : 1;  // balanced
        p.source_id = strfmt("noise%03d", i);
        patches.push_back(std::move(p));
    }
    // shuffle the label column so any structure is gone
    std::vector<int> labels;
    for (const auto& p : patches) labels.push_back(p.label);
    rng.shuffle(labels);
    for (size_t i = 0; i < patches.size(); ++i) patches[i].label = labels[i];

    const FeatureConfig cfg = small_cfg(20, 20);
    TrainParams tp;
    tp.epochs = 2;
    tp.batch_size = 32;
    tp.seed = 19;
    CvOptions opt;
    opt.k = 5;
    opt.seed = 19;
    const CvResult r = cross_validate(Strategy::Binary, patches, cfg, tp, opt);
    CHECK(std::fabs(r.mean.accuracy - 0.5) <= 0.05);
}

TEST_CASE("multiclass cross-validation on three tone classes") {
    const FeatureConfig cfg = small_cfg(30, 12);
    const auto patches = tone_patches({{species::kPositive, 400.0},
                                       {species::find("Culex_pipiens"), 900.0},
                                       {species::find("Culiseta_incidens"), 2000.0}},
                                      cfg, 8.0, 1, 23);
    REQUIRE(!patches.empty());

    TrainParams tp;
    tp.epochs = 8;
    tp.batch_size = 32;
    tp.seed = 6;
    CvOptions opt;
    opt.k = 3;
    opt.seed = 6;
    const CvResult r = cross_validate(Strategy::Multiclass, patches, cfg, tp, opt);

    CHECK(r.classes_present.size() == 3);
    CHECK(r.summed.n == species::kCount);
    CHECK(r.mean.recall >= 0.7);  // macro over the three present classes
    // absent species contribute no true instances
    double absent_rows = 0.0;
    for (int t = 0; t < r.summed.n; ++t) {
        if (std::find(r.classes_present.begin(), r.classes_present.end(), t) ==
            r.classes_present.end()) {
            for (int p = 0; p < r.summed.n; ++p) absent_rows += r.summed.at(t, p);
        }
    }
    CHECK(absent_rows == 0.0);
    // per-class metrics exist for the present classes
    for (const auto& f : r.folds) {
        REQUIRE(f.per_class.size() == static_cast<size_t>(species::kCount));
    }
}

TEST_CASE("ensemble fold plan: shared test set, no leakage") {
    const FeatureConfig cfg = small_cfg(20, 20);
    const auto patches = tone_patches({{species::kPositive, 500.0},
                                       {1, 700.0},
                                       {2, 1100.0},
                                       {3, 1700.0}},
                                      cfg, 6.0, 1, 29);
    std::vector<int> labels;
    for (const auto& p : patches) labels.push_back(p.label);
    const FoldPlan plan = make_stratified_folds(labels, 3, 1);

    for (int fold = 0; fold < 3; ++fold) {
        const EnsembleFoldSets sets = plan_ensemble_fold(patches, plan, fold);
        CHECK(sets.negatives == std::vector<int>{1, 2, 3});
        const std::set<size_t> test(sets.test.begin(), sets.test.end());
        // test set is stratified over all classes
        std::set<int> test_classes;
        for (size_t i : sets.test) test_classes.insert(patches[i].label);
        CHECK(test_classes.size() == 4);
        for (size_t b = 0; b < sets.train_per_base.size(); ++b) {
            std::set<int> train_classes;
            for (size_t i : sets.train_per_base[b]) {
                CHECK(test.count(i) == 0);  // leakage audit
                train_classes.insert(patches[i].label);
            }
            CHECK(train_classes ==
                  std::set<int>{species::kPositive, sets.negatives[b]});
        }
    }
}

TEST_CASE("ensemble cross-validation: 23 tone species, strict voting beats the bases") {
    const FeatureConfig cfg = small_cfg(40, 20);
    std::vector<std::pair<int, double>> classes;
    for (int sp = 0; sp < species::kCount; ++sp) {
        // log-spaced fundamentals, 300 Hz .. 3400 Hz
        const double f = 300.0 * std::pow(3400.0 / 300.0, sp / 22.0);
        classes.emplace_back(sp, f);
    }
    const auto patches = tone_patches(classes, cfg, 4.0, 2, 31);
    REQUIRE(patches.size() >= 23 * 20);

    TrainParams tp;
    tp.epochs = 6;
    tp.batch_size = 32;
    tp.seed = 13;
    CvOptions opt;
    opt.k = 2;
    opt.seed = 13;
    const EnsembleCvResult r =
        cross_validate_ensemble(patches, cfg, tp, opt, {0.5, 0.7, 0.9});

    REQUIRE(r.bases.size() == 22);
    REQUIRE(r.thresholds.size() == 3);
    const auto& strict = r.thresholds.back();
    CHECK(strict.threshold == 0.9);

    // the qualitative ensemble result: precision multiplies, recall holds
    CHECK(strict.mean.recall >= r.base_mean.recall - 0.05);
    CHECK(strict.mean.precision >= 2.0 * r.base_mean.precision);

    SUBCASE("vote counts are fixed: higher thresholds only shrink the positive set") {
        for (size_t f = 0; f < r.thresholds[0].folds.size(); ++f) {
            double prev_pos = -1.0;
            double prev_recall = -1.0;
            for (size_t t = 0; t < r.thresholds.size(); ++t) {
                const auto& cm = r.thresholds[t].folds[f].cm;
                const double predicted_positive = cm.at(0, 0) + cm.at(1, 0);
                const double recall = r.thresholds[t].folds[f].metrics.recall;
                if (t > 0) {
                    CHECK(predicted_positive <= prev_pos);
                    CHECK(recall <= prev_recall + 1e-12);
                }
                prev_pos = predicted_positive;
                prev_recall = recall;
            }
        }
    }
}
