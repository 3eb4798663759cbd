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
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wingbeat/common.hpp"
#include "wingbeat/evaluation.hpp"

namespace wingbeat {

using MetaKv = std::vector<std::pair<std::string, std::string>>;

// Writes via a temp file + rename so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(strfmt("%s: cannot open for writing", tmp.c_str()));
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) fail(strfmt("%s: write failed", tmp.c_str()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(strfmt("%s: rename failed: %s", path.c_str(), ec.message().c_str()));
}

inline std::string fmt_metric(double v) { return strfmt("%.6f", v); }

inline std::string fmt_count(double v) {
    if (std::fabs(v - std::round(v)) < 1e-9) {
        return strfmt("%lld", static_cast<long long>(std::llround(v)));
    }
    return strfmt("%.3f", v);
}

inline std::string csv_preamble(const MetaKv& meta) {
    std::string out;
    for (const auto& [k, v] : meta) out += "# " + k + " = " + v + "\n";
    return out;
}

inline constexpr const char* kFoldCsvHeader =
    "fold,strategy,threshold,class,tp,fp,fn,tn,accuracy,precision,recall,f1";

namespace detail {

inline std::string fold_row(int fold, const std::string& strategy, const std::string& threshold,
                            const std::string& cls, const BinaryCounts& c, const MetricSet& m) {
    return strfmt("%d,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s", fold, strategy.c_str(),
                  threshold.c_str(), cls.c_str(), fmt_count(c.tp).c_str(), fmt_count(c.fp).c_str(),
                  fmt_count(c.fn).c_str(), fmt_count(c.tn).c_str(), fmt_metric(m.accuracy).c_str(),
                  fmt_metric(m.precision).c_str(), fmt_metric(m.recall).c_str(),
                  fmt_metric(m.f1).c_str());
}

}  // namespace detail

// One row per fold for the binary strategy; per-class rows plus a macro row
// per fold for the multiclass strategy.
inline std::string fold_report_csv(const CvResult& r, const MetaKv& meta) {
    std::string out = csv_preamble(meta);
    out += std::string(kFoldCsvHeader) + "\n";
    const std::string strategy = to_string(r.strategy);
    for (const auto& f : r.folds) {
        if (r.strategy == Strategy::Binary) {
            const BinaryCounts c = class_counts(f.cm, kBinaryPositive);
            out += detail::fold_row(f.fold, strategy, "", std::string(species::name(species::kPositive)),
                                    c, f.metrics) +
                   "\n";
        } else {
            for (int cls : r.classes_present) {
                const BinaryCounts c = class_counts(f.cm, cls);
                out += detail::fold_row(f.fold, strategy, "", std::string(species::name(cls)), c,
                                        f.per_class[static_cast<size_t>(cls)]) +
                       "\n";
            }
            // macro row: counts are the micro sums over the per-class counts
            BinaryCounts micro;
            for (int cls : r.classes_present) {
                const BinaryCounts c = class_counts(f.cm, cls);
                micro.tp += c.tp;
                micro.fp += c.fp;
                micro.fn += c.fn;
                micro.tn += c.tn;
            }
            out += detail::fold_row(f.fold, strategy, "", "macro", micro, f.metrics) + "\n";
        }
    }
    return out;
}

// Ensemble rows per (fold, threshold) plus per-fold base-model rows keyed by
// the negative species each base model was trained against.
inline std::string fold_report_csv(const EnsembleCvResult& r, const MetaKv& meta) {
    std::string out = csv_preamble(meta);
    out += std::string(kFoldCsvHeader) + "\n";
    const std::string positive(species::name(species::kPositive));
    for (const auto& tr : r.thresholds) {
        for (const auto& f : tr.folds) {
            const BinaryCounts c = class_counts(f.cm, kBinaryPositive);
            out += detail::fold_row(f.fold, "ensemble", strfmt("%.2f", tr.threshold), positive, c,
                                    f.metrics) +
                   "\n";
        }
    }
    for (const auto& base : r.bases) {
        for (const auto& f : base.folds) {
            const BinaryCounts c = class_counts(f.cm, kBinaryPositive);
            out += detail::fold_row(f.fold, "ensemble_base", "",
                                    std::string(species::name(base.negative_species)), c,
                                    f.metrics) +
                   "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON summaries.

inline nlohmann::json to_json(const MetricSet& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1}};
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (int t = 0; t < cm.n; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (int p = 0; p < cm.n; ++p) row.push_back(cm.at(t, p));
        rows.push_back(row);
    }
    return rows;
}

inline nlohmann::json to_json(const CvResult& r) {
    nlohmann::json j;
    j["strategy"] = to_string(r.strategy);
    j["mean"] = to_json(r.mean);
    j["stddev"] = to_json(r.stddev);
    j["summed_confusion"] = to_json(r.summed);
    j["folds"] = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json fj;
        fj["fold"] = f.fold;
        fj["metrics"] = to_json(f.metrics);
        fj["train_loss"] = f.train_loss;
        j["folds"].push_back(fj);
    }
    if (r.strategy == Strategy::Multiclass) {
        nlohmann::json per_class;
        for (int cls : r.classes_present) {
            std::vector<MetricSet> fold_sets;
            for (const auto& f : r.folds) {
                fold_sets.push_back(f.per_class[static_cast<size_t>(cls)]);
            }
            nlohmann::json cj;
            cj["mean"] = to_json(mean_of(fold_sets));
            cj["stddev"] = to_json(sample_std_of(fold_sets));
            per_class[std::string(species::name(cls))] = cj;
        }
        j["per_class"] = per_class;
    }
    return j;
}

inline nlohmann::json to_json(const EnsembleCvResult& r) {
    nlohmann::json j;
    j["strategy"] = "ensemble";
    j["thresholds"] = nlohmann::json::array();
    for (const auto& tr : r.thresholds) {
        nlohmann::json tj;
        tj["threshold"] = tr.threshold;
        tj["mean"] = to_json(tr.mean);
        tj["stddev"] = to_json(tr.stddev);
        tj["summed_confusion"] = to_json(tr.summed);
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : tr.folds) {
            folds.push_back({{"fold", f.fold}, {"metrics", to_json(f.metrics)}});
        }
        tj["folds"] = folds;
        j["thresholds"].push_back(tj);
    }
    nlohmann::json bases;
    for (const auto& base : r.bases) {
        nlohmann::json bj;
        bj["mean"] = to_json(base.mean);
        bj["stddev"] = to_json(base.stddev);
        bases[std::string(species::name(base.negative_species))] = bj;
    }
    j["base_models"] = bases;
    j["base_mean"] = to_json(r.base_mean);
    return j;
}

}  // namespace wingbeat
