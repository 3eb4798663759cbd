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

#include <array>
#include <string>
#include <string_view>

#include "wingbeat/common.hpp"

namespace wingbeat::species {

// Fixed label set: 22 species with the two Anopheles species split into
// named laboratory strains, 23 classes total. The mapping name <-> index is
// the one bijection used everywhere (manifests, checkpoints, reports).
inline constexpr int kCount = 23;

// Aedes aegypti is the detection target.
inline constexpr int kPositive = 0;

inline constexpr std::array<std::string_view, kCount> kNames = {
    "Aedes_aegypti",
    "Aedes_albopictus",
    "Aedes_mediovittatus",
    "Aedes_sierrensis",
    "Anopheles_albimanus",
    "Anopheles_arabiensis_dongola",
    "Anopheles_arabiensis_rufisque",
    "Anopheles_atroparvus",
    "Anopheles_dirus",
    "Anopheles_farauti",
    "Anopheles_freeborni",
    "Anopheles_gambiae_akron",
    "Anopheles_gambiae_kisumu",
    "Anopheles_gambiae_rsp",
    "Anopheles_merus",
    "Anopheles_minimus",
    "Anopheles_quadriannulatus",
    "Anopheles_quadrimaculatus",
    "Anopheles_stephensi",
    "Culex_pipiens",
    "Culex_quinquefasciatus",
    "Culex_tarsalis",
    "Culiseta_incidens",
};

inline std::string_view name(int index) {
    if (index < 0 || index >= kCount) fail(strfmt("species index %d out of range", index));
    return kNames[static_cast<size_t>(index)];
}

// -1 when unknown.
inline int find(std::string_view n) {
    for (int i = 0; i < kCount; ++i) {
        if (kNames[static_cast<size_t>(i)] == n) return i;
    }
    return -1;
}

inline bool is_positive(int index) { return index == kPositive; }

}  // namespace wingbeat::species

namespace wingbeat {

struct SpeciesLabel {
    int index = -1;

    SpeciesLabel() = default;
    explicit SpeciesLabel(int idx) : index(idx) { species::name(idx); }

    static SpeciesLabel from_name(std::string_view n) {
        int idx = species::find(n);
        if (idx < 0) fail(strfmt("unknown species name \"%.*s\"", static_cast<int>(n.size()), n.data()));
        return SpeciesLabel(idx);
    }

    std::string_view name() const { return species::name(index); }
    bool positive() const { return species::is_positive(index); }
    bool operator==(const SpeciesLabel& o) const { return index == o.index; }
};

}  // namespace wingbeat
