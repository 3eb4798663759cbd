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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wingbeat/common.hpp"
#include "wingbeat/labels.hpp"

namespace wingbeat {

// A manifest row. keep_segments carry the human curation decision (which
// stretches of each recording actually contain wingbeat sound); an empty
// list means keep the whole file.
struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
};

struct ManifestEntry {
    std::string file_path;  // as written in the manifest; doubles as source id
    SpeciesLabel species;
    std::vector<Segment> keep_segments;

    double kept_duration_or(double full_duration_s) const {
        if (keep_segments.empty()) return full_duration_s;
        double total = 0.0;
        for (const auto& s : keep_segments) total += s.end_s - s.start_s;
        return total;
    }
};

struct Manifest {
    std::string path;
    std::string base_dir;  // manifest directory; relative audio paths resolve against it
    std::vector<ManifestEntry> entries;
};

inline std::string resolve_audio_path(const Manifest& m, const ManifestEntry& e) {
    std::filesystem::path p(e.file_path);
    if (p.is_absolute() || m.base_dir.empty()) return e.file_path;
    return (std::filesystem::path(m.base_dir) / p).string();
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline double parse_seconds(const std::string& s, int row, const char* what) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(strfmt("manifest row %d: cannot parse %s \"%s\"", row, what, s.c_str()));
    }
}

// segments field: empty, or "start-end" pairs joined by ';', seconds with
// '.' decimal separator, e.g. "0.0-1.5;2.0-3.25"
inline std::vector<Segment> parse_segments(const std::string& field, int row) {
    std::vector<Segment> segs;
    if (trim(field).empty()) return segs;
    for (const auto& part : split(field, ';')) {
        const std::string p = trim(part);
        const size_t dash = p.find('-', 1);  // position 0 would be a sign
        if (dash == std::string::npos) {
            fail(strfmt("manifest row %d: malformed segment \"%s\" (expected start-end)", row,
                        p.c_str()));
        }
        Segment s;
        s.start_s = parse_seconds(trim(p.substr(0, dash)), row, "segment start");
        s.end_s = parse_seconds(trim(p.substr(dash + 1)), row, "segment end");
        if (s.start_s < 0.0) {
            fail(strfmt("manifest row %d: segment start %.6g is negative", row, s.start_s));
        }
        if (s.end_s <= s.start_s) {
            fail(strfmt("manifest row %d: segment end %.6g <= start %.6g", row, s.end_s,
                        s.start_s));
        }
        segs.push_back(s);
    }
    for (size_t i = 1; i < segs.size(); ++i) {
        if (segs[i].start_s < segs[i - 1].end_s) {
            fail(strfmt("manifest row %d: segments overlap or are unsorted (%.6g-%.6g after "
                        "%.6g-%.6g)",
                        row, segs[i].start_s, segs[i].end_s, segs[i - 1].start_s,
                        segs[i - 1].end_s));
        }
    }
    return segs;
}

}  // namespace detail

// Loads a UTF-8 CSV manifest with header `file_path,species,segments`.
// Rows are returned in file order; species names are validated against the
// fixed label set and errors name the offending data row (1-based).
inline Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(strfmt("cannot open manifest %s", path.c_str()));

    Manifest m;
    m.path = path;
    m.base_dir = std::filesystem::path(path).parent_path().string();

    std::string line;
    if (!std::getline(f, line)) fail(strfmt("manifest %s is empty", path.c_str()));
    {
        auto cols = detail::split(detail::trim(line), ',');
        if (cols.size() != 3 || detail::trim(cols[0]) != "file_path" ||
            detail::trim(cols[1]) != "species" || detail::trim(cols[2]) != "segments") {
            fail(strfmt("manifest %s: expected header \"file_path,species,segments\"",
                        path.c_str()));
        }
    }

    int row = 0;
    while (std::getline(f, line)) {
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        ++row;
        auto cols = detail::split(t, ',');
        if (cols.size() != 3) {
            fail(strfmt("manifest row %d: expected 3 fields, got %zu", row, cols.size()));
        }
        ManifestEntry e;
        e.file_path = detail::trim(cols[0]);
        if (e.file_path.empty()) fail(strfmt("manifest row %d: empty file path", row));
        const std::string sp = detail::trim(cols[1]);
        const int idx = species::find(sp);
        if (idx < 0) {
            fail(strfmt("manifest row %d: unknown species \"%s\"", row, sp.c_str()));
        }
        e.species = SpeciesLabel(idx);
        e.keep_segments = detail::parse_segments(cols[2], row);
        m.entries.push_back(std::move(e));
    }
    return m;
}

}  // namespace wingbeat
