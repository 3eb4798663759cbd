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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wingbeat/common.hpp"
#include "wingbeat/nn.hpp"

namespace wingbeat {

// Model checkpoint: "WBNN" magic + version, a JSON header describing the
// architecture, input shape and run metadata, then the parameter tensors in
// declaration order as little-endian float32.

namespace detail {

inline constexpr char kModelMagic[4] = {'W', 'B', 'N', 'N'};
inline constexpr uint32_t kModelVersion = 1;

inline nlohmann::json layer_to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
        case LayerKind::Conv2d:
            j["out_channels"] = s.out_channels;
            j["kernel"] = {s.kernel_h, s.kernel_w};
            j["activation"] = to_string(s.activation);
            break;
        case LayerKind::MaxPool2d:
            j["pool"] = {s.pool_h, s.pool_w};
            j["stride"] = s.stride;
            break;
        case LayerKind::Dense:
            j["units"] = s.out_units;
            j["activation"] = to_string(s.activation);
            break;
        case LayerKind::Dropout:
            j["rate"] = s.rate;
            break;
        case LayerKind::Flatten:
            break;
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::Conv2d:
            return LayerSpec::conv2d(j.at("out_channels").get<int>(), j.at("kernel")[0].get<int>(),
                                     j.at("kernel")[1].get<int>(),
                                     activation_from_string(j.at("activation").get<std::string>()));
        case LayerKind::MaxPool2d:
            return LayerSpec::maxpool2d(j.at("pool")[0].get<int>(), j.at("pool")[1].get<int>(),
                                        j.at("stride").get<int>());
        case LayerKind::Dense:
            return LayerSpec::dense(j.at("units").get<int>(),
                                    activation_from_string(j.at("activation").get<std::string>()));
        case LayerKind::Dropout:
            return LayerSpec::dropout(j.at("rate").get<double>());
        case LayerKind::Flatten:
            return LayerSpec::flatten();
    }
    fail("corrupt layer description");
}

inline void write_f32_tensor(std::ofstream& f, const Tensor<float>& t) {
    const uint32_t rank = static_cast<uint32_t>(t.shape.size());
    f.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t.shape) {
        const uint32_t v = static_cast<uint32_t>(d);
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
}

inline void read_f32_tensor(std::ifstream& f, Tensor<float>& t, const std::string& path) {
    uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 4);
    if (!f || rank > 8) fail(strfmt("%s: corrupt tensor header", path.c_str()));
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        d = static_cast<int>(v);
    }
    Tensor<float> loaded(shape);
    f.read(reinterpret_cast<char*>(loaded.data()),
           static_cast<std::streamsize>(loaded.numel() * 4));
    if (!f) fail(strfmt("%s: truncated tensor data", path.c_str()));
    if (loaded.shape != t.shape) {
        fail(strfmt("%s: tensor shape %s does not match architecture %s", path.c_str(),
                    shape_str(loaded.shape).c_str(), shape_str(t.shape).c_str()));
    }
    t = std::move(loaded);
}

}  // namespace detail

inline void save_model(const std::string& path, const Network<float>& net,
                       const nlohmann::json& metadata) {
    nlohmann::json header;
    header["input_shape"] = net.input_shape();
    header["layers"] = nlohmann::json::array();
    for (const auto& s : net.specs()) header["layers"].push_back(detail::layer_to_json(s));
    header["metadata"] = metadata;
    const std::string header_str = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(strfmt("%s: cannot open for writing", path.c_str()));
    f.write(detail::kModelMagic, 4);
    const uint32_t version = detail::kModelVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const uint64_t hlen = header_str.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (size_t l = 0; l < net.specs().size(); ++l) {
        if (net.weights[l].numel() == 0) continue;
        detail::write_f32_tensor(f, net.weights[l]);
        detail::write_f32_tensor(f, net.biases[l]);
    }
    if (!f) fail(strfmt("%s: write failed", path.c_str()));
}

struct LoadedModel {
    Network<float> net;
    nlohmann::json metadata;
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(strfmt("%s: cannot open", path.c_str()));
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, detail::kModelMagic, 4) != 0) {
        fail(strfmt("%s: not a model checkpoint", path.c_str()));
    }
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != detail::kModelVersion) {
        fail(strfmt("%s: unsupported checkpoint version %u", path.c_str(), version));
    }
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen > (1ull << 30)) fail(strfmt("%s: corrupt header", path.c_str()));
    std::string header_str(hlen, '\0');
    f.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!f) fail(strfmt("%s: truncated header", path.c_str()));

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const std::exception& e) {
        fail(strfmt("%s: header parse error: %s", path.c_str(), e.what()));
    }
    std::vector<int> input_shape = header.at("input_shape").get<std::vector<int>>();
    std::vector<LayerSpec> specs;
    for (const auto& lj : header.at("layers")) specs.push_back(detail::layer_from_json(lj));

    LoadedModel out{Network<float>(std::move(input_shape), std::move(specs)),
                    header.value("metadata", nlohmann::json::object())};
    for (size_t l = 0; l < out.net.specs().size(); ++l) {
        if (out.net.weights[l].numel() == 0) continue;
        detail::read_f32_tensor(f, out.net.weights[l], path);
        detail::read_f32_tensor(f, out.net.biases[l], path);
    }
    return out;
}

}  // namespace wingbeat
