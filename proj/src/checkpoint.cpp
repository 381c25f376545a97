/*
Copyright 2026 the mdreg authors
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mdreg/io.hpp"

namespace mdreg {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'D', 'T', '2'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream &f, const T &v) {
    f.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream &f, const std::string &what) {
    T v;
    f.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!f) throw parse_error("checkpoint truncated while reading " + what);
    return v;
}

} // namespace

std::string model_config_to_json(const ModelConfig &cfg) {
    json j;
    j["base_channels"] = cfg.encoder.base_channels;
    j["leaky_slope"] = cfg.encoder.leaky_slope;
    j["heads_per_level"] = cfg.heads_per_level;
    j["head_dim"] = cfg.head_dim;
    j["neighborhood"] = cfg.neighborhood;
    j["diffeomorphic"] = cfg.diffeomorphic;
    j["ss_steps"] = cfg.ss_steps;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string &json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception &e) {
        throw parse_error(std::string("invalid model config JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.encoder.base_channels = j.at("base_channels").get<int>();
        cfg.encoder.leaky_slope = j.at("leaky_slope").get<float>();
        cfg.heads_per_level = j.at("heads_per_level").get<std::vector<int>>();
        cfg.head_dim = j.at("head_dim").get<int>();
        cfg.neighborhood = j.at("neighborhood").get<int>();
        cfg.diffeomorphic = j.at("diffeomorphic").get<bool>();
        cfg.ss_steps = j.at("ss_steps").get<int>();
    } catch (const json::exception &e) {
        throw parse_error(std::string("model config JSON missing field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::string &path, ModelParams<float> &params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw parse_error("cannot open for writing: " + path);
    f.write(kMagic, 4);
    put(f, kVersion);
    const std::string cfg = model_config_to_json(params.cfg);
    put(f, static_cast<std::uint64_t>(cfg.size()));
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    auto tensors = params.all_tensors();
    put(f, static_cast<std::uint32_t>(tensors.size()));
    for (ParamTensor<float> *p : tensors) {
        put(f, static_cast<std::uint32_t>(p->name.size()));
        f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put(f, static_cast<std::uint32_t>(p->value.shape.size()));
        for (int dim : p->value.shape) put(f, static_cast<std::uint32_t>(dim));
        put(f, static_cast<std::uint64_t>(p->value.size()));
        f.write(reinterpret_cast<const char *>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    if (!f) throw parse_error("short write: " + path);
}

ModelParams<float> load_checkpoint(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw parse_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw parse_error("bad checkpoint magic in " + path);
    const auto version = get<std::uint32_t>(f, "version");
    if (version != kVersion)
        throw parse_error("unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = get<std::uint64_t>(f, "config length");
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    if (!f) throw parse_error("checkpoint truncated while reading config");
    ModelParams<float> params = init_model<float>(model_config_from_json(cfg_text), 0);

    auto tensors = params.all_tensors();
    const auto count = get<std::uint32_t>(f, "tensor count");
    if (count != tensors.size())
        throw parse_error("checkpoint tensor count " + std::to_string(count) +
                          " does not match model layout (" + std::to_string(tensors.size()) + ")");
    for (ParamTensor<float> *p : tensors) {
        const auto name_len = get<std::uint32_t>(f, "tensor name length");
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw parse_error("checkpoint truncated while reading tensor name");
        if (name != p->name)
            throw parse_error("checkpoint tensor '" + name + "' does not match expected '" +
                              p->name + "'");
        const auto ndims = get<std::uint32_t>(f, "tensor rank");
        std::vector<int> shape(ndims);
        for (auto &dim : shape) dim = static_cast<int>(get<std::uint32_t>(f, "tensor dim"));
        if (shape != p->value.shape)
            throw parse_error("checkpoint tensor '" + name + "' has unexpected shape");
        const auto n = get<std::uint64_t>(f, "tensor size");
        if (n != static_cast<std::uint64_t>(p->value.size()))
            throw parse_error("checkpoint tensor '" + name + "' has unexpected element count");
        f.read(reinterpret_cast<char *>(p->value.data.data()),
               static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw parse_error("checkpoint truncated while reading tensor data");
    }
    return params;
}

} // namespace mdreg
