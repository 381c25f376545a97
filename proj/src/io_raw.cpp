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
#include <vector>

#include <json.hpp>

#include "mdreg/io.hpp"

namespace mdreg {

namespace {

using nlohmann::json;

std::string data_path_for(const std::string &json_path) {
    const auto pos = json_path.rfind(".json");
    if (pos == std::string::npos || pos != json_path.size() - 5)
        throw invalid_input("raw loader expects a .json sidecar path: " + json_path);
    return json_path.substr(0, pos) + ".raw";
}

void write_file(const std::string &path, const void *data, std::size_t bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw parse_error("cannot open for writing: " + path);
    f.write(static_cast<const char *>(data), static_cast<std::streamsize>(bytes));
    if (!f) throw parse_error("short write: " + path);
}

std::vector<char> read_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw parse_error("cannot open: " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    f.read(buf.data(), size);
    if (!f) throw parse_error("short read: " + path);
    return buf;
}

void write_sidecar(const std::string &base, Dims3 dims, std::array<float, 3> spacing,
                   const std::string &dtype, int channels) {
    json j;
    j["dims"] = {dims.h, dims.w, dims.l};
    j["spacing"] = {spacing[0], spacing[1], spacing[2]};
    j["dtype"] = dtype;
    j["order"] = "xyz-row-major";
    if (channels != 1) j["channels"] = channels;
    const std::string text = j.dump(2) + "\n";
    write_file(base + ".json", text.data(), text.size());
}

struct RawHeader {
    Dims3 dims;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::string dtype;
    int channels = 1;
};

RawHeader read_sidecar(const std::string &json_path) {
    const auto buf = read_file(json_path);
    json j;
    try {
        j = json::parse(buf.begin(), buf.end());
    } catch (const json::exception &e) {
        throw parse_error("invalid JSON sidecar " + json_path + ": " + e.what());
    }
    RawHeader h;
    try {
        const auto dims = j.at("dims");
        if (dims.size() != 3) throw parse_error("sidecar field 'dims' must have 3 entries");
        h.dims = Dims3{dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
        const auto sp = j.at("spacing");
        for (int i = 0; i < 3; ++i) h.spacing[static_cast<std::size_t>(i)] = sp[static_cast<std::size_t>(i)].get<float>();
        h.dtype = j.at("dtype").get<std::string>();
        if (j.at("order").get<std::string>() != "xyz-row-major")
            throw parse_error("sidecar field 'order' must be xyz-row-major");
        h.channels = j.value("channels", 1);
    } catch (const json::exception &e) {
        throw parse_error("sidecar " + json_path + " missing field: " + e.what());
    }
    if (h.dims.h < 1 || h.dims.w < 1 || h.dims.l < 1)
        throw parse_error("sidecar field 'dims' must be positive");
    if (h.channels < 1) throw parse_error("sidecar field 'channels' must be positive");
    return h;
}

std::vector<char> read_payload(const std::string &json_path, const RawHeader &h,
                               std::size_t elem_size) {
    const std::string dpath = data_path_for(json_path);
    auto buf = read_file(dpath);
    const std::size_t expected =
        static_cast<std::size_t>(voxel_count(h.dims)) * static_cast<std::size_t>(h.channels) * elem_size;
    if (buf.size() != expected)
        throw parse_error("raw data length mismatch in " + dpath + ": expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(buf.size()));
    return buf;
}

} // namespace

void save_raw(const Volume &v, const std::string &base_path) {
    write_sidecar(base_path, v.dims, v.spacing, "f32", 1);
    write_file(base_path + ".raw", v.data.data(), v.data.size() * sizeof(float));
}

void save_raw(const LabelVolume &v, const std::string &base_path) {
    std::vector<std::uint16_t> packed(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (v.data[i] < 0 || v.data[i] > 65535)
            throw invalid_input("label value out of u16 range");
        packed[i] = static_cast<std::uint16_t>(v.data[i]);
    }
    write_sidecar(base_path, v.dims, v.spacing, "u16", 1);
    write_file(base_path + ".raw", packed.data(), packed.size() * sizeof(std::uint16_t));
}

void save_raw(const DisplacementField &f, const std::string &base_path) {
    write_sidecar(base_path, f.dims, {1.0f, 1.0f, 1.0f}, "f32", 3);
    write_file(base_path + ".raw", f.data.data(), f.data.size() * sizeof(float));
}

Volume load_raw_volume(const std::string &json_path) {
    const RawHeader h = read_sidecar(json_path);
    if (h.dtype != "f32" || h.channels != 1)
        throw parse_error("expected a single-channel f32 raw volume: " + json_path);
    const auto buf = read_payload(json_path, h, sizeof(float));
    Volume v(h.dims, 0.0f, h.spacing);
    std::memcpy(v.data.data(), buf.data(), buf.size());
    for (float x : v.data)
        if (!std::isfinite(x)) throw parse_error("non-finite voxel in " + json_path);
    return v;
}

LabelVolume load_raw_labels(const std::string &json_path) {
    const RawHeader h = read_sidecar(json_path);
    if (h.dtype != "u16" || h.channels != 1)
        throw parse_error("expected a single-channel u16 raw label volume: " + json_path);
    const auto buf = read_payload(json_path, h, sizeof(std::uint16_t));
    LabelVolume v(h.dims, h.spacing);
    const auto *src = reinterpret_cast<const std::uint16_t *>(buf.data());
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = src[i];
    return v;
}

DisplacementField load_raw_field(const std::string &json_path) {
    const RawHeader h = read_sidecar(json_path);
    if (h.dtype != "f32" || h.channels != 3)
        throw parse_error("expected a 3-channel f32 raw field: " + json_path);
    const auto buf = read_payload(json_path, h, sizeof(float));
    DisplacementField f(h.dims);
    std::memcpy(f.data.data(), buf.data(), buf.size());
    for (float x : f.data)
        if (!std::isfinite(x)) throw parse_error("non-finite displacement in " + json_path);
    return f;
}

} // namespace mdreg
