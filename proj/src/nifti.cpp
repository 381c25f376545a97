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

#include "mdreg/io.hpp"

namespace mdreg {

namespace {

template <typename T>
T read_at(const std::vector<char> &buf, std::size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

} // namespace

// NIfTI-1 single-file reader. Header fields used: sizeof_hdr, dim[0..3],
// datatype, bitpix, pixdim[1..3], vox_offset, scl_slope, scl_inter, magic.
Volume load_nifti(const std::string &path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw parse_error("cannot open NIfTI file: " + path);
    const std::streamsize size = f.tellg();
    if (size < 348) throw parse_error("truncated NIfTI header in " + path);
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    f.read(buf.data(), size);
    if (!f) throw parse_error("short read: " + path);

    const auto sizeof_hdr = read_at<std::int32_t>(buf, 0);
    if (sizeof_hdr != 348)
        throw parse_error("bad NIfTI field sizeof_hdr (byte-swapped or invalid file)");
    char magic[4];
    std::memcpy(magic, buf.data() + 344, 4);
    if (!(magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' && magic[3] == '\0'))
        throw parse_error("bad NIfTI field magic: expected single-file magic n+1");

    std::int16_t dim[8];
    std::memcpy(dim, buf.data() + 40, sizeof(dim));
    if (dim[0] != 3)
        throw parse_error("unsupported dimensionality: NIfTI field dim[0] = " +
                          std::to_string(dim[0]));
    const Dims3 dims{dim[1], dim[2], dim[3]};
    if (dims.h < 1 || dims.w < 1 || dims.l < 1)
        throw parse_error("bad NIfTI field dim: non-positive extent");

    const auto datatype = read_at<std::int16_t>(buf, 70);
    const auto bitpix = read_at<std::int16_t>(buf, 72);
    float pixdim[8];
    std::memcpy(pixdim, buf.data() + 76, sizeof(pixdim));
    const auto vox_offset = read_at<float>(buf, 108);
    const auto scl_slope = read_at<float>(buf, 112);
    const auto scl_inter = read_at<float>(buf, 116);

    int elem = 0;
    switch (datatype) {
    case 2: elem = 1; break;  // u8
    case 4: elem = 2; break;  // i16
    case 16: elem = 4; break; // f32
    default:
        throw parse_error("unsupported NIfTI field datatype " + std::to_string(datatype) +
                          " (supported: 2, 4, 16)");
    }
    if (bitpix != elem * 8)
        throw parse_error("bad NIfTI field bitpix " + std::to_string(bitpix) +
                          " for datatype " + std::to_string(datatype));

    const std::size_t offset = static_cast<std::size_t>(vox_offset);
    if (vox_offset < 348.0f)
        throw parse_error("bad NIfTI field vox_offset: " + std::to_string(vox_offset));
    const std::size_t nvox = static_cast<std::size_t>(voxel_count(dims));
    if (offset + nvox * static_cast<std::size_t>(elem) > buf.size())
        throw parse_error("truncated NIfTI voxel data in " + path);

    Volume v(dims);
    for (int i = 0; i < 3; ++i) {
        const float s = pixdim[i + 1];
        v.spacing[static_cast<std::size_t>(i)] = s > 0.0f ? s : 1.0f;
    }
    const bool scaled = scl_slope != 0.0f;
    const char *base = buf.data() + offset;
    for (std::size_t i = 0; i < nvox; ++i) {
        float raw;
        if (datatype == 2) {
            raw = static_cast<float>(static_cast<std::uint8_t>(base[i]));
        } else if (datatype == 4) {
            std::int16_t s16;
            std::memcpy(&s16, base + i * 2, 2);
            raw = static_cast<float>(s16);
        } else {
            std::memcpy(&raw, base + i * 4, 4);
        }
        v.data[i] = scaled ? raw * scl_slope + scl_inter : raw;
        if (!std::isfinite(v.data[i]))
            throw parse_error("non-finite voxel value in " + path);
    }
    return v;
}

} // namespace mdreg
