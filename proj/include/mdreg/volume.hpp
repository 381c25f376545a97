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

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mdreg/common.hpp"
#include "mdreg/tensor.hpp"

namespace mdreg {

// Scalar 3D grid with spacing metadata. Data is row-major with x fastest.
struct Volume {
    Dims3 dims;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::vector<float> data;

    Volume() = default;
    explicit Volume(Dims3 d, float fill = 0.0f,
                    std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
        : dims(d), spacing(sp),
          data(static_cast<std::size_t>(voxel_count(d)), fill) {}

    float &at(int x, int y, int z) { return data[static_cast<std::size_t>(voxel_index(dims, x, y, z))]; }
    float at(int x, int y, int z) const { return data[static_cast<std::size_t>(voxel_index(dims, x, y, z))]; }
};

// Multi-channel 3D grid, channel-major.
struct FeatureMap {
    int channels = 0;
    Dims3 dims;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(int c, Dims3 d)
        : channels(c), dims(d),
          data(static_cast<std::size_t>(c * voxel_count(d)), 0.0f) {}

    float &at(int c, int x, int y, int z) {
        return data[static_cast<std::size_t>(static_cast<std::int64_t>(c) * voxel_count(dims) +
                                             voxel_index(dims, x, y, z))];
    }
    float at(int c, int x, int y, int z) const {
        return data[static_cast<std::size_t>(static_cast<std::int64_t>(c) * voxel_count(dims) +
                                             voxel_index(dims, x, y, z))];
    }
};

// Per-voxel 3-vector field in voxel units of its own grid. Stored as three
// channel-major component planes (x, y, z). The identity field is all zeros.
struct DisplacementField {
    Dims3 dims;
    std::vector<float> data;

    DisplacementField() = default;
    explicit DisplacementField(Dims3 d)
        : dims(d), data(static_cast<std::size_t>(3 * voxel_count(d)), 0.0f) {}

    float &at(int comp, int x, int y, int z) {
        return data[static_cast<std::size_t>(static_cast<std::int64_t>(comp) * voxel_count(dims) +
                                             voxel_index(dims, x, y, z))];
    }
    float at(int comp, int x, int y, int z) const {
        return data[static_cast<std::size_t>(static_cast<std::int64_t>(comp) * voxel_count(dims) +
                                             voxel_index(dims, x, y, z))];
    }
};

// Integer label map, 0 = background.
struct LabelVolume {
    Dims3 dims;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    explicit LabelVolume(Dims3 d, std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
        : dims(d), spacing(sp), data(static_cast<std::size_t>(voxel_count(d)), 0) {}

    std::int32_t &at(int x, int y, int z) { return data[static_cast<std::size_t>(voxel_index(dims, x, y, z))]; }
    std::int32_t at(int x, int y, int z) const { return data[static_cast<std::size_t>(voxel_index(dims, x, y, z))]; }
};

template <typename T>
Tensor<T> volume_to_tensor(const Volume &v) {
    Tensor<T> t({1, v.dims.h, v.dims.w, v.dims.l});
    for (std::size_t i = 0; i < v.data.size(); ++i) t.data[i] = static_cast<T>(v.data[i]);
    return t;
}

template <typename T>
Tensor<T> field_to_tensor(const DisplacementField &f) {
    Tensor<T> t({3, f.dims.h, f.dims.w, f.dims.l});
    for (std::size_t i = 0; i < f.data.size(); ++i) t.data[i] = static_cast<T>(f.data[i]);
    return t;
}

template <typename T>
DisplacementField tensor_to_field(const Tensor<T> &t, Dims3 dims) {
    if (t.size() != 3 * voxel_count(dims))
        throw invalid_input("tensor size does not match field dims");
    DisplacementField f(dims);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = static_cast<float>(t.data[i]);
    return f;
}

template <typename T>
Volume tensor_to_volume(const Tensor<T> &t, Dims3 dims,
                        std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f}) {
    if (t.size() != voxel_count(dims))
        throw invalid_input("tensor size does not match volume dims");
    Volume v(dims, 0.0f, spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(t.data[i]);
    return v;
}

} // namespace mdreg
