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
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mdreg {

// Bad arguments or inconsistent shapes supplied by the caller.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated files.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or other numerical breakdown during computation.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Voxel counts along the x, y, z axes.
struct Dims3 {
    int h = 0;
    int w = 0;
    int l = 0;

    friend bool operator==(const Dims3 &a, const Dims3 &b) {
        return a.h == b.h && a.w == b.w && a.l == b.l;
    }
    friend bool operator!=(const Dims3 &a, const Dims3 &b) { return !(a == b); }
};

inline std::int64_t voxel_count(const Dims3 &d) {
    return static_cast<std::int64_t>(d.h) * d.w * d.l;
}

// Flat index with x fastest, then y, then z.
inline std::int64_t voxel_index(const Dims3 &d, int x, int y, int z) {
    return static_cast<std::int64_t>(z) * d.w * d.h +
           static_cast<std::int64_t>(y) * d.h + x;
}

inline bool in_bounds(const Dims3 &d, int x, int y, int z) {
    return x >= 0 && x < d.h && y >= 0 && y < d.w && z >= 0 && z < d.l;
}

inline std::string dims_to_string(const Dims3 &d) {
    return std::to_string(d.h) + "x" + std::to_string(d.w) + "x" +
           std::to_string(d.l);
}

inline int ceil_div2(int v) { return (v + 1) / 2; }

inline Dims3 halved(const Dims3 &d) {
    return {ceil_div2(d.h), ceil_div2(d.w), ceil_div2(d.l)};
}

template <typename T>
inline T clamp_val(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

} // namespace mdreg
