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

#include "mdreg/sampling.hpp"
#include "mdreg/volume.hpp"

namespace mdreg {

// out(x) = vol(x + phi(x)), trilinear with clamp-to-edge.
inline Volume warp(const Volume &vol, const DisplacementField &phi) {
    if (vol.dims != phi.dims)
        throw invalid_input("warp: volume dims " + dims_to_string(vol.dims) +
                            " do not match field dims " + dims_to_string(phi.dims));
    Volume out(vol.dims, 0.0f, vol.spacing);
    kern::warp_fwd(vol.data.data(), 1, vol.dims, phi.data.data(), out.data.data());
    return out;
}

inline FeatureMap warp(const FeatureMap &fm, const DisplacementField &phi) {
    if (fm.dims != phi.dims)
        throw invalid_input("warp: feature dims do not match field dims");
    FeatureMap out(fm.channels, fm.dims);
    kern::warp_fwd(fm.data.data(), fm.channels, fm.dims, phi.data.data(), out.data.data());
    return out;
}

// out(x) = res(x) + prev(x + res(x)). `res` is the residual estimated at the
// current level, `prev` the upsampled running total, so that
// warp(vol, compose(prev, res)) ~= warp(warp(vol, prev), res).
inline DisplacementField compose(const DisplacementField &prev, const DisplacementField &res) {
    if (prev.dims != res.dims)
        throw invalid_input("compose: field dims mismatch");
    DisplacementField out(prev.dims);
    kern::warp_fwd(prev.data.data(), 3, prev.dims, res.data.data(), out.data.data());
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += res.data[i];
    return out;
}

// Per-voxel det(I + grad u), central differences at interior voxels and
// one-sided differences at borders, unit voxel spacing.
inline Volume jacobian_determinant(const DisplacementField &phi) {
    const Dims3 d = phi.dims;
    if (d.h < 3 || d.w < 3 || d.l < 3)
        throw invalid_input("jacobian_determinant requires dims >= 3 per axis");
    Volume out(d);
    const std::int64_t n = voxel_count(d);
    auto u = [&](int comp, int x, int y, int z) {
        return phi.data[static_cast<std::size_t>(comp * n + voxel_index(d, x, y, z))];
    };
    auto diff = [&](int comp, int axis, int x, int y, int z) -> float {
        int lim = axis == 0 ? d.h : (axis == 1 ? d.w : d.l);
        int pos = axis == 0 ? x : (axis == 1 ? y : z);
        int lo = pos > 0 ? -1 : 0;
        int hi = pos < lim - 1 ? 1 : 0;
        int dx = axis == 0 ? 1 : 0, dy = axis == 1 ? 1 : 0, dz = axis == 2 ? 1 : 0;
        const float a = u(comp, x + hi * dx, y + hi * dy, z + hi * dz);
        const float b = u(comp, x + lo * dx, y + lo * dy, z + lo * dz);
        return (a - b) / static_cast<float>(hi - lo);
    };
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x) {
                float m[3][3];
                for (int comp = 0; comp < 3; ++comp)
                    for (int axis = 0; axis < 3; ++axis)
                        m[comp][axis] = diff(comp, axis, x, y, z) + (comp == axis ? 1.0f : 0.0f);
                const float det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                                  m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                                  m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                out.at(x, y, z) = det;
            }
    return out;
}

// Fraction of voxels with non-positive Jacobian determinant.
inline double folding_ratio(const Volume &jac) {
    if (jac.data.empty()) throw invalid_input("folding_ratio: empty volume");
    std::int64_t folded = 0;
    for (float v : jac.data)
        if (v <= 0.0f) ++folded;
    return static_cast<double>(folded) / static_cast<double>(jac.data.size());
}

inline double folding_ratio(const DisplacementField &phi) {
    return folding_ratio(jacobian_determinant(phi));
}

} // namespace mdreg
