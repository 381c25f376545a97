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
#include <vector>

#include "mdreg/common.hpp"
#include "mdreg/volume.hpp"

namespace mdreg {
namespace kern {

// One axis of a clamp-to-edge trilinear lookup: value = v[i0]*(1-f) + v[i1]*f.
// `live` is false when the coordinate fell outside [0, dim-1], where the
// clamped sample has zero derivative with respect to the coordinate.
template <typename T>
struct AxisSample {
    int i0 = 0;
    int i1 = 0;
    T f = T(0);
    bool live = false;
};

template <typename T>
inline AxisSample<T> resolve_axis(T x, int dim) {
    AxisSample<T> a;
    if (dim <= 1) return a; // axis collapses to a single slice
    T xc = clamp_val(x, T(0), T(dim - 1));
    int i0 = static_cast<int>(std::floor(xc));
    if (i0 > dim - 2) i0 = dim - 2;
    a.i0 = i0;
    a.i1 = i0 + 1;
    a.f = xc - static_cast<T>(i0);
    a.live = x > T(0) && x < T(dim - 1);
    return a;
}

// Trilinear sample of one channel plane at a resolved position.
template <typename T>
inline T sample_plane(const T *plane, const Dims3 &d, const AxisSample<T> &ax,
                      const AxisSample<T> &ay, const AxisSample<T> &az) {
    const std::int64_t sy = d.h;
    const std::int64_t sz = static_cast<std::int64_t>(d.h) * d.w;
    const T *p00 = plane + az.i0 * sz + ay.i0 * sy;
    const T *p10 = plane + az.i0 * sz + ay.i1 * sy;
    const T *p01 = plane + az.i1 * sz + ay.i0 * sy;
    const T *p11 = plane + az.i1 * sz + ay.i1 * sy;
    const T c00 = p00[ax.i0] * (T(1) - ax.f) + p00[ax.i1] * ax.f;
    const T c10 = p10[ax.i0] * (T(1) - ax.f) + p10[ax.i1] * ax.f;
    const T c01 = p01[ax.i0] * (T(1) - ax.f) + p01[ax.i1] * ax.f;
    const T c11 = p11[ax.i0] * (T(1) - ax.f) + p11[ax.i1] * ax.f;
    const T c0 = c00 * (T(1) - ay.f) + c10 * ay.f;
    const T c1 = c01 * (T(1) - ay.f) + c11 * ay.f;
    return c0 * (T(1) - az.f) + c1 * az.f;
}

// Derivative of sample_plane with respect to the three (unclamped)
// coordinates. Dead axes contribute zero.
template <typename T>
inline std::array<T, 3> sample_plane_coord_grad(const T *plane, const Dims3 &d,
                                                const AxisSample<T> &ax,
                                                const AxisSample<T> &ay,
                                                const AxisSample<T> &az) {
    const std::int64_t sy = d.h;
    const std::int64_t sz = static_cast<std::int64_t>(d.h) * d.w;
    const T v000 = plane[az.i0 * sz + ay.i0 * sy + ax.i0];
    const T v100 = plane[az.i0 * sz + ay.i0 * sy + ax.i1];
    const T v010 = plane[az.i0 * sz + ay.i1 * sy + ax.i0];
    const T v110 = plane[az.i0 * sz + ay.i1 * sy + ax.i1];
    const T v001 = plane[az.i1 * sz + ay.i0 * sy + ax.i0];
    const T v101 = plane[az.i1 * sz + ay.i0 * sy + ax.i1];
    const T v011 = plane[az.i1 * sz + ay.i1 * sy + ax.i0];
    const T v111 = plane[az.i1 * sz + ay.i1 * sy + ax.i1];
    const T fx = ax.f, fy = ay.f, fz = az.f;
    std::array<T, 3> g{T(0), T(0), T(0)};
    if (ax.live)
        g[0] = ((v100 - v000) * (T(1) - fy) + (v110 - v010) * fy) * (T(1) - fz) +
               ((v101 - v001) * (T(1) - fy) + (v111 - v011) * fy) * fz;
    if (ay.live)
        g[1] = ((v010 - v000) * (T(1) - fx) + (v110 - v100) * fx) * (T(1) - fz) +
               ((v011 - v001) * (T(1) - fx) + (v111 - v101) * fx) * fz;
    if (az.live)
        g[2] = ((v001 - v000) * (T(1) - fx) + (v101 - v100) * fx) * (T(1) - fy) +
               ((v011 - v010) * (T(1) - fx) + (v111 - v110) * fx) * fy;
    return g;
}

// Scatter an output gradient into the 8 corners of one channel plane.
template <typename T>
inline void scatter_plane(T *gplane, const Dims3 &d, const AxisSample<T> &ax,
                          const AxisSample<T> &ay, const AxisSample<T> &az, T g) {
    const std::int64_t sy = d.h;
    const std::int64_t sz = static_cast<std::int64_t>(d.h) * d.w;
    const T wx0 = T(1) - ax.f, wx1 = ax.f;
    const T wy0 = T(1) - ay.f, wy1 = ay.f;
    const T wz0 = T(1) - az.f, wz1 = az.f;
    gplane[az.i0 * sz + ay.i0 * sy + ax.i0] += g * wx0 * wy0 * wz0;
    gplane[az.i0 * sz + ay.i0 * sy + ax.i1] += g * wx1 * wy0 * wz0;
    gplane[az.i0 * sz + ay.i1 * sy + ax.i0] += g * wx0 * wy1 * wz0;
    gplane[az.i0 * sz + ay.i1 * sy + ax.i1] += g * wx1 * wy1 * wz0;
    gplane[az.i1 * sz + ay.i0 * sy + ax.i0] += g * wx0 * wy0 * wz1;
    gplane[az.i1 * sz + ay.i0 * sy + ax.i1] += g * wx1 * wy0 * wz1;
    gplane[az.i1 * sz + ay.i1 * sy + ax.i0] += g * wx0 * wy1 * wz1;
    gplane[az.i1 * sz + ay.i1 * sy + ax.i1] += g * wx1 * wy1 * wz1;
}

// out(x) = in(x + field(x)) for `channels` channel-major planes.
// `field` holds 3 component planes on the same grid.
template <typename T>
void warp_fwd(const T *in, int channels, const Dims3 &d, const T *field, T *out) {
    const std::int64_t n = voxel_count(d);
    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                const auto ax = resolve_axis<T>(static_cast<T>(x) + field[p], d.h);
                const auto ay = resolve_axis<T>(static_cast<T>(y) + field[n + p], d.w);
                const auto az = resolve_axis<T>(static_cast<T>(z) + field[2 * n + p], d.l);
                for (int c = 0; c < channels; ++c)
                    out[c * n + p] = sample_plane(in + c * n, d, ax, ay, az);
            }
}

// Accumulates gradients for warp_fwd into gin and gfield (either may be null).
template <typename T>
void warp_bwd(const T *in, int channels, const Dims3 &d, const T *field,
              const T *gout, T *gin, T *gfield) {
    const std::int64_t n = voxel_count(d);
    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                const auto ax = resolve_axis<T>(static_cast<T>(x) + field[p], d.h);
                const auto ay = resolve_axis<T>(static_cast<T>(y) + field[n + p], d.w);
                const auto az = resolve_axis<T>(static_cast<T>(z) + field[2 * n + p], d.l);
                T gx = T(0), gy = T(0), gz = T(0);
                for (int c = 0; c < channels; ++c) {
                    const T g = gout[c * n + p];
                    if (g == T(0)) continue;
                    if (gin) scatter_plane(gin + c * n, d, ax, ay, az, g);
                    if (gfield) {
                        const auto cg = sample_plane_coord_grad(in + c * n, d, ax, ay, az);
                        gx += g * cg[0];
                        gy += g * cg[1];
                        gz += g * cg[2];
                    }
                }
                if (gfield) {
                    gfield[p] += gx;
                    gfield[n + p] += gy;
                    gfield[2 * n + p] += gz;
                }
            }
}

// 2x average pooling with replicate padding for odd dims.
template <typename T>
void avg_pool_fwd(const T *in, int channels, const Dims3 &d, T *out) {
    const Dims3 od = halved(d);
    const std::int64_t n_in = voxel_count(d);
    const std::int64_t n_out = voxel_count(od);
    for (int c = 0; c < channels; ++c) {
        const T *plane = in + c * n_in;
        T *oplane = out + c * n_out;
        std::int64_t o = 0;
        for (int z = 0; z < od.l; ++z)
            for (int y = 0; y < od.w; ++y)
                for (int x = 0; x < od.h; ++x, ++o) {
                    T s = T(0);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int xi = std::min(2 * x + dx, d.h - 1);
                                const int yi = std::min(2 * y + dy, d.w - 1);
                                const int zi = std::min(2 * z + dz, d.l - 1);
                                s += plane[voxel_index(d, xi, yi, zi)];
                            }
                    oplane[o] = s / T(8);
                }
    }
}

template <typename T>
void avg_pool_bwd(int channels, const Dims3 &d, const T *gout, T *gin) {
    const Dims3 od = halved(d);
    const std::int64_t n_in = voxel_count(d);
    const std::int64_t n_out = voxel_count(od);
    for (int c = 0; c < channels; ++c) {
        const T *goplane = gout + c * n_out;
        T *giplane = gin + c * n_in;
        std::int64_t o = 0;
        for (int z = 0; z < od.l; ++z)
            for (int y = 0; y < od.w; ++y)
                for (int x = 0; x < od.h; ++x, ++o) {
                    const T g = goplane[o] / T(8);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int xi = std::min(2 * x + dx, d.h - 1);
                                const int yi = std::min(2 * y + dy, d.w - 1);
                                const int zi = std::min(2 * z + dz, d.l - 1);
                                giplane[voxel_index(d, xi, yi, zi)] += g;
                            }
                }
    }
}

// Trilinear upsample of channel planes onto target dims with output voxel y
// sampling input coordinate y/2, times a value scale (2 for displacement
// vectors, which double when expressed on the finer grid).
template <typename T>
void upsample2_fwd(const T *in, int channels, const Dims3 &d, const Dims3 &td,
                   T scale, T *out) {
    const std::int64_t n_in = voxel_count(d);
    const std::int64_t n_out = voxel_count(td);
    std::vector<AxisSample<T>> axs(td.h), ays(td.w), azs(td.l);
    for (int x = 0; x < td.h; ++x) axs[x] = resolve_axis<T>(T(x) / T(2), d.h);
    for (int y = 0; y < td.w; ++y) ays[y] = resolve_axis<T>(T(y) / T(2), d.w);
    for (int z = 0; z < td.l; ++z) azs[z] = resolve_axis<T>(T(z) / T(2), d.l);
    for (int c = 0; c < channels; ++c) {
        const T *plane = in + c * n_in;
        T *oplane = out + c * n_out;
        std::int64_t o = 0;
        for (int z = 0; z < td.l; ++z)
            for (int y = 0; y < td.w; ++y)
                for (int x = 0; x < td.h; ++x, ++o)
                    oplane[o] = scale * sample_plane(plane, d, axs[x], ays[y], azs[z]);
    }
}

template <typename T>
void upsample2_bwd(int channels, const Dims3 &d, const Dims3 &td, T scale,
                   const T *gout, T *gin) {
    const std::int64_t n_in = voxel_count(d);
    const std::int64_t n_out = voxel_count(td);
    std::vector<AxisSample<T>> axs(td.h), ays(td.w), azs(td.l);
    for (int x = 0; x < td.h; ++x) axs[x] = resolve_axis<T>(T(x) / T(2), d.h);
    for (int y = 0; y < td.w; ++y) ays[y] = resolve_axis<T>(T(y) / T(2), d.w);
    for (int z = 0; z < td.l; ++z) azs[z] = resolve_axis<T>(T(z) / T(2), d.l);
    for (int c = 0; c < channels; ++c) {
        T *giplane = gin + c * n_in;
        const T *goplane = gout + c * n_out;
        std::int64_t o = 0;
        for (int z = 0; z < td.l; ++z)
            for (int y = 0; y < td.w; ++y)
                for (int x = 0; x < td.h; ++x, ++o)
                    scatter_plane(giplane, d, axs[x], ays[y], azs[z], scale * goplane[o]);
    }
}

} // namespace kern

inline void check_upsample_target(const Dims3 &d, const Dims3 &td) {
    auto ok = [](int in, int out) { return out >= 2 * in - 1 && out <= 2 * in + 1; };
    if (!ok(d.h, td.h) || !ok(d.w, td.w) || !ok(d.l, td.l))
        throw invalid_input("upsample target dims " + dims_to_string(td) +
                            " not within doubling range of " + dims_to_string(d));
}

// Trilinear sample of a scalar volume at a continuous voxel-space coordinate,
// clamp-to-edge outside [0, dim-1].
inline float trilinear_sample(const Volume &v, std::array<float, 3> coord) {
    if (v.dims.h < 2 || v.dims.w < 2 || v.dims.l < 2)
        throw invalid_input("trilinear_sample requires dims >= 2 on every axis");
    const auto ax = kern::resolve_axis(coord[0], v.dims.h);
    const auto ay = kern::resolve_axis(coord[1], v.dims.w);
    const auto az = kern::resolve_axis(coord[2], v.dims.l);
    return kern::sample_plane(v.data.data(), v.dims, ax, ay, az);
}

inline std::vector<float> trilinear_sample(const FeatureMap &fm, std::array<float, 3> coord) {
    if (fm.dims.h < 2 || fm.dims.w < 2 || fm.dims.l < 2)
        throw invalid_input("trilinear_sample requires dims >= 2 on every axis");
    const auto ax = kern::resolve_axis(coord[0], fm.dims.h);
    const auto ay = kern::resolve_axis(coord[1], fm.dims.w);
    const auto az = kern::resolve_axis(coord[2], fm.dims.l);
    const std::int64_t n = voxel_count(fm.dims);
    std::vector<float> out(static_cast<std::size_t>(fm.channels));
    for (int c = 0; c < fm.channels; ++c)
        out[static_cast<std::size_t>(c)] = kern::sample_plane(fm.data.data() + c * n, fm.dims, ax, ay, az);
    return out;
}

inline FeatureMap avg_pool_2x(const FeatureMap &fm) {
    FeatureMap out(fm.channels, halved(fm.dims));
    kern::avg_pool_fwd(fm.data.data(), fm.channels, fm.dims, out.data.data());
    return out;
}

inline DisplacementField upsample_field_2x(const DisplacementField &f, Dims3 target) {
    check_upsample_target(f.dims, target);
    DisplacementField out(target);
    kern::upsample2_fwd(f.data.data(), 3, f.dims, target, 2.0f, out.data.data());
    return out;
}

} // namespace mdreg
