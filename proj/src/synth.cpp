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

#include "mdreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mdreg/field_ops.hpp"
#include "mdreg/metrics.hpp"
#include "mdreg/reghead.hpp"
#include "mdreg/rng.hpp"

namespace mdreg {

namespace {

// Separable Gaussian blur with per-voxel renormalization at the borders.
void gaussian_blur(std::vector<float> &data, const Dims3 &d, float sigma) {
    if (sigma <= 0.0f) return;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * r + 1));
    for (int i = -r; i <= r; ++i)
        k[static_cast<std::size_t>(i + r)] = std::exp(-0.5f * (i * i) / (sigma * sigma));
    std::vector<float> tmp(data.size());
    const int dims[3] = {d.h, d.w, d.l};
    const std::int64_t strides[3] = {1, d.h, static_cast<std::int64_t>(d.h) * d.w};
    for (int axis = 0; axis < 3; ++axis) {
        const int len = dims[axis];
        const std::int64_t stride = strides[axis];
        const int ou = axis == 0 ? 1 : 0;
        const int ov = axis == 2 ? 1 : 2;
        for (int v = 0; v < dims[ov]; ++v)
            for (int u = 0; u < dims[ou]; ++u) {
                const std::int64_t base = u * strides[ou] + v * strides[ov];
                for (int i = 0; i < len; ++i) {
                    float s = 0.0f, wsum = 0.0f;
                    for (int t = std::max(0, i - r); t <= std::min(len - 1, i + r); ++t) {
                        const float w = k[static_cast<std::size_t>(t - i + r)];
                        s += w * data[static_cast<std::size_t>(base + t * stride)];
                        wsum += w;
                    }
                    tmp[static_cast<std::size_t>(base + i * stride)] = s / wsum;
                }
            }
        data.swap(tmp);
    }
}

float max_vector_norm(const DisplacementField &f) {
    const std::int64_t n = voxel_count(f.dims);
    float best = 0.0f;
    for (std::int64_t p = 0; p < n; ++p) {
        const float x = f.data[static_cast<std::size_t>(p)];
        const float y = f.data[static_cast<std::size_t>(n + p)];
        const float z = f.data[static_cast<std::size_t>(2 * n + p)];
        best = std::max(best, std::sqrt(x * x + y * y + z * z));
    }
    return best;
}

} // namespace

DisplacementField make_smooth_velocity(Dims3 dims, std::uint64_t seed, float magnitude,
                                       float sigma) {
    Rng rng(seed);
    DisplacementField v(dims);
    for (auto &x : v.data) x = static_cast<float>(rng.normal());
    const std::int64_t n = voxel_count(dims);
    for (int comp = 0; comp < 3; ++comp) {
        std::vector<float> plane(v.data.begin() + comp * n, v.data.begin() + (comp + 1) * n);
        gaussian_blur(plane, dims, sigma);
        std::copy(plane.begin(), plane.end(), v.data.begin() + comp * n);
    }
    const float mx = max_vector_norm(v);
    if (mx > 0.0f)
        for (auto &x : v.data) x *= magnitude / mx;
    return v;
}

SynthPair make_synth_pair(const SynthConfig &cfg) {
    if (cfg.dims.h < 8 || cfg.dims.w < 8 || cfg.dims.l < 8)
        throw invalid_input("synth: dims must be >= 8 per axis");
    if (cfg.max_disp < 0.0f) throw invalid_input("synth: max_disp must be >= 0");
    Rng rng(cfg.seed);
    const Dims3 d = cfg.dims;
    const std::int64_t n = voxel_count(d);

    // moving image: smooth noise texture + a mild periodic pattern + spheres
    Volume moving(d, 0.0f);
    std::vector<float> texture(static_cast<std::size_t>(n));
    for (auto &v : texture) v = static_cast<float>(rng.normal());
    gaussian_blur(texture, d, cfg.texture_sigma);
    float tmax = 1e-6f;
    for (float v : texture) tmax = std::max(tmax, std::abs(v));
    LabelVolume labels_moving(d);

    const int min_dim = std::min({d.h, d.w, d.l});
    struct Ball {
        float cx, cy, cz, r;
    };
    std::vector<Ball> balls;
    for (int i = 0; i < cfg.num_spheres; ++i) {
        const float r = static_cast<float>(rng.uniform(0.10, 0.15)) * min_dim;
        Ball b{};
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            b.cx = static_cast<float>(rng.uniform(r + 3.0, d.h - 1 - r - 3.0));
            b.cy = static_cast<float>(rng.uniform(r + 3.0, d.w - 1 - r - 3.0));
            b.cz = static_cast<float>(rng.uniform(r + 3.0, d.l - 1 - r - 3.0));
            b.r = r;
            placed = true;
            for (const Ball &other : balls) {
                const float dx = b.cx - other.cx, dy = b.cy - other.cy, dz = b.cz - other.cz;
                if (std::sqrt(dx * dx + dy * dy + dz * dz) < b.r + other.r + 2.0f)
                    placed = false;
            }
        }
        if (placed) balls.push_back(b);
    }

    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                float v = 0.35f + 0.18f * texture[static_cast<std::size_t>(p)] / tmax;
                v += 0.04f * std::cos(2.0f * 3.14159265f * x / 7.3f) *
                     std::cos(2.0f * 3.14159265f * y / 6.1f) *
                     std::cos(2.0f * 3.14159265f * z / 8.7f);
                for (std::size_t bi = 0; bi < balls.size(); ++bi) {
                    const Ball &b = balls[bi];
                    const float dx = x - b.cx, dy = y - b.cy, dz = z - b.cz;
                    const float dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                    if (dist <= b.r) {
                        v += 0.28f + 0.08f * static_cast<float>(bi);
                        labels_moving.data[static_cast<std::size_t>(p)] =
                            static_cast<std::int32_t>(bi + 1);
                    } else if (dist <= b.r + 1.5f) {
                        v += (0.28f + 0.08f * static_cast<float>(bi)) * (b.r + 1.5f - dist) / 1.5f;
                    }
                }
                moving.data[static_cast<std::size_t>(p)] = v;
            }

    // ground-truth field: global translation plus a smooth random component,
    // integrated to a diffeomorphism and scaled to max_disp
    SynthPair out;
    const float trans_mag = cfg.max_disp * clamp_val(cfg.translation_frac, 0.0f, 1.0f);
    const float noise_mag = cfg.max_disp - trans_mag;
    float tx = static_cast<float>(rng.normal()), ty = static_cast<float>(rng.normal()),
          tz = static_cast<float>(rng.normal());
    const float tn = std::sqrt(tx * tx + ty * ty + tz * tz) + 1e-12f;
    tx *= trans_mag / tn;
    ty *= trans_mag / tn;
    tz *= trans_mag / tn;

    DisplacementField velocity =
        make_smooth_velocity(d, cfg.seed ^ 0x5eed5eedULL, noise_mag, cfg.smooth_sigma);
    for (std::int64_t i = 0; i < n; ++i) {
        velocity.data[static_cast<std::size_t>(i)] += tx;
        velocity.data[static_cast<std::size_t>(n + i)] += ty;
        velocity.data[static_cast<std::size_t>(2 * n + i)] += tz;
    }
    DisplacementField gt = scaling_squaring(velocity, cfg.ss_steps);
    for (int pass = 0; pass < 3; ++pass) {
        const float mx = max_vector_norm(gt);
        if (mx <= cfg.max_disp || mx == 0.0f) break;
        const float s = cfg.max_disp / mx;
        for (auto &v : velocity.data) v *= s;
        gt = scaling_squaring(velocity, cfg.ss_steps);
    }
    out.max_gt_disp = max_vector_norm(gt);

    out.fixed = warp(moving, gt);
    out.labels_fixed = warp_labels(labels_moving, gt);
    out.moving = std::move(moving);
    out.labels_moving = std::move(labels_moving);
    out.gt_field = std::move(gt);
    out.initial_dice = mean_dice(out.labels_fixed, out.labels_moving);
    return out;
}

} // namespace mdreg
