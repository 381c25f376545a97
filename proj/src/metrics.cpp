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

#include "mdreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mdreg/field_ops.hpp"

namespace mdreg {

namespace {

void check_dims(const LabelVolume &a, const LabelVolume &b, const char *op) {
    if (a.dims != b.dims)
        throw invalid_input(std::string(op) + ": label volume dims mismatch");
}

struct Vox {
    int x, y, z;
};

// Surface voxels of one label: foreground with >= 1 of the 6 face neighbors
// background, or on the volume border.
std::vector<Vox> surface_voxels(const LabelVolume &v, int label) {
    std::vector<Vox> out;
    const Dims3 d = v.dims;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x) {
                if (v.at(x, y, z) != label) continue;
                bool on_surface = x == 0 || x == d.h - 1 || y == 0 || y == d.w - 1 ||
                                  z == 0 || z == d.l - 1;
                if (!on_surface) {
                    on_surface = v.at(x - 1, y, z) != label || v.at(x + 1, y, z) != label ||
                                 v.at(x, y - 1, z) != label || v.at(x, y + 1, z) != label ||
                                 v.at(x, y, z - 1) != label || v.at(x, y, z + 1) != label;
                }
                if (on_surface) out.push_back({x, y, z});
            }
    return out;
}

// Directed distances from every voxel of `from` to the nearest voxel of `to`.
void directed_distances(const std::vector<Vox> &from, const std::vector<Vox> &to,
                        std::array<float, 3> sp, std::vector<double> &out) {
    for (const Vox &a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vox &b : to) {
            const double dx = (a.x - b.x) * static_cast<double>(sp[0]);
            const double dy = (a.y - b.y) * static_cast<double>(sp[1]);
            const double dz = (a.z - b.z) * static_cast<double>(sp[2]);
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best) best = d2;
        }
        out.push_back(std::sqrt(best));
    }
}

std::vector<double> pooled_surface_distances(const LabelVolume &a, const LabelVolume &b,
                                             int label, std::array<float, 3> sp,
                                             const char *op) {
    check_dims(a, b, op);
    const auto sa = surface_voxels(a, label);
    const auto sb = surface_voxels(b, label);
    if (sa.empty() || sb.empty())
        throw invalid_input(std::string(op) + ": undefined metric, empty mask for label " +
                            std::to_string(label));
    std::vector<double> dists;
    dists.reserve(sa.size() + sb.size());
    directed_distances(sa, sb, sp, dists);
    directed_distances(sb, sa, sp, dists);
    return dists;
}

double percentile_linear(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double rank = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

} // namespace

double dice(const LabelVolume &a, const LabelVolume &b, int label) {
    check_dims(a, b, "dice");
    std::int64_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = a.data[i] == label;
        const bool ib = b.data[i] == label;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<int> labels_present(const LabelVolume &a, const LabelVolume &b) {
    std::set<int> s;
    for (std::int32_t v : a.data)
        if (v != 0) s.insert(v);
    for (std::int32_t v : b.data)
        if (v != 0) s.insert(v);
    return std::vector<int>(s.begin(), s.end());
}

double mean_dice(const LabelVolume &a, const LabelVolume &b) {
    const auto labels = labels_present(a, b);
    if (labels.empty()) return 1.0;
    double sum = 0.0;
    for (int lab : labels) sum += dice(a, b, lab);
    return sum / static_cast<double>(labels.size());
}

double hd95(const LabelVolume &a, const LabelVolume &b, int label,
            std::array<float, 3> spacing) {
    return percentile_linear(pooled_surface_distances(a, b, label, spacing, "hd95"), 0.95);
}

double assd(const LabelVolume &a, const LabelVolume &b, int label,
            std::array<float, 3> spacing) {
    const auto dists = pooled_surface_distances(a, b, label, spacing, "assd");
    double sum = 0.0;
    for (double v : dists) sum += v;
    return sum / static_cast<double>(dists.size());
}

LabelVolume warp_labels(const LabelVolume &labels, const DisplacementField &phi) {
    if (labels.dims != phi.dims)
        throw invalid_input("warp_labels: dims mismatch");
    const Dims3 d = labels.dims;
    const std::int64_t n = voxel_count(d);
    LabelVolume out(d, labels.spacing);
    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                const int xi = clamp_val(static_cast<int>(std::floor(
                                             x + phi.data[static_cast<std::size_t>(p)] + 0.5f)),
                                         0, d.h - 1);
                const int yi = clamp_val(static_cast<int>(std::floor(
                                             y + phi.data[static_cast<std::size_t>(n + p)] + 0.5f)),
                                         0, d.w - 1);
                const int zi = clamp_val(static_cast<int>(std::floor(
                                             z + phi.data[static_cast<std::size_t>(2 * n + p)] + 0.5f)),
                                         0, d.l - 1);
                out.data[static_cast<std::size_t>(p)] = labels.at(xi, yi, zi);
            }
    return out;
}

MetricReport evaluate_labels(const LabelVolume &a, const LabelVolume &b,
                             const DisplacementField *phi) {
    MetricReport rep;
    const LabelVolume warped = phi ? warp_labels(b, *phi) : b;
    const auto labels = labels_present(a, warped);
    double dsum = 0.0;
    for (int lab : labels) {
        const double d = dice(a, warped, lab);
        rep.dsc_per_label[lab] = d;
        dsum += d;
    }
    rep.mean_dsc = labels.empty() ? 1.0 : dsum / static_cast<double>(labels.size());
    double hsum = 0.0, asum = 0.0;
    int counted = 0;
    for (int lab : labels) {
        bool in_a = false, in_b = false;
        for (std::size_t i = 0; i < a.data.size() && !(in_a && in_b); ++i) {
            in_a = in_a || a.data[i] == lab;
            in_b = in_b || warped.data[i] == lab;
        }
        if (!in_a || !in_b) continue;
        const double h = hd95(a, warped, lab, a.spacing);
        const double s = assd(a, warped, lab, a.spacing);
        rep.hd95_per_label[lab] = h;
        rep.assd_per_label[lab] = s;
        hsum += h;
        asum += s;
        ++counted;
    }
    if (counted > 0) {
        rep.hd95_mean = hsum / counted;
        rep.assd_mean = asum / counted;
    }
    if (phi) rep.folding_pct = 100.0 * folding_ratio(*phi);
    return rep;
}

} // namespace mdreg
