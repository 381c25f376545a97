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

#include <cmath>
#include <vector>

#include "mdreg/rng.hpp"
#include "mdreg/volume.hpp"

namespace mdreg::test {

inline Volume random_volume(Dims3 d, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Rng rng(seed);
    Volume v(d);
    for (auto &x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline FeatureMap random_feature_map(int c, Dims3 d, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap fm(c, d);
    for (auto &x : fm.data) x = static_cast<float>(rng.normal());
    return fm;
}

// Smooth-ish random displacement with entries bounded by `mag`, kept away
// from exact lattice alignment.
inline DisplacementField random_field(Dims3 d, std::uint64_t seed, float mag) {
    Rng rng(seed);
    DisplacementField f(d);
    for (auto &x : f.data) {
        const double m = rng.uniform(0.15, 1.0) * mag;
        x = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
    }
    return f;
}

inline double max_abs_diff(const std::vector<float> &a, const std::vector<float> &b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
    return worst;
}

} // namespace mdreg::test
