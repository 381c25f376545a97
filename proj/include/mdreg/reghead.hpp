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

#include "mdreg/field_ops.hpp"
#include "mdreg/ops.hpp"
#include "mdreg/rng.hpp"

namespace mdreg {

// A single 3x3x3 convolution fusing 3S subfield channels into one 3-channel
// field: the residual directly, or a stationary velocity when the
// diffeomorphic variant is selected.
template <typename T>
struct RegHeadParams {
    ParamTensor<T> weight; // {3, 3S, 3, 3, 3}
    ParamTensor<T> bias;   // {3}
};

template <typename T>
RegHeadParams<T> make_reghead_params(const std::string &prefix, int heads, Rng &rng) {
    RegHeadParams<T> p;
    Tensor<T> w({3, 3 * heads, 3, 3, 3});
    for (auto &v : w.data) v = static_cast<T>(rng.normal(0.0, 1e-5));
    p.weight = ParamTensor<T>(prefix + ".w", std::move(w));
    p.bias = ParamTensor<T>(prefix + ".b", Tensor<T>({3}));
    return p;
}

template <typename T>
Var op_reghead_fuse(Tape<T> &t, Var stack, Var weight, Var bias) {
    const Tensor<T> &vw = t.value(weight);
    if (t.value(stack).shape[0] != vw.shape[1])
        throw invalid_input("reghead: subfield stack channels do not match conv input");
    return op_conv3(t, stack, weight, bias);
}

// Integrates a stationary velocity field: phi <- v / 2^T, then T
// self-compositions.
template <typename T>
Var op_scaling_squaring(Tape<T> &t, Var velocity, int steps) {
    if (steps < 1) throw invalid_input("scaling_squaring: steps must be >= 1");
    Var phi = op_scale(t, velocity, T(1) / static_cast<T>(1 << steps));
    for (int i = 0; i < steps; ++i) phi = op_compose(t, phi, phi);
    return phi;
}

// Plain (non-differentiated) scaling and squaring for generators and tests.
inline DisplacementField scaling_squaring(const DisplacementField &velocity, int steps) {
    if (steps < 1) throw invalid_input("scaling_squaring: steps must be >= 1");
    DisplacementField phi(velocity.dims);
    const float inv = 1.0f / static_cast<float>(1 << steps);
    for (std::size_t i = 0; i < phi.data.size(); ++i) phi.data[i] = velocity.data[i] * inv;
    for (int i = 0; i < steps; ++i) phi = compose(phi, phi);
    return phi;
}

} // namespace mdreg
