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
#include <string>
#include <vector>

#include "mdreg/ops.hpp"
#include "mdreg/rng.hpp"

namespace mdreg {

// Five-level shared-weight convolutional pyramid. Channel width at level L is
// base_channels * 2^(L-1); average pooling halves the grid between levels.
struct EncoderConfig {
    int base_channels = 8;
    int levels = 5;
    float leaky_slope = 0.2f;

    int channels_at(int level) const { // 1-based
        return base_channels << (level - 1);
    }

    void validate() const {
        if (base_channels < 1) throw invalid_input("encoder: base_channels must be >= 1");
        if (levels != 5) throw invalid_input("encoder: levels is fixed at 5");
    }
};

// Two 3x3x3 convolutions, each followed by instance norm and leaky ReLU.
template <typename T>
struct ConvBlockParams {
    ParamTensor<T> w1, b1, n1_gamma, n1_beta;
    ParamTensor<T> w2, b2, n2_gamma, n2_beta;
};

template <typename T>
ConvBlockParams<T> make_conv_block(const std::string &prefix, int in_c, int out_c, Rng &rng) {
    auto kaiming = [&rng](int oc, int ic) {
        Tensor<T> w({oc, ic, 3, 3, 3});
        const double bound = std::sqrt(6.0 / (ic * 27.0));
        for (auto &v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
        return w;
    };
    auto ones = [](int c) {
        Tensor<T> t({c});
        t.fill(T(1));
        return t;
    };
    ConvBlockParams<T> p;
    p.w1 = ParamTensor<T>(prefix + ".conv1.w", kaiming(out_c, in_c));
    p.b1 = ParamTensor<T>(prefix + ".conv1.b", Tensor<T>({out_c}));
    p.n1_gamma = ParamTensor<T>(prefix + ".norm1.g", ones(out_c));
    p.n1_beta = ParamTensor<T>(prefix + ".norm1.b", Tensor<T>({out_c}));
    p.w2 = ParamTensor<T>(prefix + ".conv2.w", kaiming(out_c, out_c));
    p.b2 = ParamTensor<T>(prefix + ".conv2.b", Tensor<T>({out_c}));
    p.n2_gamma = ParamTensor<T>(prefix + ".norm2.g", ones(out_c));
    p.n2_beta = ParamTensor<T>(prefix + ".norm2.b", Tensor<T>({out_c}));
    return p;
}

struct ConvBlockVars {
    Var w1, b1, n1_gamma, n1_beta;
    Var w2, b2, n2_gamma, n2_beta;
};

template <typename T>
ConvBlockVars leaf_conv_block(Tape<T> &t, ConvBlockParams<T> &p) {
    return ConvBlockVars{t.leaf(p.w1),       t.leaf(p.b1), t.leaf(p.n1_gamma),
                         t.leaf(p.n1_beta),  t.leaf(p.w2), t.leaf(p.b2),
                         t.leaf(p.n2_gamma), t.leaf(p.n2_beta)};
}

template <typename T>
Var op_conv_block(Tape<T> &t, Var x, const ConvBlockVars &p, T slope) {
    x = op_leaky_relu(t, op_instance_norm(t, op_conv3(t, x, p.w1, p.b1), p.n1_gamma, p.n1_beta), slope);
    x = op_leaky_relu(t, op_instance_norm(t, op_conv3(t, x, p.w2, p.b2), p.n2_gamma, p.n2_beta), slope);
    return x;
}

inline void check_encodable(const Dims3 &d) {
    if (d.h < 16 || d.w < 16 || d.l < 16)
        throw invalid_input("encode: volume " + dims_to_string(d) +
                            " too small for 5 pyramid levels (needs dims >= 16)");
}

// Returns feature maps for levels 1..5, full resolution first. The same
// parameters encode fixed and moving images.
template <typename T>
std::vector<Var> op_encode(Tape<T> &t, Var image, const std::vector<ConvBlockVars> &blocks,
                           const EncoderConfig &cfg) {
    cfg.validate();
    check_encodable(spatial_dims(t.value(image).shape));
    std::vector<Var> features;
    Var x = op_conv_block(t, image, blocks[0], static_cast<T>(cfg.leaky_slope));
    features.push_back(x);
    for (int level = 2; level <= cfg.levels; ++level) {
        x = op_avg_pool_2x(t, x);
        x = op_conv_block(t, x, blocks[static_cast<std::size_t>(level - 1)],
                          static_cast<T>(cfg.leaky_slope));
        features.push_back(x);
    }
    return features;
}

} // namespace mdreg
