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
#include "mdreg/tape.hpp"

namespace mdreg {

// Tracks auxiliary allocations of the attention kernels so the fused
// implementation's memory contract can be benchmarked against the
// window-materializing baseline.
struct MemCounter {
    std::size_t current = 0;
    std::size_t peak = 0;

    void alloc(std::size_t bytes) {
        current += bytes;
        if (current > peak) peak = current;
    }
    void release(std::size_t bytes) { current -= bytes; }
};

struct AttentionConfig {
    int heads = 1;     // S
    int head_dim = 6;  // d
    int neighborhood = 3;

    int radius() const { return (neighborhood - 1) / 2; }
    int window() const { return neighborhood * neighborhood * neighborhood; }

    void validate() const {
        if (neighborhood < 3 || neighborhood % 2 == 0)
            throw invalid_input("attention: neighborhood must be odd and >= 3");
        if (heads < 1 || head_dim < 1)
            throw invalid_input("attention: heads and head_dim must be positive");
    }
};

// Offset for window slot o, ordered x fastest; components in [-r, r].
inline std::array<int, 3> window_offset(int o, int nb) {
    const int r = (nb - 1) / 2;
    return {o % nb - r, (o / nb) % nb - r, o / (nb * nb) - r};
}

namespace kern {

template <typename T>
inline void softmax_inplace(T *logits, int m) {
    T mx = logits[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, logits[i]);
    T sum = T(0);
    for (int i = 0; i < m; ++i) {
        logits[i] = std::exp(logits[i] - mx);
        sum += logits[i];
    }
    const T inv = T(1) / sum;
    for (int i = 0; i < m; ++i) logits[i] *= inv;
}

// Fused multi-head neighborhood attention. Q and K are position-major
// {n, S*d}; B is {S, n^3}; out is {S, n, n^3}. Out-of-bounds neighbors use a
// zero-valued key, so their logit is the bias alone. No sliding window is
// materialized: the auxiliary state is one window of logits per in-flight
// position.
template <typename T>
void na_fused_fwd(const T *Q, const T *K, const T *B, const Dims3 &d, int S,
                  int hd, int nb, T *out, MemCounter *mc = nullptr) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    const int r = (nb - 1) / 2;
    const int SD = S * hd;
    std::vector<T> logits(static_cast<std::size_t>(w));
    if (mc) mc->alloc(logits.size() * sizeof(T));
    for (int s = 0; s < S; ++s) {
        const T *bias = B + static_cast<std::int64_t>(s) * w;
        std::int64_t p = 0;
        for (int z = 0; z < d.l; ++z)
            for (int y = 0; y < d.w; ++y)
                for (int x = 0; x < d.h; ++x, ++p) {
                    const T *qrow = Q + p * SD + s * hd;
                    int o = 0;
                    for (int dz = -r; dz <= r; ++dz)
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx, ++o) {
                                T logit = bias[o];
                                if (in_bounds(d, x + dx, y + dy, z + dz)) {
                                    const T *krow =
                                        K + voxel_index(d, x + dx, y + dy, z + dz) * SD + s * hd;
                                    T dot = T(0);
                                    for (int j = 0; j < hd; ++j) dot += qrow[j] * krow[j];
                                    logit += dot;
                                }
                                if (!std::isfinite(static_cast<double>(logit)))
                                    throw numeric_error(
                                        "attention: non-finite logit at position (" +
                                        std::to_string(x) + "," + std::to_string(y) + "," +
                                        std::to_string(z) + ") head " + std::to_string(s));
                                logits[static_cast<std::size_t>(o)] = logit;
                            }
                    softmax_inplace(logits.data(), w);
                    T *dst = out + (static_cast<std::int64_t>(s) * n + p) * w;
                    for (int i = 0; i < w; ++i) dst[i] = logits[static_cast<std::size_t>(i)];
                }
    }
    if (mc) mc->release(logits.size() * sizeof(T));
}

// Backward of the fused op. `W` is the forward output (softmax weights).
template <typename T>
void na_fused_bwd(const T *Q, const T *K, const T *W, const Dims3 &d, int S,
                  int hd, int nb, const T *gW, T *gQ, T *gK, T *gB) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    const int r = (nb - 1) / 2;
    const int SD = S * hd;
    std::vector<T> dlogit(static_cast<std::size_t>(w));
    for (int s = 0; s < S; ++s) {
        T *gbias = gB + static_cast<std::int64_t>(s) * w;
        std::int64_t p = 0;
        for (int z = 0; z < d.l; ++z)
            for (int y = 0; y < d.w; ++y)
                for (int x = 0; x < d.h; ++x, ++p) {
                    const T *wrow = W + (static_cast<std::int64_t>(s) * n + p) * w;
                    const T *grow = gW + (static_cast<std::int64_t>(s) * n + p) * w;
                    T dot = T(0);
                    for (int i = 0; i < w; ++i) dot += wrow[i] * grow[i];
                    for (int i = 0; i < w; ++i)
                        dlogit[static_cast<std::size_t>(i)] = wrow[i] * (grow[i] - dot);
                    const T *qrow = Q + p * SD + s * hd;
                    T *gqrow = gQ + p * SD + s * hd;
                    int o = 0;
                    for (int dz = -r; dz <= r; ++dz)
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx, ++o) {
                                const T dl = dlogit[static_cast<std::size_t>(o)];
                                gbias[o] += dl;
                                if (dl == T(0)) continue;
                                if (!in_bounds(d, x + dx, y + dy, z + dz)) continue;
                                const std::int64_t q = voxel_index(d, x + dx, y + dy, z + dz);
                                const T *krow = K + q * SD + s * hd;
                                T *gkrow = gK + q * SD + s * hd;
                                for (int j = 0; j < hd; ++j) {
                                    gqrow[j] += dl * krow[j];
                                    gkrow[j] += dl * qrow[j];
                                }
                            }
                }
    }
}

// Reference implementation: materializes the full sliding-window tensor of
// keys (position x window x S*d) and only then computes logits and softmax.
// Kept bitwise-deterministic and simple; used by tests and the benchmark.
template <typename T>
void na_naive_fwd(const T *Q, const T *K, const T *B, const Dims3 &d, int S,
                  int hd, int nb, T *out, MemCounter *mc = nullptr) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    const int r = (nb - 1) / 2;
    const int SD = S * hd;
    // step 1: sliding window of keys, zero padded
    std::vector<T> window(static_cast<std::size_t>(n) * w * SD, T(0));
    if (mc) mc->alloc(window.size() * sizeof(T));
    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                int o = 0;
                for (int dz = -r; dz <= r; ++dz)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx, ++o) {
                            if (!in_bounds(d, x + dx, y + dy, z + dz)) continue;
                            const T *krow = K + voxel_index(d, x + dx, y + dy, z + dz) * SD;
                            T *dst = window.data() + (p * w + o) * SD;
                            for (int j = 0; j < SD; ++j) dst[j] = krow[j];
                        }
            }
    // step 2: logits and softmax from the window tensor
    for (int s = 0; s < S; ++s) {
        const T *bias = B + static_cast<std::int64_t>(s) * w;
        for (p = 0; p < n; ++p) {
            const T *qrow = Q + p * SD + s * hd;
            T *dst = out + (static_cast<std::int64_t>(s) * n + p) * w;
            for (int o = 0; o < w; ++o) {
                const T *krow = window.data() + (p * w + o) * SD + s * hd;
                T dot = T(0);
                for (int j = 0; j < hd; ++j) dot += qrow[j] * krow[j];
                const T logit = dot + bias[o];
                if (!std::isfinite(static_cast<double>(logit)))
                    throw numeric_error("attention: non-finite logit at position " +
                                        std::to_string(p) + " head " + std::to_string(s));
                dst[o] = logit;
            }
            softmax_inplace(dst, w);
        }
    }
    if (mc) mc->release(window.size() * sizeof(T));
}

template <typename T>
void na_naive_bwd(const T *Q, const T *K, const T *W, const Dims3 &d, int S,
                  int hd, int nb, const T *gW, T *gQ, T *gK, T *gB) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    const int r = (nb - 1) / 2;
    const int SD = S * hd;
    std::vector<T> window(static_cast<std::size_t>(n) * w * SD, T(0));
    std::vector<T> gwindow(static_cast<std::size_t>(n) * w * SD, T(0));
    std::int64_t p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                int o = 0;
                for (int dz = -r; dz <= r; ++dz)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx, ++o) {
                            if (!in_bounds(d, x + dx, y + dy, z + dz)) continue;
                            const T *krow = K + voxel_index(d, x + dx, y + dy, z + dz) * SD;
                            T *dst = window.data() + (p * w + o) * SD;
                            for (int j = 0; j < SD; ++j) dst[j] = krow[j];
                        }
            }
    for (int s = 0; s < S; ++s) {
        T *gbias = gB + static_cast<std::int64_t>(s) * w;
        for (p = 0; p < n; ++p) {
            const T *wrow = W + (static_cast<std::int64_t>(s) * n + p) * w;
            const T *grow = gW + (static_cast<std::int64_t>(s) * n + p) * w;
            T dot = T(0);
            for (int o = 0; o < w; ++o) dot += wrow[o] * grow[o];
            const T *qrow = Q + p * SD + s * hd;
            T *gqrow = gQ + p * SD + s * hd;
            for (int o = 0; o < w; ++o) {
                const T dl = wrow[o] * (grow[o] - dot);
                gbias[o] += dl;
                const T *krow = window.data() + (p * w + o) * SD + s * hd;
                T *gkrow = gwindow.data() + (p * w + o) * SD + s * hd;
                for (int j = 0; j < hd; ++j) {
                    gqrow[j] += dl * krow[j];
                    gkrow[j] += dl * qrow[j];
                }
            }
        }
    }
    // scatter window gradients back onto the key map
    p = 0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x, ++p) {
                int o = 0;
                for (int dz = -r; dz <= r; ++dz)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx, ++o) {
                            if (!in_bounds(d, x + dx, y + dy, z + dz)) continue;
                            T *gkrow = gK + voxel_index(d, x + dx, y + dy, z + dz) * SD;
                            const T *src = gwindow.data() + (p * w + o) * SD;
                            for (int j = 0; j < SD; ++j) gkrow[j] += src[j];
                        }
            }
}

// Subfields from attention weights: for head s,
// phi^(s)(p) = sum_o W[s,p,o] * offset(o). Output {3S, h, w, l} with channel
// 3s+comp. The offset grid carries no parameters and receives no gradient.
template <typename T>
void subfields_fwd(const T *W, const Dims3 &d, int S, int nb, T *out) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    for (int s = 0; s < S; ++s)
        for (std::int64_t p = 0; p < n; ++p) {
            const T *wrow = W + (static_cast<std::int64_t>(s) * n + p) * w;
            T acc[3] = {T(0), T(0), T(0)};
            for (int o = 0; o < w; ++o) {
                const auto off = window_offset(o, nb);
                acc[0] += wrow[o] * static_cast<T>(off[0]);
                acc[1] += wrow[o] * static_cast<T>(off[1]);
                acc[2] += wrow[o] * static_cast<T>(off[2]);
            }
            for (int comp = 0; comp < 3; ++comp)
                out[(static_cast<std::int64_t>(s) * 3 + comp) * n + p] = acc[comp];
        }
}

template <typename T>
void subfields_bwd(const Dims3 &d, int S, int nb, const T *gout, T *gW) {
    const std::int64_t n = voxel_count(d);
    const int w = nb * nb * nb;
    for (int s = 0; s < S; ++s)
        for (std::int64_t p = 0; p < n; ++p) {
            const T gx = gout[(static_cast<std::int64_t>(s) * 3 + 0) * n + p];
            const T gy = gout[(static_cast<std::int64_t>(s) * 3 + 1) * n + p];
            const T gz = gout[(static_cast<std::int64_t>(s) * 3 + 2) * n + p];
            T *grow = gW + (static_cast<std::int64_t>(s) * n + p) * w;
            for (int o = 0; o < w; ++o) {
                const auto off = window_offset(o, nb);
                grow[o] += gx * static_cast<T>(off[0]) + gy * static_cast<T>(off[1]) +
                           gz * static_cast<T>(off[2]);
            }
        }
}

} // namespace kern

// Shared Q/K projection followed by LayerNorm over the S*d channel axis.
// Identical weights are applied to the fixed and moving feature maps.
template <typename T>
struct ProjectionParams {
    ParamTensor<T> weight; // {S*d, c}
    ParamTensor<T> bias;   // {S*d}
    ParamTensor<T> ln_gamma;
    ParamTensor<T> ln_beta;
};

template <typename T>
ProjectionParams<T> make_projection_params(const std::string &prefix, int in_channels,
                                           int out_channels, Rng &rng) {
    ProjectionParams<T> p;
    Tensor<T> w({out_channels, in_channels});
    for (auto &v : w.data) v = static_cast<T>(rng.normal(0.0, 1e-5));
    p.weight = ParamTensor<T>(prefix + ".w", std::move(w));
    p.bias = ParamTensor<T>(prefix + ".b", Tensor<T>({out_channels}));
    Tensor<T> g({out_channels});
    g.fill(T(1));
    p.ln_gamma = ParamTensor<T>(prefix + ".ln_g", std::move(g));
    p.ln_beta = ParamTensor<T>(prefix + ".ln_b", Tensor<T>({out_channels}));
    return p;
}

struct ProjectionVars {
    Var weight, bias, ln_gamma, ln_beta;
};

// Q = LN(proj(F)), K = LN(proj(M)) with shared weights.
template <typename T>
std::pair<Var, Var> op_project_qk(Tape<T> &t, Var f, Var m, const ProjectionVars &p) {
    detail::check_same_shape(t.value(f), t.value(m), "project_qk");
    Var q = op_layer_norm(t, op_linear_proj(t, f, p.weight, p.bias), p.ln_gamma, p.ln_beta);
    Var k = op_layer_norm(t, op_linear_proj(t, m, p.weight, p.bias), p.ln_gamma, p.ln_beta);
    return {q, k};
}

template <typename T>
void check_attention_inputs(Tape<T> &t, Var q, Var k, Var bias, const Dims3 &d,
                            const AttentionConfig &cfg) {
    cfg.validate();
    const Tensor<T> &vq = t.value(q);
    const Tensor<T> &vk = t.value(k);
    detail::check_same_shape(vq, vk, "neighborhood_attention");
    if (vq.shape.size() != 2 || vq.shape[0] != voxel_count(d) ||
        vq.shape[1] != cfg.heads * cfg.head_dim)
        throw invalid_input("neighborhood_attention: Q/K layout inconsistent with config");
    if (t.value(bias).size() != static_cast<std::int64_t>(cfg.heads) * cfg.window())
        throw invalid_input("neighborhood_attention: bias must be {S, n^3}");
}

template <typename T>
Var op_na_fused(Tape<T> &t, Var q, Var k, Var bias, Dims3 dims, AttentionConfig cfg,
                MemCounter *mc = nullptr) {
    check_attention_inputs(t, q, k, bias, dims, cfg);
    const std::int64_t n = voxel_count(dims);
    Tensor<T> out({cfg.heads, static_cast<int>(n), cfg.window()});
    kern::na_fused_fwd(t.value(q).data.data(), t.value(k).data.data(),
                       t.value(bias).data.data(), dims, cfg.heads, cfg.head_dim,
                       cfg.neighborhood, out.data.data(), mc);
    Var o = t.push(std::move(out), "neighborhood_attention_fused");
    t.set_backward(o, [o, q, k, bias, dims, cfg](Tape<T> &tt) {
        kern::na_fused_bwd(tt.value(q).data.data(), tt.value(k).data.data(),
                           tt.value(o).data.data(), dims, cfg.heads, cfg.head_dim,
                           cfg.neighborhood, tt.grad(o).data.data(),
                           tt.grad(q).data.data(), tt.grad(k).data.data(),
                           tt.grad(bias).data.data());
    });
    return o;
}

template <typename T>
Var op_na_naive(Tape<T> &t, Var q, Var k, Var bias, Dims3 dims, AttentionConfig cfg,
                MemCounter *mc = nullptr) {
    check_attention_inputs(t, q, k, bias, dims, cfg);
    const std::int64_t n = voxel_count(dims);
    Tensor<T> out({cfg.heads, static_cast<int>(n), cfg.window()});
    kern::na_naive_fwd(t.value(q).data.data(), t.value(k).data.data(),
                       t.value(bias).data.data(), dims, cfg.heads, cfg.head_dim,
                       cfg.neighborhood, out.data.data(), mc);
    Var o = t.push(std::move(out), "neighborhood_attention_naive");
    t.set_backward(o, [o, q, k, bias, dims, cfg](Tape<T> &tt) {
        kern::na_naive_bwd(tt.value(q).data.data(), tt.value(k).data.data(),
                           tt.value(o).data.data(), dims, cfg.heads, cfg.head_dim,
                           cfg.neighborhood, tt.grad(o).data.data(),
                           tt.grad(q).data.data(), tt.grad(k).data.data(),
                           tt.grad(bias).data.data());
    });
    return o;
}

// Converts normalized attention weights into displacement subfields {3S,h,w,l}.
template <typename T>
Var op_subfields(Tape<T> &t, Var weights, Dims3 dims, AttentionConfig cfg,
                 T norm_tol = T(1e-5)) {
    const Tensor<T> &vw = t.value(weights);
    const std::int64_t n = voxel_count(dims);
    if (vw.shape.size() != 3 || vw.shape[0] != cfg.heads || vw.shape[1] != n ||
        vw.shape[2] != cfg.window())
        throw invalid_input("subfields: weights must be {S, n, win}");
    const int w = cfg.window();
    for (std::int64_t row = 0; row < static_cast<std::int64_t>(cfg.heads) * n; ++row) {
        T s = T(0);
        for (int o = 0; o < w; ++o) s += vw[row * w + o];
        if (std::abs(static_cast<double>(s) - 1.0) > static_cast<double>(norm_tol))
            throw invalid_input("subfields: attention weights are not normalized");
    }
    Tensor<T> out({3 * cfg.heads, dims.h, dims.w, dims.l});
    kern::subfields_fwd(vw.data.data(), dims, cfg.heads, cfg.neighborhood, out.data.data());
    Var o = t.push(std::move(out), "subfields_from_attention");
    t.set_backward(o, [o, weights, dims, cfg](Tape<T> &tt) {
        kern::subfields_bwd(dims, cfg.heads, cfg.neighborhood, tt.grad(o).data.data(),
                            tt.grad(weights).data.data());
    });
    return o;
}

} // namespace mdreg
