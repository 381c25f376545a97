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

#include "mdreg/sampling.hpp"
#include "mdreg/tape.hpp"

namespace mdreg {
namespace kern {

// dst(x,y,z) += kv * src(x+dx, y+dy, z+dz) over the in-bounds overlap.
template <typename T>
void slab_axpy(T *dst, const T *src, const Dims3 &d, int dx, int dy, int dz, T kv) {
    const int x0 = std::max(0, -dx), x1 = std::min(d.h, d.h - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(d.w, d.w - dy);
    const int z0 = std::max(0, -dz), z1 = std::min(d.l, d.l - dz);
    for (int z = z0; z < z1; ++z)
        for (int y = y0; y < y1; ++y) {
            T *drow = dst + voxel_index(d, 0, y, z);
            const T *srow = src + voxel_index(d, dx, y + dy, z + dz);
            for (int x = x0; x < x1; ++x) drow[x] += kv * srow[x];
        }
}

// sum over in-bounds overlap of a(x,y,z) * b(x+dx, y+dy, z+dz).
template <typename T>
T slab_dot(const T *a, const T *b, const Dims3 &d, int dx, int dy, int dz) {
    const int x0 = std::max(0, -dx), x1 = std::min(d.h, d.h - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(d.w, d.w - dy);
    const int z0 = std::max(0, -dz), z1 = std::min(d.l, d.l - dz);
    T s = T(0);
    for (int z = z0; z < z1; ++z)
        for (int y = y0; y < y1; ++y) {
            const T *arow = a + voxel_index(d, 0, y, z);
            const T *brow = b + voxel_index(d, dx, y + dy, z + dz);
            for (int x = x0; x < x1; ++x) s += arow[x] * brow[x];
        }
    return s;
}

// 3x3x3 zero-padded convolution (correlation convention), stride 1.
// Kernel layout: [oc][ic][dz+1][dy+1][dx+1].
template <typename T>
void conv3_fwd(const T *in, int ic, const Dims3 &d, const T *k, const T *bias,
               int oc, T *out) {
    const std::int64_t n = voxel_count(d);
    for (int co = 0; co < oc; ++co)
        for (std::int64_t i = 0; i < n; ++i) out[co * n + i] = bias ? bias[co] : T(0);
    for (int co = 0; co < oc; ++co)
        for (int ci = 0; ci < ic; ++ci) {
            const T *kk = k + (static_cast<std::int64_t>(co) * ic + ci) * 27;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const T kv = kk[(dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)];
                        if (kv == T(0)) continue;
                        slab_axpy(out + co * n, in + ci * n, d, dx, dy, dz, kv);
                    }
        }
}

template <typename T>
void conv3_bwd(const T *in, int ic, const Dims3 &d, const T *k, int oc,
               const T *gout, T *gin, T *gk, T *gbias) {
    const std::int64_t n = voxel_count(d);
    if (gbias)
        for (int co = 0; co < oc; ++co) {
            T s = T(0);
            for (std::int64_t i = 0; i < n; ++i) s += gout[co * n + i];
            gbias[co] += s;
        }
    for (int co = 0; co < oc; ++co)
        for (int ci = 0; ci < ic; ++ci) {
            const std::int64_t koff = (static_cast<std::int64_t>(co) * ic + ci) * 27;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::int64_t ki = koff + (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                        if (gk)
                            gk[ki] += slab_dot(gout + co * n, in + ci * n, d, dx, dy, dz);
                        if (gin && k[ki] != T(0))
                            slab_axpy(gin + ci * n, gout + co * n, d, -dx, -dy, -dz, k[ki]);
                    }
        }
}

// Zero-padded sliding-window sum of width 2r+1 along one axis, per channel.
template <typename T>
void boxsum1d(const T *in, int channels, const Dims3 &d, int axis, int r, T *out) {
    const std::int64_t n = voxel_count(d);
    const int dims[3] = {d.h, d.w, d.l};
    const std::int64_t strides[3] = {1, d.h, static_cast<std::int64_t>(d.h) * d.w};
    const int len = dims[axis];
    const std::int64_t stride = strides[axis];
    const int ou = axis == 0 ? 1 : 0; // the two other axes
    const int ov = axis == 2 ? 1 : 2;
    for (int c = 0; c < channels; ++c) {
        const T *src = in + c * n;
        T *dst = out + c * n;
        for (int v = 0; v < dims[ov]; ++v)
            for (int u = 0; u < dims[ou]; ++u) {
                const std::int64_t base = u * strides[ou] + v * strides[ov];
                for (int i = 0; i < len; ++i) {
                    const int t0 = std::max(0, i - r), t1 = std::min(len - 1, i + r);
                    T s = T(0);
                    for (int t = t0; t <= t1; ++t) s += src[base + t * stride];
                    dst[base + i * stride] = s;
                }
            }
    }
}

} // namespace kern

// ---- structured tape ops ----------------------------------------------------

inline Dims3 spatial_dims(const std::vector<int> &shape) {
    if (shape.size() != 4) throw invalid_input("expected a {c,h,w,l} tensor");
    return Dims3{shape[1], shape[2], shape[3]};
}

template <typename T>
Var op_conv3(Tape<T> &t, Var in, Var kernel, Var bias) {
    const Tensor<T> &vi = t.value(in);
    const Tensor<T> &vk = t.value(kernel);
    const Tensor<T> &vb = t.value(bias);
    const Dims3 d = spatial_dims(vi.shape);
    const int ic = vi.shape[0];
    if (vk.shape.size() != 5 || vk.shape[2] != 3 || vk.shape[3] != 3 || vk.shape[4] != 3)
        throw invalid_input("conv3: kernel must be {oc,ic,3,3,3}");
    if (vk.shape[1] != ic)
        throw invalid_input("conv3: input channels do not match kernel");
    const int oc = vk.shape[0];
    if (vb.size() != oc) throw invalid_input("conv3: bias size mismatch");
    Tensor<T> out({oc, d.h, d.w, d.l});
    kern::conv3_fwd(vi.data.data(), ic, d, vk.data.data(), vb.data.data(), oc, out.data.data());
    Var o = t.push(std::move(out), "conv3");
    t.set_backward(o, [o, in, kernel, bias, ic, oc, d](Tape<T> &tt) {
        kern::conv3_bwd(tt.value(in).data.data(), ic, d, tt.value(kernel).data.data(), oc,
                        tt.grad(o).data.data(), tt.grad(in).data.data(),
                        tt.grad(kernel).data.data(), tt.grad(bias).data.data());
    });
    return o;
}

// Per-channel normalization over all voxels, eps inside the square root.
template <typename T>
Var op_instance_norm(Tape<T> &t, Var in, Var scale, Var shift, T eps = T(1e-5)) {
    const Tensor<T> &vi = t.value(in);
    const int c = vi.shape[0];
    const std::int64_t n = vi.size() / c;
    if (t.value(scale).size() != c || t.value(shift).size() != c)
        throw invalid_input("instance_norm: affine size mismatch");
    Tensor<T> out(vi.shape);
    const Tensor<T> &g = t.value(scale);
    const Tensor<T> &b = t.value(shift);
    for (int ch = 0; ch < c; ++ch) {
        const T *src = vi.data.data() + ch * n;
        T *dst = out.data.data() + ch * n;
        T mean = T(0);
        for (std::int64_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::int64_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<T>(n);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < n; ++i)
            dst[i] = g[ch] * (src[i] - mean) * inv + b[ch];
    }
    Var o = t.push(std::move(out), "instance_norm");
    t.set_backward(o, [o, in, scale, shift, c, n, eps](Tape<T> &tt) {
        const Tensor<T> &vi2 = tt.value(in);
        const Tensor<T> &gsc = tt.value(scale);
        const Tensor<T> &go = tt.grad(o);
        Tensor<T> &gi = tt.grad(in);
        Tensor<T> &gs = tt.grad(scale);
        Tensor<T> &gb = tt.grad(shift);
        for (int ch = 0; ch < c; ++ch) {
            const T *src = vi2.data.data() + ch * n;
            const T *gout = go.data.data() + ch * n;
            T *gin = gi.data.data() + ch * n;
            T mean = T(0);
            for (std::int64_t i = 0; i < n; ++i) mean += src[i];
            mean /= static_cast<T>(n);
            T var = T(0);
            for (std::int64_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<T>(n);
            const T inv = T(1) / std::sqrt(var + eps);
            T sum_g = T(0), sum_gx = T(0);
            for (std::int64_t i = 0; i < n; ++i) {
                const T xh = (src[i] - mean) * inv;
                sum_g += gout[i];
                sum_gx += gout[i] * xh;
            }
            gs[ch] += sum_gx;
            gb[ch] += sum_g;
            const T k = gsc[ch] * inv;
            const T mg = sum_g / static_cast<T>(n);
            const T mgx = sum_gx / static_cast<T>(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const T xh = (src[i] - mean) * inv;
                gin[i] += k * (gout[i] - mg - xh * mgx);
            }
        }
    });
    return o;
}

// Slope applies on the non-positive branch (subgradient at 0 takes the
// negative side).
template <typename T>
Var op_leaky_relu(Tape<T> &t, Var in, T slope) {
    Tensor<T> out = t.value(in);
    for (auto &v : out.data) v = v > T(0) ? v : slope * v;
    Var o = t.push(std::move(out), "leaky_relu");
    t.set_backward(o, [o, in, slope](Tape<T> &tt) {
        const Tensor<T> &vi = tt.value(in);
        const Tensor<T> &go = tt.grad(o);
        Tensor<T> &gi = tt.grad(in);
        for (std::int64_t i = 0; i < go.size(); ++i)
            gi[i] += go[i] * (vi[i] > T(0) ? T(1) : slope);
    });
    return o;
}

template <typename T>
Var op_avg_pool_2x(Tape<T> &t, Var in) {
    const Tensor<T> &vi = t.value(in);
    const Dims3 d = spatial_dims(vi.shape);
    const Dims3 od = halved(d);
    const int c = vi.shape[0];
    Tensor<T> out({c, od.h, od.w, od.l});
    kern::avg_pool_fwd(vi.data.data(), c, d, out.data.data());
    Var o = t.push(std::move(out), "avg_pool_2x");
    t.set_backward(o, [o, in, c, d](Tape<T> &tt) {
        kern::avg_pool_bwd(c, d, tt.grad(o).data.data(), tt.grad(in).data.data());
    });
    return o;
}

// Displacement-field upsampling: values interpolated onto target dims and
// doubled (vectors are stored in units of their own grid).
template <typename T>
Var op_upsample_field_2x(Tape<T> &t, Var field, Dims3 target) {
    const Tensor<T> &vf = t.value(field);
    const Dims3 d = spatial_dims(vf.shape);
    check_upsample_target(d, target);
    const int c = vf.shape[0];
    Tensor<T> out({c, target.h, target.w, target.l});
    kern::upsample2_fwd(vf.data.data(), c, d, target, T(2), out.data.data());
    Var o = t.push(std::move(out), "upsample_field_2x");
    t.set_backward(o, [o, field, c, d, target](Tape<T> &tt) {
        kern::upsample2_bwd(c, d, target, T(2), tt.grad(o).data.data(),
                            tt.grad(field).data.data());
    });
    return o;
}

// out(x) = vol(x + field(x)); gradients flow into both the volume and field.
template <typename T>
Var op_warp(Tape<T> &t, Var vol, Var field) {
    const Tensor<T> &vv = t.value(vol);
    const Tensor<T> &vf = t.value(field);
    const Dims3 d = spatial_dims(vv.shape);
    if (spatial_dims(vf.shape) != d || vf.shape[0] != 3)
        throw invalid_input("warp: field must be {3," + dims_to_string(d) + "}");
    const int c = vv.shape[0];
    Tensor<T> out(vv.shape);
    kern::warp_fwd(vv.data.data(), c, d, vf.data.data(), out.data.data());
    Var o = t.push(std::move(out), "warp");
    t.set_backward(o, [o, vol, field, c, d](Tape<T> &tt) {
        kern::warp_bwd(tt.value(vol).data.data(), c, d, tt.value(field).data.data(),
                       tt.grad(o).data.data(), tt.grad(vol).data.data(),
                       tt.grad(field).data.data());
    });
    return o;
}

// compose(prev, res)(x) = res(x) + prev(x + res(x)).
template <typename T>
Var op_compose(Tape<T> &t, Var prev, Var res) {
    detail::check_same_shape(t.value(prev), t.value(res), "compose");
    return op_add(t, res, op_warp(t, prev, res));
}

template <typename T>
Var op_boxsum(Tape<T> &t, Var in, int radius) {
    const Tensor<T> &vi = t.value(in);
    const Dims3 d = spatial_dims(vi.shape);
    const int c = vi.shape[0];
    Tensor<T> tmp(vi.shape), out(vi.shape);
    kern::boxsum1d(vi.data.data(), c, d, 0, radius, out.data.data());
    kern::boxsum1d(out.data.data(), c, d, 1, radius, tmp.data.data());
    kern::boxsum1d(tmp.data.data(), c, d, 2, radius, out.data.data());
    Var o = t.push(std::move(out), "boxsum");
    t.set_backward(o, [o, in, c, d, radius](Tape<T> &tt) {
        // zero-padded box sums are self-adjoint
        Tensor<T> a(tt.value(in).shape), b(tt.value(in).shape);
        kern::boxsum1d(tt.grad(o).data.data(), c, d, 0, radius, a.data.data());
        kern::boxsum1d(a.data.data(), c, d, 1, radius, b.data.data());
        kern::boxsum1d(b.data.data(), c, d, 2, radius, a.data.data());
        Tensor<T> &gi = tt.grad(in);
        for (std::int64_t i = 0; i < gi.size(); ++i) gi[i] += a[i];
    });
    return o;
}

// Diffusion-style displacement regularizer: for each component and axis the
// squared forward difference is averaged over its defined positions, summed
// over axes and averaged over the three components.
template <typename T>
Var op_grad_reg(Tape<T> &t, Var field) {
    const Tensor<T> &vf = t.value(field);
    const Dims3 d = spatial_dims(vf.shape);
    if (vf.shape[0] != 3) throw invalid_input("grad_reg: field must have 3 components");
    if (d.h < 2 || d.w < 2 || d.l < 2)
        throw invalid_input("grad_reg requires dims >= 2 per axis");
    const std::int64_t n = voxel_count(d);
    const int dims[3] = {d.h, d.w, d.l};
    const std::int64_t strides[3] = {1, d.h, static_cast<std::int64_t>(d.h) * d.w};
    T total = T(0);
    for (int comp = 0; comp < 3; ++comp) {
        const T *u = vf.data.data() + comp * n;
        for (int axis = 0; axis < 3; ++axis) {
            const std::int64_t defined = n - n / dims[axis];
            T s = T(0);
            std::int64_t p = 0;
            for (int z = 0; z < d.l; ++z)
                for (int y = 0; y < d.w; ++y)
                    for (int x = 0; x < d.h; ++x, ++p) {
                        const int pos = axis == 0 ? x : (axis == 1 ? y : z);
                        if (pos >= dims[axis] - 1) continue;
                        const T diff = u[p + strides[axis]] - u[p];
                        s += diff * diff;
                    }
            total += s / static_cast<T>(defined);
        }
    }
    Tensor<T> out({1});
    out[0] = total / T(3);
    Var o = t.push(std::move(out), "grad_reg");
    t.set_backward(o, [o, field, d, n](Tape<T> &tt) {
        const T g = tt.grad(o)[0];
        const Tensor<T> &vf2 = tt.value(field);
        Tensor<T> &gf = tt.grad(field);
        const int dims2[3] = {d.h, d.w, d.l};
        const std::int64_t strides2[3] = {1, d.h, static_cast<std::int64_t>(d.h) * d.w};
        for (int comp = 0; comp < 3; ++comp) {
            const T *u = vf2.data.data() + comp * n;
            T *gu = gf.data.data() + comp * n;
            for (int axis = 0; axis < 3; ++axis) {
                const std::int64_t defined = n - n / dims2[axis];
                const T coeff = T(2) * g / (T(3) * static_cast<T>(defined));
                std::int64_t p = 0;
                for (int z = 0; z < d.l; ++z)
                    for (int y = 0; y < d.w; ++y)
                        for (int x = 0; x < d.h; ++x, ++p) {
                            const int pos = axis == 0 ? x : (axis == 1 ? y : z);
                            if (pos >= dims2[axis] - 1) continue;
                            const T diff = u[p + strides2[axis]] - u[p];
                            gu[p + strides2[axis]] += coeff * diff;
                            gu[p] -= coeff * diff;
                        }
            }
        }
    });
    return o;
}

// Pointwise linear projection of a {c,h,w,l} feature map into a
// position-major {n, K} matrix: out[p,k] = b[k] + sum_c W[k,c] * in[c,p].
template <typename T>
Var op_linear_proj(Tape<T> &t, Var in, Var weight, Var bias) {
    const Tensor<T> &vi = t.value(in);
    const Tensor<T> &vw = t.value(weight);
    const Tensor<T> &vb = t.value(bias);
    const int c = vi.shape[0];
    const std::int64_t n = vi.size() / c;
    if (vw.shape.size() != 2 || vw.shape[1] != c)
        throw invalid_input("linear_proj: weight shape must be {K,c} with matching channels");
    const int K = vw.shape[0];
    if (vb.size() != K) throw invalid_input("linear_proj: bias size mismatch");
    Tensor<T> out({static_cast<int>(n), K});
    std::vector<T> col(static_cast<std::size_t>(c));
    for (std::int64_t p = 0; p < n; ++p) {
        for (int ch = 0; ch < c; ++ch) col[static_cast<std::size_t>(ch)] = vi[ch * n + p];
        T *dst = out.data.data() + p * K;
        for (int k = 0; k < K; ++k) {
            const T *wrow = vw.data.data() + static_cast<std::int64_t>(k) * c;
            T s = vb[k];
            for (int ch = 0; ch < c; ++ch) s += wrow[ch] * col[static_cast<std::size_t>(ch)];
            dst[k] = s;
        }
    }
    Var o = t.push(std::move(out), "linear_proj");
    t.set_backward(o, [o, in, weight, bias, c, n, K](Tape<T> &tt) {
        const Tensor<T> &vi2 = tt.value(in);
        const Tensor<T> &vw2 = tt.value(weight);
        const Tensor<T> &go = tt.grad(o);
        Tensor<T> &gi = tt.grad(in);
        Tensor<T> &gw = tt.grad(weight);
        Tensor<T> &gb = tt.grad(bias);
        std::vector<T> col(static_cast<std::size_t>(c));
        for (std::int64_t p = 0; p < n; ++p) {
            for (int ch = 0; ch < c; ++ch) col[static_cast<std::size_t>(ch)] = vi2[ch * n + p];
            const T *grow = go.data.data() + p * K;
            for (int k = 0; k < K; ++k) {
                const T g = grow[k];
                if (g == T(0)) continue;
                gb[k] += g;
                const T *wrow = vw2.data.data() + static_cast<std::int64_t>(k) * c;
                T *gwrow = gw.data.data() + static_cast<std::int64_t>(k) * c;
                for (int ch = 0; ch < c; ++ch) {
                    gwrow[ch] += g * col[static_cast<std::size_t>(ch)];
                    gi[ch * n + p] += g * wrow[ch];
                }
            }
        }
    });
    return o;
}

// LayerNorm over the trailing K axis of a position-major {n, K} matrix.
template <typename T>
Var op_layer_norm(Tape<T> &t, Var in, Var gamma, Var beta, T eps = T(1e-5)) {
    const Tensor<T> &vi = t.value(in);
    if (vi.shape.size() != 2) throw invalid_input("layer_norm: expected {n,K} input");
    const std::int64_t n = vi.shape[0];
    const int K = vi.shape[1];
    if (t.value(gamma).size() != K || t.value(beta).size() != K)
        throw invalid_input("layer_norm: affine size mismatch");
    Tensor<T> out(vi.shape);
    const Tensor<T> &g = t.value(gamma);
    const Tensor<T> &b = t.value(beta);
    for (std::int64_t p = 0; p < n; ++p) {
        const T *src = vi.data.data() + p * K;
        T *dst = out.data.data() + p * K;
        T mean = T(0);
        for (int k = 0; k < K; ++k) mean += src[k];
        mean /= static_cast<T>(K);
        T var = T(0);
        for (int k = 0; k < K; ++k) var += (src[k] - mean) * (src[k] - mean);
        var /= static_cast<T>(K);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int k = 0; k < K; ++k) dst[k] = g[k] * (src[k] - mean) * inv + b[k];
    }
    Var o = t.push(std::move(out), "layer_norm");
    t.set_backward(o, [o, in, gamma, beta, n, K, eps](Tape<T> &tt) {
        const Tensor<T> &vi2 = tt.value(in);
        const Tensor<T> &vg = tt.value(gamma);
        const Tensor<T> &go = tt.grad(o);
        Tensor<T> &gi = tt.grad(in);
        Tensor<T> &gg = tt.grad(gamma);
        Tensor<T> &gb = tt.grad(beta);
        for (std::int64_t p = 0; p < n; ++p) {
            const T *src = vi2.data.data() + p * K;
            const T *gout = go.data.data() + p * K;
            T *gin = gi.data.data() + p * K;
            T mean = T(0);
            for (int k = 0; k < K; ++k) mean += src[k];
            mean /= static_cast<T>(K);
            T var = T(0);
            for (int k = 0; k < K; ++k) var += (src[k] - mean) * (src[k] - mean);
            var /= static_cast<T>(K);
            const T inv = T(1) / std::sqrt(var + eps);
            T sum_g = T(0), sum_gx = T(0);
            for (int k = 0; k < K; ++k) {
                const T xh = (src[k] - mean) * inv;
                sum_g += gout[k] * vg[k];
                sum_gx += gout[k] * vg[k] * xh;
            }
            const T mg = sum_g / static_cast<T>(K);
            const T mgx = sum_gx / static_cast<T>(K);
            for (int k = 0; k < K; ++k) {
                const T xh = (src[k] - mean) * inv;
                gg[k] += gout[k] * xh;
                gb[k] += gout[k];
                gin[k] += inv * (gout[k] * vg[k] - mg - xh * mgx);
            }
        }
    });
    return o;
}

} // namespace mdreg
