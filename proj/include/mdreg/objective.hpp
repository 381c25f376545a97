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

#include "mdreg/ops.hpp"
#include "mdreg/volume.hpp"

namespace mdreg {

struct LossConfig {
    double lambda = 1.0;
    int ncc_window = 9;

    void validate() const {
        if (lambda < 0.0) throw invalid_input("loss: lambda must be >= 0");
        if (ncc_window < 3 || ncc_window % 2 == 0)
            throw invalid_input("loss: ncc_window must be odd and >= 3");
    }
};

inline constexpr double kNccEps = 1e-5;

// Local normalized cross-correlation loss. Window statistics come from
// zero-padded box sums normalized by the per-voxel in-bounds window count, so
// the loss is exactly invariant to positive affine rescaling of either image.
// A perfect match scores -1 up to the epsilon guard in the denominator.
template <typename T>
Var op_ncc_loss(Tape<T> &t, Var fixed, Var warped, int window) {
    const Tensor<T> &vf = t.value(fixed);
    detail::check_same_shape(vf, t.value(warped), "ncc_loss");
    if (vf.shape[0] != 1) throw invalid_input("ncc_loss: expects single-channel volumes");
    if (window < 3 || window % 2 == 0)
        throw invalid_input("ncc_loss: window must be odd and >= 3");
    const int r = window / 2;
    const Dims3 d = spatial_dims(vf.shape);

    Tensor<T> ones(vf.shape);
    ones.fill(T(1));
    Tensor<T> counts(vf.shape);
    {
        Tensor<T> tmp(vf.shape);
        kern::boxsum1d(ones.data.data(), 1, d, 0, r, counts.data.data());
        kern::boxsum1d(counts.data.data(), 1, d, 1, r, tmp.data.data());
        kern::boxsum1d(tmp.data.data(), 1, d, 2, r, counts.data.data());
    }
    Var cnt = t.input(std::move(counts), "window_counts");

    Var sf = op_boxsum(t, fixed, r);
    Var sg = op_boxsum(t, warped, r);
    Var sff = op_boxsum(t, op_mul(t, fixed, fixed), r);
    Var sgg = op_boxsum(t, op_mul(t, warped, warped), r);
    Var sfg = op_boxsum(t, op_mul(t, fixed, warped), r);

    Var cross = op_sub(t, sfg, op_div(t, op_mul(t, sf, sg), cnt));
    Var var_f = op_sub(t, sff, op_div(t, op_mul(t, sf, sf), cnt));
    Var var_g = op_sub(t, sgg, op_div(t, op_mul(t, sg, sg), cnt));

    Var cc = op_div(t, op_mul(t, cross, cross),
                    op_add_scalar(t, op_mul(t, var_f, var_g), static_cast<T>(kNccEps)));
    return op_scale(t, op_mean_all(t, cc), T(-1));
}

// ncc + lambda * grad_reg, with the moving image warped by phi.
template <typename T>
Var op_total_loss(Tape<T> &t, Var fixed, Var moving, Var phi, const LossConfig &cfg) {
    cfg.validate();
    Var warped = op_warp(t, moving, phi);
    Var similarity = op_ncc_loss(t, fixed, warped, cfg.ncc_window);
    if (cfg.lambda == 0.0) return similarity;
    return op_add(t, similarity, op_scale(t, op_grad_reg(t, phi), static_cast<T>(cfg.lambda)));
}

// ---- plain wrappers for evaluation and tests --------------------------------

inline double ncc_loss(const Volume &fixed, const Volume &warped, int window) {
    if (fixed.dims != warped.dims) throw invalid_input("ncc_loss: dims mismatch");
    Tape<double> t;
    Var f = t.input(volume_to_tensor<double>(fixed));
    Var g = t.input(volume_to_tensor<double>(warped));
    return t.scalar(op_ncc_loss(t, f, g, window));
}

inline double grad_reg(const DisplacementField &phi) {
    Tape<double> t;
    Var f = t.input(field_to_tensor<double>(phi));
    return t.scalar(op_grad_reg(t, f));
}

inline double total_loss(const Volume &fixed, const Volume &moving,
                         const DisplacementField &phi, const LossConfig &cfg) {
    if (fixed.dims != moving.dims || fixed.dims != phi.dims)
        throw invalid_input("total_loss: dims mismatch");
    Tape<double> t;
    Var f = t.input(volume_to_tensor<double>(fixed));
    Var m = t.input(volume_to_tensor<double>(moving));
    Var p = t.input(field_to_tensor<double>(phi));
    return t.scalar(op_total_loss(t, f, m, p, cfg));
}

} // namespace mdreg
