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

#include <cmath>
#include <set>

#include "mdreg/engine.hpp"
#include "mdreg/gradcheck.hpp"
#include "mdreg/synth.hpp"

namespace mdreg {

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng &rng, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto &v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Displacement entries kept away from lattice crossings so finite differences
// never straddle an interpolation kink.
Tensor<double> random_safe_field(Dims3 d, Rng &rng) {
    Tensor<double> t({3, d.h, d.w, d.l});
    for (auto &v : t.data) {
        const double mag = rng.uniform(0.12, 0.38);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

// Scalarizes an op output with fixed pseudo-random weights so the loss is
// sensitive to every output entry.
Var weighted_sum(Tape<double> &t, Var v, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> w(t.value(v).shape);
    for (auto &x : w.data) x = rng.uniform(-1.0, 1.0);
    return op_sum_all(t, op_mul(t, v, t.input(std::move(w), "probe_weights")));
}

GradCheckResult check_trilinear_coords() {
    GradCheckResult res;
    res.name = "trilinear_sample (coords)";
    res.tolerance = 1e-4;
    Rng rng(21);
    const Dims3 d{8, 7, 6};
    Tensor<double> vol({1, d.h, d.w, d.l});
    for (auto &v : vol.data) v = rng.uniform(-1.0, 1.0);
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 64; ++trial) {
        double c[3];
        c[0] = rng.uniform(0.6, d.h - 1.6) + rng.uniform(0.1, 0.4);
        c[1] = rng.uniform(0.6, d.w - 1.6) + rng.uniform(0.1, 0.4);
        c[2] = rng.uniform(0.6, d.l - 1.6) + rng.uniform(0.1, 0.4);
        const auto ax = kern::resolve_axis(c[0], d.h);
        const auto ay = kern::resolve_axis(c[1], d.w);
        const auto az = kern::resolve_axis(c[2], d.l);
        const auto analytic = kern::sample_plane_coord_grad(vol.data.data(), d, ax, ay, az);
        for (int axis = 0; axis < 3; ++axis) {
            double cp[3] = {c[0], c[1], c[2]}, cm[3] = {c[0], c[1], c[2]};
            cp[axis] += h;
            cm[axis] -= h;
            auto sample_at = [&](const double *q) {
                return kern::sample_plane(vol.data.data(), d, kern::resolve_axis(q[0], d.h),
                                          kern::resolve_axis(q[1], d.w),
                                          kern::resolve_axis(q[2], d.l));
            };
            const double numeric = (sample_at(cp) - sample_at(cm)) / (2.0 * h);
            const double denom = std::max({1e-3, std::abs(analytic[axis]), std::abs(numeric)});
            worst = std::max(worst, std::abs(analytic[axis] - numeric) / denom);
        }
    }
    res.worst_rel_err = worst;
    res.pass = worst <= res.tolerance;
    return res;
}

GradCheckResult check_pipeline_params(int entries_per_tensor, bool diffeomorphic) {
    GradCheckResult res;
    res.name = diffeomorphic ? "pipeline 16^3 (params, diffeomorphic)"
                             : "pipeline 16^3 (params)";
    res.tolerance = diffeomorphic ? 1e-3 : 1e-4;

    ModelConfig cfg = ModelConfig::small_preset();
    cfg.diffeomorphic = diffeomorphic;
    cfg.ss_steps = 4;
    ModelParams<double> params = init_model<double>(cfg, 11);

    // A fresh model is a near-exact identity, which parks every warp sample on
    // an interpolation kink where central differences disagree with the
    // one-sided analytic derivative, and leaves instance-norm outputs exactly
    // on the leaky-ReLU kink at degenerate 1^3 levels. Nudge the parameters so
    // all nonsmooth points are avoided while fields stay small enough for the
    // 1e-5 step to remain in the finite-difference-accurate regime (the
    // coarsest bias is amplified 16x by the upsampling chain).
    Rng warm(5);
    for (auto &block : params.encoder_blocks) {
        for (auto &v : block.n1_beta.value.data) v = warm.uniform(0.02, 0.06);
        for (auto &v : block.n2_beta.value.data) v = warm.uniform(0.02, 0.06);
    }
    for (std::size_t k = 0; k < params.levels.size(); ++k) {
        auto &lvl = params.levels[k];
        for (auto &v : lvl.reghead.bias.value.data) v = warm.uniform(0.015, 0.035);
        for (auto &v : lvl.reghead.weight.value.data) v = warm.normal(0.0, 0.01);
        for (auto &v : lvl.proj.weight.value.data) v = warm.normal(0.0, 0.05);
        for (auto &v : lvl.rel_pos_bias.value.data) v = warm.normal(0.0, 0.3);
    }

    SynthConfig scfg;
    scfg.dims = {16, 16, 16};
    scfg.seed = 3;
    scfg.max_disp = 1.2f;
    const SynthPair sp = make_synth_pair(scfg);

    LossConfig loss_cfg;
    loss_cfg.lambda = 1.0;
    loss_cfg.ncc_window = 3;

    auto tensors = params.all_tensors();
    run_loss_step(sp.fixed, sp.moving, params, loss_cfg, tensors, true);
    std::vector<Tensor<double>> analytic;
    for (auto *p : tensors) analytic.push_back(p->grad);

    // Per-op checks use the standard 1e-5 step. The composite check uses a
    // finer step: shifting a norm beta translates a whole zero-mean activation
    // channel, and a 1e-5 window reliably sweeps a few of the 4096 activations
    // across the leaky-ReLU kink, which central differences integrate over but
    // the subgradient convention does not.
    Rng rng(99);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        ParamTensor<double> &p = *tensors[i];
        const std::int64_t n = p.value.size();
        std::set<std::int64_t> chosen;
        const int want = std::min<std::int64_t>(entries_per_tensor, n);
        while (static_cast<int>(chosen.size()) < want)
            chosen.insert(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
        for (std::int64_t j : chosen) {
            const double saved = p.value[j];
            auto central = [&](double step) {
                p.value[j] = saved + step;
                const double up =
                    run_loss_step(sp.fixed, sp.moving, params, loss_cfg, tensors, false);
                p.value[j] = saved - step;
                const double dn =
                    run_loss_step(sp.fixed, sp.moving, params, loss_cfg, tensors, false);
                p.value[j] = saved;
                return (up - dn) / (2.0 * step);
            };
            const double a = analytic[i][j];
            auto rel = [&](double numeric) {
                return std::abs(a - numeric) /
                       std::max({1e-3, std::abs(a), std::abs(numeric)});
            };
            double err = rel(central(h));
            // A kink swept by the difference window vanishes at a smaller
            // step; a wrong analytic gradient fails at every step size.
            if (err > res.tolerance) err = rel(central(h / 10.0));
            worst = std::max(worst, err);
        }
    }
    res.worst_rel_err = worst;
    res.pass = worst <= res.tolerance;
    return res;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck_suite(int pipeline_entries_per_tensor) {
    std::vector<GradCheckResult> out;
    Rng rng(17);

    out.push_back(check_trilinear_coords());

    {
        const Dims3 d{5, 5, 5};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({1, d.h, d.w, d.l}, rng));
        inputs.push_back(random_tensor({2, 1, 3, 3, 3}, rng));
        inputs.push_back(random_tensor({2}, rng));
        out.push_back(grad_check_op("conv3 (input, kernel, bias)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_conv3(t, v[0], v[1], v[2]), 1);
                                    }));
    }
    {
        const Dims3 d{5, 4, 4};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({2, d.h, d.w, d.l}, rng));
        inputs.push_back(random_tensor({2}, rng, 0.5, 1.5));
        inputs.push_back(random_tensor({2}, rng));
        out.push_back(grad_check_op("instance_norm (input, scale, shift)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_instance_norm(t, v[0], v[1], v[2]), 2);
                                    }));
    }
    {
        Tensor<double> x = random_tensor({2, 4, 4, 4}, rng);
        for (auto &v : x.data) v += v >= 0.0 ? 0.1 : -0.1; // keep off the kink at 0
        out.push_back(grad_check_op("leaky_relu", {std::move(x)},
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_leaky_relu(t, v[0], 0.2), 3);
                                    }));
    }
    {
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({2, 5, 6, 5}, rng)); // odd dims exercise padding
        out.push_back(grad_check_op("avg_pool_2x", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_avg_pool_2x(t, v[0]), 4);
                                    }));
    }
    {
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_safe_field({4, 4, 3}, rng));
        out.push_back(grad_check_op("upsample_field_2x", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(
                                            t, op_upsample_field_2x(t, v[0], Dims3{8, 7, 6}), 5);
                                    }));
    }
    {
        const Dims3 d{6, 6, 5};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({2, d.h, d.w, d.l}, rng));
        inputs.push_back(random_safe_field(d, rng));
        out.push_back(grad_check_op("warp (volume, field)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_warp(t, v[0], v[1]), 6);
                                    }));
    }
    {
        const Dims3 d{6, 5, 6};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_safe_field(d, rng));
        inputs.push_back(random_safe_field(d, rng));
        out.push_back(grad_check_op("compose (prev, res)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_compose(t, v[0], v[1]), 7);
                                    }));
    }
    {
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({4, 4, 4, 4}, rng));
        inputs.push_back(random_tensor({6, 4}, rng));
        inputs.push_back(random_tensor({6}, rng));
        out.push_back(grad_check_op("linear_proj (input, weight, bias)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_linear_proj(t, v[0], v[1], v[2]), 8);
                                    }));
    }
    {
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({27, 6}, rng));
        inputs.push_back(random_tensor({6}, rng, 0.5, 1.5));
        inputs.push_back(random_tensor({6}, rng));
        out.push_back(grad_check_op("layer_norm (input, gamma, beta)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_layer_norm(t, v[0], v[1], v[2]), 9);
                                    }));
    }
    {
        const Dims3 d{5, 4, 4};
        AttentionConfig acfg{2, 3, 3};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({static_cast<int>(voxel_count(d)), 6}, rng));
        inputs.push_back(random_tensor({static_cast<int>(voxel_count(d)), 6}, rng));
        inputs.push_back(random_tensor({2, 27}, rng));
        out.push_back(grad_check_op("neighborhood_attention_fused (Q,K,B)", std::move(inputs),
                                    [d, acfg](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(
                                            t, op_na_fused(t, v[0], v[1], v[2], d, acfg), 10);
                                    }));
    }
    {
        const Dims3 d{4, 4, 4};
        AttentionConfig acfg{2, 3, 3};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({static_cast<int>(voxel_count(d)), 6}, rng));
        inputs.push_back(random_tensor({static_cast<int>(voxel_count(d)), 6}, rng));
        inputs.push_back(random_tensor({2, 27}, rng));
        out.push_back(grad_check_op("neighborhood_attention_naive (Q,K,B)", std::move(inputs),
                                    [d, acfg](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(
                                            t, op_na_naive(t, v[0], v[1], v[2], d, acfg), 11);
                                    }));
    }
    {
        const Dims3 d{3, 3, 3};
        AttentionConfig acfg{2, 3, 3};
        Tensor<double> w({2, static_cast<int>(voxel_count(d)), 27});
        for (std::int64_t row = 0; row < 2 * voxel_count(d); ++row) {
            double s = 0.0;
            for (int o = 0; o < 27; ++o) {
                const double v = rng.uniform(0.05, 1.0);
                w[row * 27 + o] = v;
                s += v;
            }
            for (int o = 0; o < 27; ++o) w[row * 27 + o] /= s;
        }
        out.push_back(grad_check_op("subfields_from_attention", {std::move(w)},
                                    [d, acfg](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(
                                            t, op_subfields(t, v[0], d, acfg, 0.5), 12);
                                    }));
    }
    {
        const Dims3 d{5, 5, 4};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({6, d.h, d.w, d.l}, rng, -0.5, 0.5)); // 3S with S=2
        inputs.push_back(random_tensor({3, 6, 3, 3, 3}, rng, -0.3, 0.3));
        inputs.push_back(random_tensor({3}, rng, -0.1, 0.1));
        out.push_back(grad_check_op("reghead fuse (stack, conv, bias)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return weighted_sum(t, op_reghead_fuse(t, v[0], v[1], v[2]), 13);
                                    }));
    }
    {
        const Dims3 d{6, 6, 6};
        Tensor<double> v({3, d.h, d.w, d.l});
        Rng vr(31);
        for (auto &x : v.data) x = vr.uniform(-0.3, 0.3);
        out.push_back(grad_check_op("scaling_squaring (velocity, T=4)", {std::move(v)},
                                    [](Tape<double> &t, const std::vector<Var> &vars) {
                                        return weighted_sum(t, op_scaling_squaring(t, vars[0], 4), 14);
                                    },
                                    1e-3));
    }
    {
        const Dims3 d{6, 6, 6};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({1, d.h, d.w, d.l}, rng));
        inputs.push_back(random_tensor({1, d.h, d.w, d.l}, rng));
        out.push_back(grad_check_op("ncc_loss (fixed, warped)", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return op_ncc_loss(t, v[0], v[1], 3);
                                    }));
    }
    {
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({3, 5, 5, 5}, rng));
        out.push_back(grad_check_op("grad_reg", std::move(inputs),
                                    [](Tape<double> &t, const std::vector<Var> &v) {
                                        return op_grad_reg(t, v[0]);
                                    }));
    }
    {
        const Dims3 d{8, 8, 8};
        std::vector<Tensor<double>> inputs;
        inputs.push_back(random_tensor({1, d.h, d.w, d.l}, rng));
        inputs.push_back(random_tensor({1, d.h, d.w, d.l}, rng));
        inputs.push_back(random_safe_field(d, rng));
        LossConfig cfg;
        cfg.lambda = 0.7;
        cfg.ncc_window = 3;
        out.push_back(grad_check_op("total_loss (phi and images)", std::move(inputs),
                                    [cfg](Tape<double> &t, const std::vector<Var> &v) {
                                        return op_total_loss(t, v[0], v[1], v[2], cfg);
                                    },
                                    1e-4, 40));
    }

    out.push_back(check_pipeline_params(pipeline_entries_per_tensor, false));
    out.push_back(check_pipeline_params(pipeline_entries_per_tensor, true));
    return out;
}

} // namespace mdreg
