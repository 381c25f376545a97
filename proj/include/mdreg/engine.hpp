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
#include <limits>
#include <utility>
#include <vector>

#include "mdreg/attention.hpp"
#include "mdreg/encoder.hpp"
#include "mdreg/field_ops.hpp"
#include "mdreg/metrics.hpp"
#include "mdreg/objective.hpp"
#include "mdreg/reghead.hpp"

namespace mdreg {

struct ModelConfig {
    EncoderConfig encoder;
    std::vector<int> heads_per_level{8, 4, 2, 1, 1}; // coarse -> fine
    int head_dim = 6;
    int neighborhood = 3;
    bool diffeomorphic = false;
    int ss_steps = 7;

    static ModelConfig small_preset() {
        ModelConfig c;
        c.encoder.base_channels = 8;
        c.head_dim = 6;
        c.heads_per_level = {8, 4, 2, 1, 1};
        return c;
    }

    static ModelConfig large_preset() {
        ModelConfig c;
        c.encoder.base_channels = 32;
        c.head_dim = 12;
        c.heads_per_level = {32, 16, 8, 4, 1};
        return c;
    }

    AttentionConfig attention_at(int decode_level) const { // 0 = coarsest
        AttentionConfig a;
        a.heads = heads_per_level[static_cast<std::size_t>(decode_level)];
        a.head_dim = head_dim;
        a.neighborhood = neighborhood;
        return a;
    }

    void validate() const {
        encoder.validate();
        if (static_cast<int>(heads_per_level.size()) != encoder.levels)
            throw invalid_input("model: heads_per_level must have one entry per level");
        for (std::size_t i = 0; i < heads_per_level.size(); ++i) {
            if (heads_per_level[i] < 1) throw invalid_input("model: head counts must be >= 1");
            if (i > 0 && heads_per_level[i] > heads_per_level[i - 1])
                throw invalid_input("model: head counts must be non-increasing coarse to fine");
        }
        if (head_dim < 1) throw invalid_input("model: head_dim must be >= 1");
        if (neighborhood < 3 || neighborhood % 2 == 0)
            throw invalid_input("model: neighborhood must be odd and >= 3");
        if (ss_steps < 1) throw invalid_input("model: ss_steps must be >= 1");
    }
};

enum class OptimizerKind { adam, sgd };

struct OptimConfig {
    double lr_init = 1e-4;
    int epochs = 30;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lambda = 1.0;
    int ncc_window = 9;
    int po_iters = 50;
    OptimizerKind optimizer = OptimizerKind::adam;

    void validate() const {
        if (lr_init <= 0.0) throw invalid_input("optim: lr_init must be > 0");
        if (po_iters < 1) throw invalid_input("optim: po_iters must be >= 1");
        if (epochs < 1) throw invalid_input("optim: epochs must be >= 1");
        LossConfig{lambda, ncc_window}.validate();
    }

    LossConfig loss() const { return LossConfig{lambda, ncc_window}; }
};

// Polynomial decay: lr_init * (1 - (m-1)/M)^0.9 for epoch m in [1,M].
inline double lr_schedule(int m, int M, double lr_init) {
    if (m < 1 || m > M) throw invalid_input("lr_schedule: epoch index out of range");
    return lr_init * std::pow(1.0 - static_cast<double>(m - 1) / static_cast<double>(M), 0.9);
}

template <typename T>
struct LevelParams {
    ProjectionParams<T> proj;
    ParamTensor<T> rel_pos_bias; // {S, n^3}, zero-initialized
    RegHeadParams<T> reghead;
};

template <typename T>
struct ModelParams {
    ModelConfig cfg;
    std::vector<ConvBlockParams<T>> encoder_blocks; // level 1..5
    std::vector<LevelParams<T>> levels;             // coarse -> fine

    // Stable enumeration used by optimizers and the checkpoint format.
    std::vector<ParamTensor<T> *> all_tensors() {
        std::vector<ParamTensor<T> *> out;
        for (auto &b : encoder_blocks)
            for (ParamTensor<T> *p : {&b.w1, &b.b1, &b.n1_gamma, &b.n1_beta, &b.w2, &b.b2,
                                      &b.n2_gamma, &b.n2_beta})
                out.push_back(p);
        for (auto &l : levels)
            for (ParamTensor<T> *p : {&l.proj.weight, &l.proj.bias, &l.proj.ln_gamma,
                                      &l.proj.ln_beta, &l.rel_pos_bias, &l.reghead.weight,
                                      &l.reghead.bias})
                out.push_back(p);
        return out;
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto *p : all_tensors()) n += p->value.size();
        return n;
    }
};

template <typename T>
ModelParams<T> init_model(const ModelConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParams<T> mp;
    mp.cfg = cfg;
    const int c = cfg.encoder.base_channels;
    mp.encoder_blocks.push_back(make_conv_block<T>("enc.l1", 1, c, rng));
    for (int level = 2; level <= cfg.encoder.levels; ++level)
        mp.encoder_blocks.push_back(make_conv_block<T>("enc.l" + std::to_string(level),
                                                       c << (level - 2), c << (level - 1), rng));
    const int win = cfg.neighborhood * cfg.neighborhood * cfg.neighborhood;
    for (int k = 0; k < cfg.encoder.levels; ++k) {
        const int enc_level = cfg.encoder.levels - k;
        const int in_c = cfg.encoder.channels_at(enc_level);
        const int S = cfg.heads_per_level[static_cast<std::size_t>(k)];
        LevelParams<T> lp;
        const std::string prefix = "lvl" + std::to_string(k);
        lp.proj = make_projection_params<T>(prefix + ".proj", in_c, S * cfg.head_dim, rng);
        lp.rel_pos_bias = ParamTensor<T>(prefix + ".bias_b", Tensor<T>({S, win}));
        lp.reghead = make_reghead_params<T>(prefix + ".reghead", S, rng);
        mp.levels.push_back(std::move(lp));
    }
    return mp;
}

// ---- pipeline ---------------------------------------------------------------

struct PipelineVars {
    Var phi;
    std::vector<Var> residuals; // coarse -> fine
};

// The decoding pyramid: at the coarsest level attention runs on the raw
// feature pair; at each finer level the moving features are first warped by
// the upsampled running field, the residual is estimated and composed on.
template <typename T>
PipelineVars build_pipeline(Tape<T> &t, Var fixed_img, Var moving_img, ModelParams<T> &mp) {
    mp.cfg.validate();
    detail::check_same_shape(t.value(fixed_img), t.value(moving_img), "pipeline");

    std::vector<ConvBlockVars> blocks;
    for (auto &b : mp.encoder_blocks) blocks.push_back(leaf_conv_block(t, b));
    std::vector<Var> f_feats = op_encode(t, fixed_img, blocks, mp.cfg.encoder);
    std::vector<Var> m_feats = op_encode(t, moving_img, blocks, mp.cfg.encoder);

    PipelineVars out;
    const int levels = mp.cfg.encoder.levels;
    Var phi; // running total on the current level grid
    for (int k = 0; k < levels; ++k) {
        const int feat_index = levels - 1 - k;
        Var f = f_feats[static_cast<std::size_t>(feat_index)];
        Var m = m_feats[static_cast<std::size_t>(feat_index)];
        const Dims3 dims = spatial_dims(t.value(f).shape);
        LevelParams<T> &lp = mp.levels[static_cast<std::size_t>(k)];

        Var phi_up;
        Var m_in = m;
        if (k > 0) {
            phi_up = op_upsample_field_2x(t, phi, dims);
            m_in = op_warp(t, m, phi_up);
        }

        ProjectionVars pv{t.leaf(lp.proj.weight), t.leaf(lp.proj.bias),
                          t.leaf(lp.proj.ln_gamma), t.leaf(lp.proj.ln_beta)};
        auto [q, key] = op_project_qk(t, f, m_in, pv);
        const AttentionConfig acfg = mp.cfg.attention_at(k);
        Var weights = op_na_fused(t, q, key, t.leaf(lp.rel_pos_bias), dims, acfg);
        Var stack = op_subfields(t, weights, dims, acfg);
        Var res = op_reghead_fuse(t, stack, t.leaf(lp.reghead.weight), t.leaf(lp.reghead.bias));
        if (mp.cfg.diffeomorphic) res = op_scaling_squaring(t, res, mp.cfg.ss_steps);

        phi = (k == 0) ? res : op_compose(t, phi_up, res);
        out.residuals.push_back(res);
    }
    out.phi = phi;
    return out;
}

struct RegistrationResult {
    DisplacementField phi;
    std::vector<DisplacementField> residuals; // coarse -> fine
    Volume warped;
    std::vector<double> loss_trace;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double folding = 0.0;
};

template <typename T>
RegistrationResult extract_result(Tape<T> &t, const PipelineVars &pv, const Volume &moving) {
    RegistrationResult r;
    const Dims3 d = spatial_dims(t.value(pv.phi).shape);
    r.phi = tensor_to_field(t.value(pv.phi), d);
    for (Var res : pv.residuals)
        r.residuals.push_back(tensor_to_field(t.value(res), spatial_dims(t.value(res).shape)));
    r.warped = warp(moving, r.phi);
    r.folding = folding_ratio(r.phi);
    return r;
}

inline void check_pair(const Volume &fixed, const Volume &moving) {
    if (fixed.dims != moving.dims)
        throw invalid_input("registration: fixed dims " + dims_to_string(fixed.dims) +
                            " != moving dims " + dims_to_string(moving.dims));
    check_encodable(fixed.dims);
}

// One forward registration pass (no optimization).
template <typename T = float>
RegistrationResult forward(const Volume &fixed, const Volume &moving, ModelParams<T> &mp) {
    check_pair(fixed, moving);
    Tape<T> t;
    Var fi = t.input(volume_to_tensor<T>(fixed), "fixed");
    Var mi = t.input(volume_to_tensor<T>(moving), "moving");
    PipelineVars pv = build_pipeline(t, fi, mi, mp);
    return extract_result(t, pv, moving);
}

// ---- optimizers -------------------------------------------------------------

template <typename T>
void zero_grads(std::vector<ParamTensor<T> *> &params) {
    for (auto *p : params) p->zero_grad();
}

template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ParamTensor<T> *> params, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto *p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            ParamTensor<T> &p = *params_[i];
            Tensor<T> &m = m_[i];
            Tensor<T> &v = v_[i];
            for (std::int64_t j = 0; j < p.value.size(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * g;
                const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * g * g;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
                p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) - update);
            }
        }
    }

private:
    std::vector<ParamTensor<T> *> params_;
    std::vector<Tensor<T>> m_, v_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

template <typename T>
void sgd_step(std::vector<ParamTensor<T> *> &params, double lr) {
    for (auto *p : params)
        for (std::int64_t j = 0; j < p->value.size(); ++j)
            p->value[j] = static_cast<T>(static_cast<double>(p->value[j]) -
                                         lr * static_cast<double>(p->grad[j]));
}

// ---- optimization loops -----------------------------------------------------

template <typename T>
double run_loss_step(const Volume &fixed, const Volume &moving, ModelParams<T> &mp,
                     const LossConfig &loss_cfg, std::vector<ParamTensor<T> *> &params,
                     bool with_backward, RegistrationResult *result_out = nullptr) {
    Tape<T> t;
    Var fi = t.input(volume_to_tensor<T>(fixed), "fixed");
    Var mi = t.input(volume_to_tensor<T>(moving), "moving");
    PipelineVars pv = build_pipeline(t, fi, mi, mp);
    Var loss = op_total_loss(t, fi, mi, pv.phi, loss_cfg);
    const double loss_val = static_cast<double>(t.scalar(loss));
    if (!std::isfinite(loss_val))
        throw numeric_error("optimization: non-finite loss (" + std::to_string(loss_val) + ")");
    if (with_backward) {
        zero_grads(params);
        t.backward(loss);
    }
    if (result_out) *result_out = extract_result(t, pv, moving);
    return loss_val;
}

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean loss per epoch
    std::vector<double> epoch_lr;
};

// Toy-scale training over a set of pairs, batch size 1, polynomial LR decay.
template <typename T>
TrainHistory train(const std::vector<std::pair<Volume, Volume>> &pairs, ModelParams<T> &mp,
                   const OptimConfig &opt) {
    opt.validate();
    if (pairs.empty()) throw invalid_input("train: need at least one image pair");
    auto params = mp.all_tensors();
    AdamOptimizer<T> adam(params, opt.beta1, opt.beta2, opt.eps);
    TrainHistory hist;
    const LossConfig loss_cfg = opt.loss();
    for (int m = 1; m <= opt.epochs; ++m) {
        const double lr = lr_schedule(m, opt.epochs, opt.lr_init);
        double sum = 0.0;
        for (const auto &pr : pairs) {
            sum += run_loss_step(pr.first, pr.second, mp, loss_cfg, params, true);
            if (opt.optimizer == OptimizerKind::adam)
                adam.step(lr);
            else
                sgd_step(params, lr);
        }
        hist.epoch_loss.push_back(sum / static_cast<double>(pairs.size()));
        hist.epoch_lr.push_back(lr);
    }
    return hist;
}

struct PoResult {
    RegistrationResult reg;
    std::vector<double> loss_trace; // length po_iters + 1; [0] is the initial loss
    std::vector<double> dice_trace; // filled when labels are supplied
};

// Pairwise optimization: constant learning rate, updates all parameters on a
// single image pair. The trace records the loss before each update plus a
// final evaluation after the last one.
template <typename T>
PoResult pairwise_optimize(const Volume &fixed, const Volume &moving, ModelParams<T> &mp,
                           const OptimConfig &opt,
                           const LabelVolume *labels_fixed = nullptr,
                           const LabelVolume *labels_moving = nullptr) {
    opt.validate();
    check_pair(fixed, moving);
    auto params = mp.all_tensors();
    AdamOptimizer<T> adam(params, opt.beta1, opt.beta2, opt.eps);
    const LossConfig loss_cfg = opt.loss();
    const bool with_dice = labels_fixed != nullptr && labels_moving != nullptr;
    PoResult out;
    RegistrationResult step_res;
    for (int i = 0; i < opt.po_iters; ++i) {
        const double loss = run_loss_step(fixed, moving, mp, loss_cfg, params, true,
                                          with_dice ? &step_res : nullptr);
        out.loss_trace.push_back(loss);
        if (with_dice)
            out.dice_trace.push_back(
                mean_dice(*labels_fixed, warp_labels(*labels_moving, step_res.phi)));
        if (opt.optimizer == OptimizerKind::adam)
            adam.step(opt.lr_init);
        else
            sgd_step(params, opt.lr_init);
    }
    RegistrationResult final_res;
    const double final_loss = run_loss_step(fixed, moving, mp, loss_cfg, params, false, &final_res);
    out.loss_trace.push_back(final_loss);
    if (with_dice)
        out.dice_trace.push_back(
            mean_dice(*labels_fixed, warp_labels(*labels_moving, final_res.phi)));
    final_res.loss_trace = out.loss_trace;
    final_res.final_loss = final_loss;
    out.reg = std::move(final_res);
    return out;
}

} // namespace mdreg
