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

#include "mdreg/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdreg/bench.hpp"
#include "mdreg/engine.hpp"
#include "mdreg/gradcheck.hpp"
#include "mdreg/io.hpp"
#include "mdreg/metrics.hpp"
#include "mdreg/synth.hpp"

namespace mdreg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool ends_with(const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Volumes come either as raw .json sidecars or single-file NIfTI-1.
Volume load_volume_any(const std::string &path) {
    if (ends_with(path, ".nii")) return load_nifti(path);
    return load_raw_volume(path);
}

ModelConfig preset_config(const std::string &preset, bool diffeomorphic, int ss_steps) {
    ModelConfig cfg;
    if (preset == "small")
        cfg = ModelConfig::small_preset();
    else if (preset == "large")
        cfg = ModelConfig::large_preset();
    else
        throw invalid_input("unknown preset '" + preset + "' (expected small or large)");
    cfg.diffeomorphic = diffeomorphic;
    cfg.ss_steps = ss_steps;
    return cfg;
}

void write_text(const std::string &path, const std::string &text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw parse_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw parse_error("short write: " + path);
}

json report_to_json(const MetricReport &rep) {
    json j;
    json per;
    for (const auto &[lab, v] : rep.dsc_per_label) per[std::to_string(lab)] = v;
    j["dsc_per_label"] = per;
    j["mean_dsc"] = rep.mean_dsc;
    j["hd95"] = rep.hd95_mean;
    j["assd"] = rep.assd_mean;
    j["folding_pct"] = rep.folding_pct;
    return j;
}

std::string trace_to_csv(const std::vector<double> &loss, const std::vector<double> &dice) {
    std::string out = dice.empty() ? "iter,loss\n" : "iter,loss,dice\n";
    for (std::size_t i = 0; i < loss.size(); ++i) {
        out += std::to_string(i) + "," + fmt_double(loss[i]);
        if (!dice.empty()) out += "," + fmt_double(dice[i]);
        out += "\n";
    }
    return out;
}

struct SynthArgs {
    std::string out;
    int dims = 32;
    std::uint64_t seed = 1;
    double max_disp = 2.0;
    double smooth_sigma = 4.0;
    double translation_frac = 0.6;
    int spheres = 3;
};

int cmd_synth(const SynthArgs &a) {
    SynthConfig cfg;
    cfg.dims = {a.dims, a.dims, a.dims};
    cfg.seed = a.seed;
    cfg.max_disp = static_cast<float>(a.max_disp);
    cfg.smooth_sigma = static_cast<float>(a.smooth_sigma);
    cfg.translation_frac = static_cast<float>(a.translation_frac);
    cfg.num_spheres = a.spheres;
    const SynthPair pair = make_synth_pair(cfg);
    fs::create_directories(a.out);
    save_raw(pair.fixed, a.out + "/fixed");
    save_raw(pair.moving, a.out + "/moving");
    save_raw(pair.labels_fixed, a.out + "/labels_fixed");
    save_raw(pair.labels_moving, a.out + "/labels_moving");
    save_raw(pair.gt_field, a.out + "/field_gt");
    json meta;
    meta["dims"] = {cfg.dims.h, cfg.dims.w, cfg.dims.l};
    meta["seed"] = cfg.seed;
    meta["max_disp"] = a.max_disp;
    meta["max_gt_disp"] = pair.max_gt_disp;
    meta["initial_dice"] = pair.initial_dice;
    write_text(a.out + "/meta.json", meta.dump(2) + "\n");
    std::cout << "wrote synthetic pair to " << a.out << " (initial mean DSC "
              << pair.initial_dice << ", max |gt| " << pair.max_gt_disp << " vox)\n";
    return 0;
}

struct RegisterArgs {
    std::string fixed, moving, ckpt, out;
    std::string labels_fixed, labels_moving;
    bool diff = false;
};

int cmd_register(const RegisterArgs &a) {
    Volume fixed = load_volume_any(a.fixed);
    Volume moving = load_volume_any(a.moving);
    ModelParams<float> params = load_checkpoint(a.ckpt);
    if (a.diff) params.cfg.diffeomorphic = true;
    RegistrationResult res = forward(fixed, moving, params);
    fs::create_directories(a.out);
    save_raw(res.phi, a.out + "/phi");
    save_raw(res.warped, a.out + "/warped");
    json j;
    j["folding_pct"] = 100.0 * res.folding;
    j["ncc"] = ncc_loss(fixed, res.warped, 9);
    if (!a.labels_fixed.empty() && !a.labels_moving.empty()) {
        LabelVolume la = load_raw_labels(a.labels_fixed);
        LabelVolume lb = load_raw_labels(a.labels_moving);
        const MetricReport rep = evaluate_labels(la, lb, &res.phi);
        j.update(report_to_json(rep));
    }
    write_text(a.out + "/metrics.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct PoArgs {
    std::string fixed, moving, ckpt, out, trace, config;
    std::string labels_fixed, labels_moving;
    std::string preset = "small";
    std::string optimizer = "adam";
    bool diff = false;
    int iters = 50;
    double lr = 1e-4;
    double lambda = 0.5;
    int window = 9;
    int ss_steps = 7;
    std::uint64_t seed = 42;
};

// Settings not given on the command line may come from a JSON config file;
// explicit flags always win, preset defaults fill the rest.
void apply_config(const std::string &path, const CLI::App *sub,
                  const std::vector<std::pair<const char *, std::function<void(const nlohmann::json &)>>> &slots) {
    const std::ifstream probe(path);
    if (!probe.good()) throw parse_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        std::ifstream f(path);
        f >> j;
    } catch (const nlohmann::json::exception &e) {
        throw parse_error("invalid config JSON " + path + ": " + e.what());
    }
    for (const auto &[flag, apply] : slots)
        if (sub->count(flag) == 0) apply(j);
}

int cmd_po(PoArgs a, const CLI::App *sub) {
    if (!a.config.empty()) {
        apply_config(a.config, sub,
                     {{"--preset", [&](const json &j) { if (j.contains("preset")) a.preset = j["preset"].get<std::string>(); }},
                      {"--diff", [&](const json &j) { if (j.contains("diffeomorphic")) a.diff = j["diffeomorphic"].get<bool>(); }},
                      {"--iters", [&](const json &j) { if (j.contains("iters")) a.iters = j["iters"].get<int>(); }},
                      {"--lr", [&](const json &j) { if (j.contains("lr")) a.lr = j["lr"].get<double>(); }},
                      {"--lambda", [&](const json &j) { if (j.contains("lambda")) a.lambda = j["lambda"].get<double>(); }},
                      {"--window", [&](const json &j) { if (j.contains("window")) a.window = j["window"].get<int>(); }},
                      {"--optimizer", [&](const json &j) { if (j.contains("optimizer")) a.optimizer = j["optimizer"].get<std::string>(); }},
                      {"--ss-steps", [&](const json &j) { if (j.contains("ss_steps")) a.ss_steps = j["ss_steps"].get<int>(); }},
                      {"--seed", [&](const json &j) { if (j.contains("seed")) a.seed = j["seed"].get<std::uint64_t>(); }}});
    }
    Volume fixed = load_volume_any(a.fixed);
    Volume moving = load_volume_any(a.moving);
    ModelParams<float> params = a.ckpt.empty()
                                    ? init_model<float>(preset_config(a.preset, a.diff, a.ss_steps), a.seed)
                                    : load_checkpoint(a.ckpt);
    if (!a.ckpt.empty() && a.diff) params.cfg.diffeomorphic = true;

    OptimConfig opt;
    opt.lr_init = a.lr;
    opt.po_iters = a.iters;
    opt.lambda = a.lambda;
    opt.ncc_window = a.window;
    if (a.optimizer == "adam")
        opt.optimizer = OptimizerKind::adam;
    else if (a.optimizer == "sgd")
        opt.optimizer = OptimizerKind::sgd;
    else
        throw invalid_input("unknown optimizer '" + a.optimizer + "' (expected adam or sgd)");

    std::optional<LabelVolume> la, lb;
    if (!a.labels_fixed.empty() && !a.labels_moving.empty()) {
        la = load_raw_labels(a.labels_fixed);
        lb = load_raw_labels(a.labels_moving);
    }
    const PoResult res = pairwise_optimize(fixed, moving, params, opt,
                                           la ? &*la : nullptr, lb ? &*lb : nullptr);
    if (!a.trace.empty()) write_text(a.trace, trace_to_csv(res.loss_trace, res.dice_trace));
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        save_raw(res.reg.phi, a.out + "/phi");
        save_raw(res.reg.warped, a.out + "/warped");
        save_checkpoint(a.out + "/model.ckpt", params);
        json j;
        j["folding_pct"] = 100.0 * res.reg.folding;
        j["final_loss"] = res.reg.final_loss;
        if (la) {
            const MetricReport rep = evaluate_labels(*la, *lb, &res.reg.phi);
            j.update(report_to_json(rep));
        }
        write_text(a.out + "/metrics.json", j.dump(2) + "\n");
    }
    std::cout << "po: initial loss " << fmt_double(res.loss_trace.front()) << ", final loss "
              << fmt_double(res.loss_trace.back()) << " after " << a.iters << " iterations\n";
    return 0;
}

struct TrainArgs {
    std::string data, out = "model.ckpt", trace, config;
    std::string preset = "small";
    bool diff = false;
    int epochs = 30;
    double lr = 1e-4;
    double lambda = 1.0;
    int window = 9;
    int ss_steps = 7;
    std::uint64_t seed = 42;
};

int cmd_train(TrainArgs a, const CLI::App *sub) {
    if (!a.config.empty()) {
        apply_config(a.config, sub,
                     {{"--preset", [&](const json &j) { if (j.contains("preset")) a.preset = j["preset"].get<std::string>(); }},
                      {"--diff", [&](const json &j) { if (j.contains("diffeomorphic")) a.diff = j["diffeomorphic"].get<bool>(); }},
                      {"--epochs", [&](const json &j) { if (j.contains("epochs")) a.epochs = j["epochs"].get<int>(); }},
                      {"--lr", [&](const json &j) { if (j.contains("lr")) a.lr = j["lr"].get<double>(); }},
                      {"--lambda", [&](const json &j) { if (j.contains("lambda")) a.lambda = j["lambda"].get<double>(); }},
                      {"--window", [&](const json &j) { if (j.contains("window")) a.window = j["window"].get<int>(); }},
                      {"--ss-steps", [&](const json &j) { if (j.contains("ss_steps")) a.ss_steps = j["ss_steps"].get<int>(); }},
                      {"--seed", [&](const json &j) { if (j.contains("seed")) a.seed = j["seed"].get<std::uint64_t>(); }}});
    }
    std::vector<std::pair<Volume, Volume>> pairs;
    std::vector<fs::path> dirs;
    if (!fs::is_directory(a.data)) throw parse_error("train: data directory not found: " + a.data);
    for (const auto &entry : fs::directory_iterator(a.data))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto &dir : dirs) {
        const auto fixed = dir / "fixed.json";
        const auto moving = dir / "moving.json";
        if (fs::exists(fixed) && fs::exists(moving))
            pairs.emplace_back(load_raw_volume(fixed.string()), load_raw_volume(moving.string()));
    }
    if (pairs.empty())
        throw parse_error("train: no pairs found under " + a.data +
                          " (expected <dir>/fixed.json + moving.json)");

    ModelParams<float> params = init_model<float>(preset_config(a.preset, a.diff, a.ss_steps), a.seed);
    OptimConfig opt;
    opt.lr_init = a.lr;
    opt.epochs = a.epochs;
    opt.lambda = a.lambda;
    opt.ncc_window = a.window;
    const TrainHistory hist = train(pairs, params, opt);
    save_checkpoint(a.out, params);
    std::string csv = "epoch,lr,loss\n";
    for (std::size_t i = 0; i < hist.epoch_loss.size(); ++i)
        csv += std::to_string(i + 1) + "," + fmt_double(hist.epoch_lr[i]) + "," +
               fmt_double(hist.epoch_loss[i]) + "\n";
    if (!a.trace.empty()) write_text(a.trace, csv);
    std::cout << "trained on " << pairs.size() << " pairs for " << a.epochs
              << " epochs; final mean loss " << fmt_double(hist.epoch_loss.back())
              << "; checkpoint: " << a.out << "\n";
    return 0;
}

struct MetricsArgs {
    std::string a, b, field, out;
};

int cmd_metrics(const MetricsArgs &m) {
    LabelVolume la = load_raw_labels(m.a);
    LabelVolume lb = load_raw_labels(m.b);
    std::optional<DisplacementField> phi;
    if (!m.field.empty()) phi = load_raw_field(m.field);
    const MetricReport rep = evaluate_labels(la, lb, phi ? &*phi : nullptr);
    const json j = report_to_json(rep);
    if (!m.out.empty()) write_text(m.out, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(int pipeline_entries) {
    const auto results = run_gradcheck_suite(pipeline_entries);
    std::cout << format_gradcheck_table(results);
    return all_passed(results) ? 0 : 3;
}

struct BenchArgs {
    int dims = 32;
    int heads = 8;
    int head_dim = 6;
    int reps = 3;
};

int cmd_bench(const BenchArgs &a) {
    const BenchReport rep =
        run_attention_bench({a.dims, a.dims, a.dims}, a.heads, a.head_dim, a.reps);
    std::cout << format_bench_table(rep);
    return rep.memory_ok && rep.time_ok ? 0 : 3;
}

} // namespace

int run_cli(const std::vector<std::string> &args) {
    CLI::App app{"pyramid deformable registration with neighborhood-attention motion decomposition"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto *synth = app.add_subcommand("synth", "generate a synthetic registration pair");
    synth->add_option("--out", sa.out, "output directory")->required();
    synth->add_option("--dims", sa.dims, "cubic volume extent")->check(CLI::Range(8, 256));
    synth->add_option("--seed", sa.seed, "random seed");
    synth->add_option("--max-disp", sa.max_disp, "max ground-truth displacement (voxels)");
    synth->add_option("--smooth-sigma", sa.smooth_sigma, "velocity smoothness sigma");
    synth->add_option("--translation-frac", sa.translation_frac,
                      "share of displacement carried by a global shift");
    synth->add_option("--spheres", sa.spheres, "number of labeled spheres");

    RegisterArgs ra;
    auto *reg = app.add_subcommand("register", "register a pair with a trained model");
    reg->add_option("--fixed", ra.fixed, "fixed volume (.json)")->required();
    reg->add_option("--moving", ra.moving, "moving volume (.json)")->required();
    reg->add_option("--ckpt", ra.ckpt, "model checkpoint")->required();
    reg->add_option("--out", ra.out, "output directory")->required();
    reg->add_option("--labels-fixed", ra.labels_fixed, "fixed labels (.json)");
    reg->add_option("--labels-moving", ra.labels_moving, "moving labels (.json)");
    reg->add_flag("--diff", ra.diff, "enable the diffeomorphic integration layer");

    PoArgs pa;
    auto *po = app.add_subcommand("po", "pairwise optimization on a single pair");
    po->add_option("--fixed", pa.fixed, "fixed volume (.json)")->required();
    po->add_option("--moving", pa.moving, "moving volume (.json)")->required();
    po->add_option("--ckpt", pa.ckpt, "starting checkpoint (fresh model when omitted)");
    po->add_option("--preset", pa.preset, "fresh model preset: small|large");
    po->add_option("--iters", pa.iters, "optimization iterations")->check(CLI::PositiveNumber);
    po->add_option("--lr", pa.lr, "constant learning rate");
    po->add_option("--lambda", pa.lambda, "regularization weight");
    po->add_option("--window", pa.window, "ncc window size");
    po->add_option("--optimizer", pa.optimizer, "adam|sgd");
    po->add_option("--trace", pa.trace, "write per-iteration loss CSV here");
    po->add_option("--out", pa.out, "output directory for field/warped/checkpoint");
    po->add_option("--labels-fixed", pa.labels_fixed, "fixed labels (adds dice to trace)");
    po->add_option("--labels-moving", pa.labels_moving, "moving labels (adds dice to trace)");
    po->add_option("--seed", pa.seed, "fresh model init seed");
    po->add_option("--ss-steps", pa.ss_steps, "scaling-and-squaring steps");
    po->add_option("--config", pa.config, "JSON config file (flags take precedence)");
    po->add_flag("--diff", pa.diff, "enable the diffeomorphic integration layer");

    TrainArgs ta;
    auto *tr = app.add_subcommand("train", "train on a directory of pairs");
    tr->add_option("--data", ta.data, "directory of pair subdirectories")->required();
    tr->add_option("--preset", ta.preset, "model preset: small|large");
    tr->add_option("--epochs", ta.epochs, "training epochs")->check(CLI::PositiveNumber);
    tr->add_option("--lr", ta.lr, "initial learning rate (polynomial decay)");
    tr->add_option("--lambda", ta.lambda, "regularization weight");
    tr->add_option("--window", ta.window, "ncc window size");
    tr->add_option("--out", ta.out, "checkpoint output path");
    tr->add_option("--trace", ta.trace, "write per-epoch loss CSV here");
    tr->add_option("--seed", ta.seed, "model init seed");
    tr->add_option("--ss-steps", ta.ss_steps, "scaling-and-squaring steps");
    tr->add_option("--config", ta.config, "JSON config file (flags take precedence)");
    tr->add_flag("--diff", ta.diff, "train the diffeomorphic variant");

    MetricsArgs ma;
    auto *me = app.add_subcommand("metrics", "label overlap and surface metrics");
    me->add_option("--a", ma.a, "reference labels (.json)")->required();
    me->add_option("--b", ma.b, "labels to compare, warped by --field if given")->required();
    me->add_option("--field", ma.field, "displacement field (.json)");
    me->add_option("--out", ma.out, "also write the JSON report here");

    int pipeline_entries = 2;
    auto *gc = app.add_subcommand("gradcheck", "finite-difference gradient suite (f64)");
    gc->add_option("--pipeline-entries", pipeline_entries,
                   "sampled entries per tensor in the full-pipeline check");

    BenchArgs ba;
    auto *be = app.add_subcommand("bench", "fused vs naive attention benchmark");
    be->add_option("--dims", ba.dims, "cubic volume extent");
    be->add_option("--heads", ba.heads, "attention heads");
    be->add_option("--head-dim", ba.head_dim, "channels per head");
    be->add_option("--reps", ba.reps, "repetitions (best time wins)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (synth->parsed()) return cmd_synth(sa);
        if (reg->parsed()) return cmd_register(ra);
        if (po->parsed()) return cmd_po(pa, po);
        if (tr->parsed()) return cmd_train(ta, tr);
        if (me->parsed()) return cmd_metrics(ma);
        if (gc->parsed()) return cmd_gradcheck(pipeline_entries);
        if (be->parsed()) return cmd_bench(ba);
        return 1;
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const parse_error &e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const invalid_input &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

} // namespace mdreg
