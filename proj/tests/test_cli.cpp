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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mdreg/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string tmp_root() {
    // wiped once per process so reruns never see stale files
    static const std::string root = [] {
        const fs::path p = fs::temp_directory_path() / "mdreg_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p.string();
    }();
    return root;
}

std::string slurp(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

json slurp_json(const std::string &path) { return json::parse(slurp(path)); }

} // namespace

TEST_CASE("synth is deterministic for a fixed seed") {
    const std::string a = tmp_root() + "/synth_a";
    const std::string b = tmp_root() + "/synth_b";
    CHECK(mdreg::run_cli({"synth", "--out", a, "--dims", "16", "--seed", "5"}) == 0);
    CHECK(mdreg::run_cli({"synth", "--out", b, "--dims", "16", "--seed", "5"}) == 0);
    for (const char *name : {"fixed.raw", "moving.raw", "field_gt.raw", "labels_fixed.raw"})
        CHECK(slurp(a + "/" + name) == slurp(b + "/" + name));
    const std::string c = tmp_root() + "/synth_c";
    CHECK(mdreg::run_cli({"synth", "--out", c, "--dims", "16", "--seed", "6"}) == 0);
    CHECK(slurp(a + "/fixed.raw") != slurp(c + "/fixed.raw"));
}

TEST_CASE("synth, po, register and metrics form a working end-to-end flow") {
    const std::string dir = tmp_root() + "/flow";
    REQUIRE(mdreg::run_cli({"synth", "--out", dir, "--dims", "16", "--seed", "9",
                            "--max-disp", "1.5"}) == 0);

    // unregistered overlap
    const std::string m0 = dir + "/metrics0.json";
    REQUIRE(mdreg::run_cli({"metrics", "--a", dir + "/labels_fixed.json", "--b",
                            dir + "/labels_moving.json", "--out", m0}) == 0);
    const double dsc0 = slurp_json(m0)["mean_dsc"].get<double>();

    // pairwise optimization from a fresh model; writes trace, field, checkpoint
    const std::string po_out = dir + "/po";
    REQUIRE(mdreg::run_cli({"po", "--fixed", dir + "/fixed.json", "--moving",
                            dir + "/moving.json", "--iters", "30", "--lr", "1e-4", "--lambda",
                            "0.5", "--trace", dir + "/trace.csv", "--out", po_out,
                            "--labels-fixed", dir + "/labels_fixed.json", "--labels-moving",
                            dir + "/labels_moving.json"}) == 0);

    const std::string trace = slurp(dir + "/trace.csv");
    CHECK(trace.rfind("iter,loss,dice\n", 0) == 0);
    const auto lines = std::count(trace.begin(), trace.end(), '\n');
    CHECK(lines == 32); // header + 31 rows (initial + 30 iterations)

    // registration with the optimized checkpoint improves on the initial DSC
    const std::string reg_out = dir + "/reg";
    REQUIRE(mdreg::run_cli({"register", "--fixed", dir + "/fixed.json", "--moving",
                            dir + "/moving.json", "--ckpt", po_out + "/model.ckpt", "--out",
                            reg_out}) == 0);
    const std::string m1 = dir + "/metrics1.json";
    REQUIRE(mdreg::run_cli({"metrics", "--a", dir + "/labels_fixed.json", "--b",
                            dir + "/labels_moving.json", "--field", reg_out + "/phi.json",
                            "--out", m1}) == 0);
    const double dsc1 = slurp_json(m1)["mean_dsc"].get<double>();
    CHECK(dsc1 > dsc0);

    // register also writes its own metrics report with folding
    const json reg_metrics = slurp_json(reg_out + "/metrics.json");
    CHECK(reg_metrics.contains("folding_pct"));
    CHECK(reg_metrics.contains("ncc"));
}

TEST_CASE("train runs on a directory of pairs and writes a checkpoint") {
    const std::string root = tmp_root() + "/train_data";
    fs::create_directories(root);
    REQUIRE(mdreg::run_cli({"synth", "--out", root + "/p1", "--dims", "16", "--seed", "21",
                            "--max-disp", "1.0"}) == 0);
    REQUIRE(mdreg::run_cli({"synth", "--out", root + "/p2", "--dims", "16", "--seed", "22",
                            "--max-disp", "1.0"}) == 0);
    // the pair directories hold fixed.json/moving.json as train expects
    const std::string ckpt = tmp_root() + "/trained.ckpt";
    const std::string trace = tmp_root() + "/train_trace.csv";
    REQUIRE(mdreg::run_cli({"train", "--data", root, "--preset", "small", "--epochs", "3",
                            "--lr", "1e-4", "--lambda", "0.5", "--window", "9", "--out", ckpt,
                            "--trace", trace}) == 0);
    CHECK(fs::exists(ckpt));
    const std::string csv = slurp(trace);
    CHECK(csv.rfind("epoch,lr,loss\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("cli maps error classes to exit codes") {
    // usage errors
    CHECK(mdreg::run_cli({"no-such-command"}) == 1);
    CHECK(mdreg::run_cli({"po", "--no-such-flag"}) == 1);
    CHECK(mdreg::run_cli({}) == 1);
    // data errors
    CHECK(mdreg::run_cli({"metrics", "--a", "/nonexistent/a.json", "--b",
                          "/nonexistent/b.json"}) == 2);
    CHECK(mdreg::run_cli({"po", "--fixed", "/nonexistent/f.json", "--moving",
                          "/nonexistent/m.json"}) == 2);
    // help is a success
    CHECK(mdreg::run_cli({"--help"}) == 0);
}

TEST_CASE("bench reports and enforces the fused-kernel contracts") {
    CHECK(mdreg::run_cli({"bench", "--dims", "10", "--heads", "2", "--reps", "1"}) == 0);
}

TEST_CASE("po defaults run the 50-iteration constant-rate protocol") {
    const std::string dir = tmp_root() + "/po_defaults";
    REQUIRE(mdreg::run_cli({"synth", "--out", dir, "--dims", "16", "--seed", "51",
                            "--max-disp", "1.0"}) == 0);
    REQUIRE(mdreg::run_cli({"po", "--fixed", dir + "/fixed.json", "--moving",
                            dir + "/moving.json", "--trace", dir + "/t.csv"}) == 0);
    const std::string trace = slurp(dir + "/t.csv");
    // initial loss plus one row per default iteration
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 52);
}

TEST_CASE("config file fills settings but explicit flags win") {
    const std::string dir = tmp_root() + "/cfg";
    REQUIRE(mdreg::run_cli({"synth", "--out", dir, "--dims", "16", "--seed", "31",
                            "--max-disp", "1.0"}) == 0);
    const std::string cfg = dir + "/po.json";
    {
        std::ofstream f(cfg);
        f << R"({"iters": 2, "lambda": 0.25, "window": 5, "seed": 9})";
    }
    // --iters on the command line beats the config's 2; lambda/window/seed come
    // from the config
    REQUIRE(mdreg::run_cli({"po", "--fixed", dir + "/fixed.json", "--moving",
                            dir + "/moving.json", "--config", cfg, "--iters", "3", "--trace",
                            dir + "/t.csv"}) == 0);
    const std::string trace = slurp(dir + "/t.csv");
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 5); // header + 4 rows
    // a second run straight from the config reads iters = 2
    REQUIRE(mdreg::run_cli({"po", "--fixed", dir + "/fixed.json", "--moving",
                            dir + "/moving.json", "--config", cfg, "--trace",
                            dir + "/t2.csv"}) == 0);
    const std::string trace2 = slurp(dir + "/t2.csv");
    CHECK(std::count(trace2.begin(), trace2.end(), '\n') == 4); // header + 3 rows
    // missing config file is a data error
    CHECK(mdreg::run_cli({"po", "--fixed", dir + "/fixed.json", "--moving",
                          dir + "/moving.json", "--config", dir + "/none.json"}) == 2);
}

TEST_CASE("po and register accept NIfTI volumes directly") {
    const std::string dir = tmp_root() + "/nii";
    std::filesystem::create_directories(dir);
    // build a small NIfTI pair: constant offset of a synthetic volume
    REQUIRE(mdreg::run_cli({"synth", "--out", dir, "--dims", "16", "--seed", "41",
                            "--max-disp", "1.0"}) == 0);
    // wrap the raw volumes into .nii files
    auto to_nifti = [&](const std::string &raw_base, const std::string &out_path) {
        const std::string raw = slurp(raw_base + ".raw");
        std::vector<char> hdr(352, 0);
        const std::int32_t sizeof_hdr = 348;
        std::memcpy(hdr.data(), &sizeof_hdr, 4);
        std::int16_t dim[8] = {3, 16, 16, 16, 1, 1, 1, 1};
        std::memcpy(hdr.data() + 40, dim, sizeof(dim));
        const std::int16_t datatype = 16, bitpix = 32;
        std::memcpy(hdr.data() + 70, &datatype, 2);
        std::memcpy(hdr.data() + 72, &bitpix, 2);
        float pixdim[8] = {1, 1, 1, 1, 0, 0, 0, 0};
        std::memcpy(hdr.data() + 76, pixdim, sizeof(pixdim));
        const float vox_offset = 352.0f;
        std::memcpy(hdr.data() + 108, &vox_offset, 4);
        std::memcpy(hdr.data() + 344, "n+1\0", 4);
        std::ofstream f(out_path, std::ios::binary);
        f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
        f.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    };
    to_nifti(dir + "/fixed", dir + "/fixed.nii");
    to_nifti(dir + "/moving", dir + "/moving.nii");
    REQUIRE(mdreg::run_cli({"po", "--fixed", dir + "/fixed.nii", "--moving",
                            dir + "/moving.nii", "--iters", "2", "--trace",
                            dir + "/nii_trace.csv"}) == 0);
    CHECK(std::filesystem::exists(dir + "/nii_trace.csv"));
}
