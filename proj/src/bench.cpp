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

#include "mdreg/bench.hpp"

#include <chrono>
#include <sstream>

#include "mdreg/attention.hpp"

namespace mdreg {

BenchReport run_attention_bench(Dims3 dims, int heads, int head_dim, int reps,
                                std::uint64_t seed) {
    AttentionConfig cfg{heads, head_dim, 3};
    cfg.validate();
    if (reps < 1) throw invalid_input("bench: reps must be >= 1");
    Rng rng(seed);
    const std::int64_t n = voxel_count(dims);
    const int sd = heads * head_dim;
    Tensor<float> q({static_cast<int>(n), sd}), k({static_cast<int>(n), sd});
    Tensor<float> b({heads, cfg.window()});
    for (auto &v : q.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto &v : k.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto &v : b.data) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    Tensor<float> out({heads, static_cast<int>(n), cfg.window()});

    auto time_impl = [&](auto &&fn, MemCounter &mc) {
        double best = 1e300;
        for (int i = 0; i < reps; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            fn(&mc);
            const auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        return best;
    };

    BenchReport rep;
    MemCounter mc_fused, mc_naive;
    rep.fused.impl = "fused";
    rep.fused.dims = dims;
    rep.fused.heads = heads;
    rep.fused.time_ms = time_impl(
        [&](MemCounter *mc) {
            kern::na_fused_fwd(q.data.data(), k.data.data(), b.data.data(), dims, heads,
                               head_dim, cfg.neighborhood, out.data.data(), mc);
        },
        mc_fused);
    rep.fused.peak_aux_bytes = mc_fused.peak;

    rep.naive.impl = "naive";
    rep.naive.dims = dims;
    rep.naive.heads = heads;
    rep.naive.time_ms = time_impl(
        [&](MemCounter *mc) {
            kern::na_naive_fwd(q.data.data(), k.data.data(), b.data.data(), dims, heads,
                               head_dim, cfg.neighborhood, out.data.data(), mc);
        },
        mc_naive);
    rep.naive.peak_aux_bytes = mc_naive.peak;

    rep.memory_ok = rep.fused.peak_aux_bytes * 5 <= rep.naive.peak_aux_bytes;
    rep.time_ok = rep.fused.time_ms <= rep.naive.time_ms;
    return rep;
}

std::string format_bench_table(const BenchReport &rep) {
    std::ostringstream os;
    os << "impl    dims         S     time_ms       peak_aux_bytes\n";
    os << "-------------------------------------------------------\n";
    for (const BenchRow *row : {&rep.fused, &rep.naive}) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-7s %-12s %-5d %-13.3f %zu\n", row->impl.c_str(),
                      dims_to_string(row->dims).c_str(), row->heads, row->time_ms,
                      row->peak_aux_bytes);
        os << buf;
    }
    os << "memory contract (fused <= 20% of naive window): " << (rep.memory_ok ? "pass" : "FAIL")
       << "\n";
    os << "time contract (fused <= naive):                 " << (rep.time_ok ? "pass" : "FAIL")
       << "\n";
    return os.str();
}

} // namespace mdreg
