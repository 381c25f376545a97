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

#include <string>

#include "mdreg/common.hpp"

namespace mdreg {

struct BenchRow {
    std::string impl;
    Dims3 dims;
    int heads = 0;
    double time_ms = 0.0;
    std::size_t peak_aux_bytes = 0;
};

struct BenchReport {
    BenchRow fused;
    BenchRow naive;
    bool memory_ok = false; // fused peak aux <= 20% of naive window allocation
    bool time_ok = false;   // fused wall time <= naive wall time
};

// Runs both attention implementations on random inputs and reports the best
// wall time over `reps` repetitions plus the peak auxiliary allocations.
BenchReport run_attention_bench(Dims3 dims, int heads, int head_dim, int reps = 3,
                                std::uint64_t seed = 5);

std::string format_bench_table(const BenchReport &rep);

} // namespace mdreg
