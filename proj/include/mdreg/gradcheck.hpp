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

#include <functional>
#include <string>
#include <vector>

#include "mdreg/tape.hpp"

namespace mdreg {

struct GradCheckResult {
    std::string name;
    double worst_rel_err = 0.0;
    double tolerance = 1e-4;
    bool pass = false;
};

// Builds a scalar loss from the given tape inputs.
using LossBuilder = std::function<Var(Tape<double> &, const std::vector<Var> &)>;

// Compares analytic gradients of `build` against central finite differences
// (step h) for every input entry, or a seeded sample of `entries_per_input`
// entries when positive. The error metric is |a - n| / max(1e-3, |a|, |n|).
GradCheckResult grad_check_op(const std::string &name, std::vector<Tensor<double>> inputs,
                              const LossBuilder &build, double tol = 1e-4,
                              int entries_per_input = 0, double step = 1e-5,
                              std::uint64_t sample_seed = 7);

// Full differentiation suite covering every registered operation, in f64.
// `pipeline_entries_per_tensor` controls the sampled full-pipeline check.
std::vector<GradCheckResult> run_gradcheck_suite(int pipeline_entries_per_tensor = 2);

bool all_passed(const std::vector<GradCheckResult> &results);

std::string format_gradcheck_table(const std::vector<GradCheckResult> &results);

} // namespace mdreg
