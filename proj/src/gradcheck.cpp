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

#include "mdreg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mdreg/rng.hpp"

namespace mdreg {

namespace {

double forward_only(const std::vector<Tensor<double>> &inputs, const LossBuilder &build) {
    Tape<double> t;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto &in : inputs) vars.push_back(t.input(in));
    return t.scalar(build(t, vars));
}

} // namespace

GradCheckResult grad_check_op(const std::string &name, std::vector<Tensor<double>> inputs,
                              const LossBuilder &build, double tol, int entries_per_input,
                              double step, std::uint64_t sample_seed) {
    GradCheckResult res;
    res.name = name;
    res.tolerance = tol;

    // analytic gradients
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> t;
        std::vector<Var> vars;
        for (const auto &in : inputs) vars.push_back(t.input(in));
        Var loss = build(t, vars);
        t.backward(loss);
        for (Var v : vars) analytic.push_back(t.grad(v));
    }

    Rng rng(sample_seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::int64_t n = inputs[i].size();
        std::vector<std::int64_t> entries;
        if (entries_per_input <= 0 || entries_per_input >= n) {
            entries.resize(static_cast<std::size_t>(n));
            for (std::int64_t j = 0; j < n; ++j) entries[static_cast<std::size_t>(j)] = j;
        } else {
            std::set<std::int64_t> chosen;
            while (static_cast<int>(chosen.size()) < entries_per_input)
                chosen.insert(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
            entries.assign(chosen.begin(), chosen.end());
        }
        for (std::int64_t j : entries) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + step;
            const double up = forward_only(inputs, build);
            inputs[i][j] = saved - step;
            const double dn = forward_only(inputs, build);
            inputs[i][j] = saved;
            const double numeric = (up - dn) / (2.0 * step);
            const double a = analytic[i][j];
            const double denom = std::max({1e-3, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    res.worst_rel_err = worst;
    res.pass = worst <= tol;
    return res;
}

bool all_passed(const std::vector<GradCheckResult> &results) {
    return std::all_of(results.begin(), results.end(),
                       [](const GradCheckResult &r) { return r.pass; });
}

std::string format_gradcheck_table(const std::vector<GradCheckResult> &results) {
    std::ostringstream os;
    os << "check                                    worst_rel_err   tol       status\n";
    os << "----------------------------------------------------------------------\n";
    for (const auto &r : results) {
        os << r.name;
        for (std::size_t i = r.name.size(); i < 41; ++i) os << ' ';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-15.3e %-9.0e %s", r.worst_rel_err, r.tolerance,
                      r.pass ? "pass" : "FAIL");
        os << buf << "\n";
    }
    return os.str();
}

} // namespace mdreg
