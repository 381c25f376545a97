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

#include "mdreg/gradcheck.hpp"
#include "mdreg/ops.hpp"
#include "mdreg/rng.hpp"

using namespace mdreg;

TEST_CASE("backward of sum(params) gives unit gradients") {
    ParamTensor<double> p("p", Tensor<double>({3, 4}));
    Rng rng(1);
    for (auto &v : p.value.data) v = rng.uniform(-2.0, 2.0);
    Tape<double> t;
    Var leaf = t.leaf(p);
    t.backward(op_sum_all(t, leaf));
    for (std::int64_t i = 0; i < p.grad.size(); ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("backward of 0.5*||params||^2 gives the params back") {
    ParamTensor<double> p("p", Tensor<double>({5, 2}));
    Rng rng(2);
    for (auto &v : p.value.data) v = rng.uniform(-2.0, 2.0);
    Tape<double> t;
    Var leaf = t.leaf(p);
    t.backward(op_scale(t, op_sum_all(t, op_mul(t, leaf, leaf)), 0.5));
    for (std::int64_t i = 0; i < p.grad.size(); ++i)
        CHECK(p.grad[i] == doctest::Approx(p.value[i]).epsilon(1e-12));
}

TEST_CASE("gradient linearity: seeding with 2 exactly doubles gradients") {
    ParamTensor<double> p("p", Tensor<double>({4, 4}));
    Rng rng(3);
    for (auto &v : p.value.data) v = rng.uniform(-1.0, 1.0);

    auto run = [&p](double seed) {
        p.zero_grad();
        Tape<double> t;
        Var leaf = t.leaf(p);
        Var sq = op_mul(t, leaf, leaf);
        Var loss = op_mean_all(t, op_mul(t, sq, leaf)); // cubic, nontrivial grads
        t.backward(loss, seed);
        return p.grad;
    };
    const Tensor<double> g1 = run(1.0);
    const Tensor<double> g2 = run(2.0);
    for (std::int64_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("zero-grad hygiene: repeated backward passes are bitwise identical") {
    ParamTensor<double> p("p", Tensor<double>({6}));
    Rng rng(4);
    for (auto &v : p.value.data) v = rng.uniform(-1.0, 1.0);
    Tensor<double> first;
    for (int pass = 0; pass < 2; ++pass) {
        p.zero_grad();
        Tape<double> t;
        Var leaf = t.leaf(p);
        Var loss = op_mean_all(t, op_mul(t, op_add_scalar(t, leaf, 0.7), leaf));
        t.backward(loss);
        if (pass == 0)
            first = p.grad;
        else
            for (std::int64_t i = 0; i < first.size(); ++i) CHECK(p.grad[i] == first[i]);
    }
}

TEST_CASE("gradients accumulate into params across leaves and uses") {
    ParamTensor<double> p("p", Tensor<double>({3}));
    p.value.data = {1.0, 2.0, 3.0};
    Tape<double> t;
    Var a = t.leaf(p);
    Var loss = op_sum_all(t, op_add(t, a, a)); // d/dp = 2
    t.backward(loss);
    for (std::int64_t i = 0; i < 3; ++i) CHECK(p.grad[i] == 2.0);
}

TEST_CASE("non-finite gradients raise a computation error naming the op") {
    Tape<double> t;
    Tensor<double> a({2});
    a.data = {1.0, 1.0};
    Tensor<double> b({2});
    b.data = {1.0, 0.0}; // division by zero -> inf in forward and backward
    Var va = t.input(std::move(a));
    Var vb = t.input(std::move(b));
    Var loss = op_sum_all(t, op_div(t, va, vb));
    CHECK_THROWS_AS(t.backward(loss), numeric_error);
}

TEST_CASE("backward requires a scalar loss node") {
    Tape<double> t;
    Var v = t.input(Tensor<double>({2, 2}));
    CHECK_THROWS_AS(t.backward(v), invalid_input);
}

TEST_CASE("grad_check_op flags a deliberately broken backward") {
    // an op whose backward doubles the true gradient
    auto broken_identity = [](Tape<double> &t, Var a) {
        Tensor<double> out = t.value(a);
        Var o = t.push(std::move(out), "broken_identity");
        t.set_backward(o, [o, a](Tape<double> &tt) {
            const Tensor<double> &g = tt.grad(o);
            Tensor<double> &ga = tt.grad(a);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i];
        });
        return o;
    };
    Tensor<double> in({4});
    in.data = {0.3, -0.7, 1.1, 0.4};
    const GradCheckResult res =
        grad_check_op("broken", {in},
                      [&](Tape<double> &t, const std::vector<Var> &v) {
                          return op_sum_all(t, broken_identity(t, v[0]));
                      });
    CHECK_FALSE(res.pass);
    CHECK(res.worst_rel_err > 0.1);
}

TEST_CASE("full gradient suite passes and covers every registered op") {
    const auto results = run_gradcheck_suite(1);
    // one check per op family plus the two pipeline composites
    CHECK(results.size() >= 18);
    for (const auto &r : results) {
        INFO(r.name, " worst_rel_err=", r.worst_rel_err);
        CHECK(r.pass);
    }
    CHECK(all_passed(results));
}
