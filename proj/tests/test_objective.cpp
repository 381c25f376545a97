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

#include "mdreg/field_ops.hpp"
#include "mdreg/objective.hpp"
#include "test_util.hpp"

using namespace mdreg;

namespace {

// Independent windowed-loop NCC: per voxel, gather the in-bounds window of
// both images, compute local statistics and the squared correlation ratio.
double oracle_ncc(const Volume &f, const Volume &g, int window) {
    const Dims3 d = f.dims;
    const int r = window / 2;
    double total = 0.0;
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x) {
                std::vector<double> fv, gv;
                for (int dz = -r; dz <= r; ++dz)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            if (!in_bounds(d, x + dx, y + dy, z + dz)) continue;
                            fv.push_back(f.at(x + dx, y + dy, z + dz));
                            gv.push_back(g.at(x + dx, y + dy, z + dz));
                        }
                const double cnt = static_cast<double>(fv.size());
                double fm = 0.0, gm = 0.0;
                for (std::size_t i = 0; i < fv.size(); ++i) {
                    fm += fv[i];
                    gm += gv[i];
                }
                fm /= cnt;
                gm /= cnt;
                double cross = 0.0, varf = 0.0, varg = 0.0;
                for (std::size_t i = 0; i < fv.size(); ++i) {
                    cross += (fv[i] - fm) * (gv[i] - gm);
                    varf += (fv[i] - fm) * (fv[i] - fm);
                    varg += (gv[i] - gm) * (gv[i] - gm);
                }
                total += cross * cross / (varf * varg + 1e-5);
            }
    return -total / static_cast<double>(voxel_count(d));
}

// Independent grad_reg loop following the same normalization convention.
double oracle_grad_reg(const DisplacementField &f) {
    const Dims3 d = f.dims;
    const std::int64_t n = voxel_count(d);
    const int dims[3] = {d.h, d.w, d.l};
    double total = 0.0;
    for (int comp = 0; comp < 3; ++comp)
        for (int axis = 0; axis < 3; ++axis) {
            double s = 0.0;
            std::int64_t cnt = 0;
            for (int z = 0; z < d.l; ++z)
                for (int y = 0; y < d.w; ++y)
                    for (int x = 0; x < d.h; ++x) {
                        const int pos[3] = {x, y, z};
                        if (pos[axis] >= dims[axis] - 1) continue;
                        int xn[3] = {x, y, z};
                        xn[axis] += 1;
                        const double diff = static_cast<double>(f.at(comp, xn[0], xn[1], xn[2])) -
                                            static_cast<double>(f.at(comp, x, y, z));
                        s += diff * diff;
                        ++cnt;
                    }
            total += s / static_cast<double>(cnt);
        }
    (void)n;
    return total / 3.0;
}

} // namespace

TEST_CASE("ncc of an image with itself is -1 up to the epsilon guard") {
    const Volume f = test::random_volume({8, 8, 8}, 3);
    CHECK(ncc_loss(f, f, 3) == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(ncc_loss(f, f, 9) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("ncc is invariant to positive affine rescaling") {
    const Volume f = test::random_volume({7, 8, 7}, 5);
    Volume g = f;
    for (auto &v : g.data) v = 2.5f * v + 0.8f;
    CHECK(ncc_loss(f, g, 3) == doctest::Approx(-1.0).epsilon(1e-3));
    Volume h = f;
    for (auto &v : h.data) v = 0.3f * v - 4.0f;
    CHECK(ncc_loss(h, f, 5) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("ncc matches the windowed-loop reference") {
    const Volume f = test::random_volume({5, 5, 5}, 7);
    const Volume g = test::random_volume({5, 5, 5}, 11);
    CHECK(ncc_loss(f, g, 3) == doctest::Approx(oracle_ncc(f, g, 3)).epsilon(1e-6));
    const Volume f2 = test::random_volume({6, 5, 7}, 13);
    const Volume g2 = test::random_volume({6, 5, 7}, 17);
    CHECK(ncc_loss(f2, g2, 5) == doctest::Approx(oracle_ncc(f2, g2, 5)).epsilon(1e-6));
}

TEST_CASE("ncc stays within [-1, 0] up to epsilon slack") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const Volume f = test::random_volume({6, 6, 6}, rng.next_u64());
        const Volume g = test::random_volume({6, 6, 6}, rng.next_u64());
        const double v = ncc_loss(f, g, 3);
        CHECK(v <= 1e-3);
        CHECK(v >= -1.0 - 1e-3);
    }
}

TEST_CASE("ncc rejects mismatched dims and even windows") {
    const Volume f = test::random_volume({6, 6, 6}, 23);
    const Volume g = test::random_volume({5, 6, 6}, 29);
    CHECK_THROWS_AS((void)ncc_loss(f, g, 3), invalid_input);
    const Volume h = test::random_volume({6, 6, 6}, 31);
    CHECK_THROWS_AS((void)ncc_loss(f, h, 4), invalid_input);
}

TEST_CASE("grad_reg of a constant field is zero") {
    const Dims3 d{6, 5, 6};
    DisplacementField f(d);
    for (auto &v : f.data) v = 1.7f;
    CHECK(grad_reg(f) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("grad_reg closed form: u_x = x gives exactly one third") {
    const Dims3 d{6, 6, 6};
    DisplacementField f(d);
    for (int z = 0; z < d.l; ++z)
        for (int y = 0; y < d.w; ++y)
            for (int x = 0; x < d.h; ++x) f.at(0, x, y, z) = static_cast<float>(x);
    CHECK(grad_reg(f) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("grad_reg matches the direct finite-difference loop") {
    const DisplacementField f = test::random_field({5, 6, 5}, 37, 1.0f);
    CHECK(grad_reg(f) == doctest::Approx(oracle_grad_reg(f)).epsilon(1e-9));
}

TEST_CASE("grad_reg is non-negative and zero only for constants") {
    Rng rng(41);
    for (int trial = 0; trial < 8; ++trial) {
        const DisplacementField f = test::random_field({5, 5, 5}, rng.next_u64(), 0.8f);
        CHECK(grad_reg(f) > 0.0);
    }
}

TEST_CASE("total_loss at the identity on identical images is -1") {
    const Volume f = test::random_volume({8, 8, 8}, 43);
    const DisplacementField zero(f.dims);
    LossConfig cfg;
    cfg.lambda = 1.0;
    cfg.ncc_window = 3;
    CHECK(total_loss(f, f, zero, cfg) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("total_loss with lambda zero equals the similarity term alone") {
    const Volume f = test::random_volume({7, 7, 7}, 47);
    const Volume m = test::random_volume({7, 7, 7}, 53);
    const DisplacementField phi = test::random_field(f.dims, 59, 0.5f);
    LossConfig with;
    with.lambda = 0.0;
    with.ncc_window = 3;
    const Volume warped = warp(m, phi);
    // the engine warps in f64 while the plain warp here runs in f32, so the
    // comparison tolerance covers single-precision rounding of the warp
    CHECK(total_loss(f, m, phi, with) == doctest::Approx(ncc_loss(f, warped, 3)).epsilon(1e-6));
}

TEST_CASE("total_loss adds the weighted regularizer") {
    const Volume f = test::random_volume({7, 7, 7}, 61);
    const Volume m = test::random_volume({7, 7, 7}, 67);
    const DisplacementField phi = test::random_field(f.dims, 71, 0.5f);
    LossConfig a;
    a.lambda = 0.0;
    a.ncc_window = 3;
    LossConfig b;
    b.lambda = 0.5;
    b.ncc_window = 3;
    CHECK(total_loss(f, m, phi, b) ==
          doctest::Approx(total_loss(f, m, phi, a) + 0.5 * grad_reg(phi)).epsilon(1e-9));
}

TEST_CASE("loss config validation") {
    LossConfig bad;
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    LossConfig even;
    even.ncc_window = 6;
    CHECK_THROWS_AS(even.validate(), invalid_input);
}
