// Copyright 2026 the sfir authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include "sfir/gradcheck.hpp"

using namespace sfir;
using ad::TensorT;
using ad::VarT;
using DVar = VarT<double>;
using DTensor = TensorT<double>;

namespace {

DVar input(DTensor t) { return DVar::leaf(std::move(t), true); }

// Random projection makes every output element influence the scalar root.
DVar project(const DVar& x, uint64_t seed) {
    Rng rng(seed);
    DTensor r(x.value().shape);
    for (auto& v : r.data) v = rng.uniform(-1.0, 1.0);
    return ad::sum(ad::mul(x, DVar::constant(std::move(r))));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("softmax of uniform logits is 1/n and rows sum to one") {
    auto x = DVar::constant(DTensor::full({3, 5}, 0.7));
    const auto y = ad::softmax_lastdim(x).value();
    for (double v : y.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    Rng rng(5);
    auto z = ad::softmax_lastdim(DVar::constant(gradcheck::random_tensor({4, 7}, rng))).value();
    for (int r = 0; r < 4; ++r) {
        double s = 0;
        for (int c = 0; c < 7; ++c) s += z.data[r * 7 + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("conv2d with a center-one kernel is the identity") {
    Rng rng(6);
    auto x = DVar::constant(gradcheck::random_tensor({6, 5, 3}, rng));
    DTensor k({3, 3, 3, 3});
    for (int c = 0; c < 3; ++c)
        k.data[((1 * 3 + 1) * 3 + c) * 3 + c] = 1.0;  // center tap, channel-diagonal
    auto y = ad::conv2d(x, DVar::constant(std::move(k)), DVar::constant(DTensor::zeros({3})));
    for (size_t i = 0; i < y.value().numel(); ++i)
        CHECK(y.value().data[i] == doctest::Approx(x.value().data[i]).epsilon(1e-12));
}

TEST_CASE("matmul values match a hand-rolled triple loop") {
    Rng rng(7);
    auto a = gradcheck::random_tensor({3, 4}, rng);
    auto b = gradcheck::random_tensor({4, 2}, rng);
    const auto y = ad::matmul(DVar::constant(a), DVar::constant(b)).value();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += a.data[i * 4 + k] * b.data[k * 2 + j];
            CHECK(y.data[i * 2 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("shape mismatches report both shapes") {
    Rng rng(8);
    auto a = input(gradcheck::random_tensor({3, 4}, rng));
    auto b = input(gradcheck::random_tensor({3, 5}, rng));
    try {
        ad::matmul(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("{3,4}") != std::string::npos);
        CHECK(msg.find("{3,5}") != std::string::npos);
    }
    CHECK_THROWS_AS(ad::add(a, b), Error);
}

TEST_CASE("gradients: elementwise and reduction ops") {
    Rng rng(10);
    struct Case {
        const char* name;
        std::function<DVar(std::vector<DVar>&)> build;
        std::vector<DTensor> inputs;
    };
    auto t = [&](std::vector<int> shape) { return gradcheck::random_tensor(shape, rng); };
    auto tpos = [&](std::vector<int> shape) {
        return gradcheck::random_tensor(shape, rng, 0.5, 2.0);
    };
    std::vector<Case> cases;
    cases.push_back({"add", [](auto& in) { return project(ad::add(in[0], in[1]), 1); },
                     {t({3, 4}), t({3, 4})}});
    cases.push_back({"sub", [](auto& in) { return project(ad::sub(in[0], in[1]), 2); },
                     {t({3, 4}), t({3, 4})}});
    cases.push_back({"mul", [](auto& in) { return project(ad::mul(in[0], in[1]), 3); },
                     {t({3, 4}), t({3, 4})}});
    cases.push_back({"affine", [](auto& in) { return project(ad::affine(in[0], 2.5, -0.75), 4); },
                     {t({2, 6})}});
    cases.push_back({"add_rowvec", [](auto& in) { return project(ad::add_rowvec(in[0], in[1]), 5); },
                     {t({4, 3}), t({3})}});
    cases.push_back({"exp", [](auto& in) { return project(ad::exp(in[0]), 6); }, {t({3, 3})}});
    cases.push_back({"log", [](auto& in) { return project(ad::log(in[0]), 7); }, {tpos({3, 3})}});
    // abs and clamp are checked away from their kinks.
    cases.push_back({"abs", [](auto& in) { return project(ad::abs(in[0]), 8); }, {tpos({3, 3})}});
    cases.push_back({"clamp",
                     [](auto& in) { return project(ad::clamp(in[0], 0.6, 1.9), 9); },
                     {tpos({3, 3})}});
    cases.push_back({"sigmoid", [](auto& in) { return project(ad::sigmoid(in[0]), 10); },
                     {t({3, 4})}});
    cases.push_back({"gelu", [](auto& in) { return project(ad::gelu(in[0]), 11); }, {t({3, 4})}});
    cases.push_back({"sum", [](auto& in) { return ad::sum(in[0]); }, {t({4, 5})}});
    cases.push_back({"mean", [](auto& in) { return ad::mean(in[0]); }, {t({4, 5})}});

    for (auto& c : cases) {
        CAPTURE(c.name);
        std::vector<DVar> inputs;
        for (auto& tensor : c.inputs) inputs.push_back(input(tensor));
        const auto report = gradcheck::check(inputs, [&] { return c.build(inputs); });
        CHECK_MESSAGE(report.max_rel_err <= 1e-4, c.name, " rel err ", report.max_rel_err);
    }
}

TEST_CASE("gradients: matrix, shape, and row-structured ops") {
    Rng rng(20);
    auto t = [&](std::vector<int> shape) { return gradcheck::random_tensor(shape, rng); };

    {  // matmul
        std::vector<DVar> in = {input(t({3, 4})), input(t({4, 5}))};
        auto r = gradcheck::check(in, [&] { return project(ad::matmul(in[0], in[1]), 21); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // bmm
        std::vector<DVar> in = {input(t({2, 3, 4})), input(t({2, 4, 3}))};
        auto r = gradcheck::check(in, [&] { return project(ad::bmm(in[0], in[1]), 22); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // reshape + permute chain
        std::vector<DVar> in = {input(t({2, 3, 4}))};
        auto r = gradcheck::check(in, [&] {
            return project(ad::permute(ad::reshape(in[0], {4, 3, 2}), {2, 0, 1}), 23);
        });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // gather_rows with a repeated index (backward must scatter-add)
        std::vector<DVar> in = {input(t({5, 3}))};
        const std::vector<int> idx = {4, 0, 2, 0};
        auto r = gradcheck::check(in, [&] { return project(ad::gather_rows(in[0], idx), 24); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // softmax over the last and over an inner axis
        std::vector<DVar> in = {input(t({3, 4, 5}))};
        auto r1 = gradcheck::check(in, [&] { return project(ad::softmax(in[0], -1), 25); });
        CHECK(r1.max_rel_err <= 1e-4);
        auto r2 = gradcheck::check(in, [&] { return project(ad::softmax(in[0], 1), 26); });
        CHECK(r2.max_rel_err <= 1e-4);
    }
    {  // layer_norm over input, gain, and bias
        std::vector<DVar> in = {input(t({4, 6})), input(t({6})), input(t({6}))};
        auto r = gradcheck::check(
            in, [&] { return project(ad::layer_norm(in[0], in[1], in[2]), 27); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // l2_normalize
        std::vector<DVar> in = {input(gradcheck::random_tensor({4, 5}, rng, 0.2, 1.0))};
        auto r = gradcheck::check(in, [&] { return project(ad::l2_normalize(in[0]), 28); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // masked_lse with a ragged mask
        std::vector<DVar> in = {input(t({4, 6}))};
        DTensor mask({4, 6});
        Rng mrng(29);
        for (int i = 0; i < 4; ++i) {
            int on = 0;
            for (int j = 0; j < 6; ++j) {
                mask.data[i * 6 + j] = mrng.uniform() < 0.5 ? 1.0 : 0.0;
                on += mask.data[i * 6 + j] > 0;
            }
            if (!on) mask.data[i * 6] = 1.0;
        }
        auto r = gradcheck::check(in, [&] { return project(ad::masked_lse(in[0], mask), 30); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // conv2d over input, kernel, and bias
        std::vector<DVar> in = {input(t({5, 4, 2})), input(t({3, 3, 2, 3})), input(t({3}))};
        auto r = gradcheck::check(
            in, [&] { return project(ad::conv2d(in[0], in[1], in[2]), 31); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // convex_upsample through softmax (keeps the 9-groups convex under FD)
        std::vector<DVar> in = {input(t({2, 2, 3})), input(t({2, 2, 4 * 9}))};
        auto r = gradcheck::check(in, [&] {
            auto w = ad::reshape(ad::softmax_lastdim(ad::reshape(in[1], {2 * 2 * 4, 9})),
                                 {2, 2, 4 * 9});
            return project(ad::convex_upsample(in[0], w, 2), 32);
        });
        CHECK(r.max_rel_err <= 1e-4);
    }
}

TEST_CASE("backward flags non-finite gradients as hard errors") {
    auto x = input(DTensor::full({2, 2}, 1e308));
    auto y = ad::sum(ad::mul(x, x));  // overflows to inf
    CHECK_THROWS_AS(ad::backward(y), Error);
}

TEST_CASE("log rejects non-positive inputs") {
    CHECK_THROWS_AS(ad::log(DVar::constant(DTensor::full({2}, -1.0))), Error);
}

TEST_CASE("l2_normalize rejects zero rows") {
    CHECK_THROWS_AS(ad::l2_normalize(DVar::constant(DTensor::zeros({2, 3}))), Error);
}

TEST_CASE("convex_upsample rejects weight groups that do not sum to one") {
    auto coarse = DVar::constant(DTensor::full({2, 2, 1}, 1.0));
    auto weights = DVar::constant(DTensor::full({2, 2, 9}, 0.2));  // sums to 1.8
    CHECK_THROWS_AS(ad::convex_upsample(coarse, weights, 1), Error);
}

TEST_CASE("no-grad guard suppresses tape recording") {
    Rng rng(40);
    auto x = input(gradcheck::random_tensor({3, 3}, rng));
    ad::NoGradGuard guard;
    auto y = ad::sum(ad::gelu(x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->inputs.empty());
}

TEST_CASE("gather_rows rejects out-of-range indices") {
    Rng rng(41);
    auto x = input(gradcheck::random_tensor({3, 2}, rng));
    CHECK_THROWS_AS(ad::gather_rows(x, {0, 3}), Error);
}

}  // TEST_SUITE
