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

#include <cmath>

#include "sfir/dataset.hpp"
#include "sfir/gradcheck.hpp"
#include "sfir/losses.hpp"

using namespace sfir;
using DVar = ad::VarT<double>;
using DTensor = ad::TensorT<double>;

namespace {

// Brute-force double-loop evaluation of the multi-positive InfoNCE, straight
// from its definition; kept independent of the graph implementation.
double contrastive_reference(const DTensor& p, const std::vector<int>& labels, double tau) {
    const int n = p.dim(0), d = p.dim(1);
    auto dot = [&](int i, int j) {
        double acc = 0;
        for (int k = 0; k < d; ++k) acc += p.data[i * d + k] * p.data[j * d + k];
        return acc;
    };
    double total = 0;
    for (int i = 0; i < n; ++i) {
        double num = 0, den = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp(dot(i, j) / tau);
            den += e;
            if (labels[j] == labels[i]) num += e;
        }
        total += -std::log(num / den);
    }
    return total;
}

double position_reference(const DTensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    double total = 0;
    for (int i = 0; i < n; ++i) {
        double den = 0;
        for (int j = 0; j < c; ++j) den += std::exp(logits.data[i * c + j]);
        total += -std::log(std::exp(logits.data[i * c + labels[i]]) / den);
    }
    return total;
}

double bce_reference(const DTensor& conf, const ValidityMask& gt) {
    double total = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const double p = std::clamp(conf.data[i], 1e-7, 1.0 - 1e-7);
        const double y = gt.data[i];
        total += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return -total / static_cast<double>(gt.data.size());
}

DTensor random_unit_rows(int n, int d, uint64_t seed) {
    Rng rng(seed);
    DTensor t({n, d});
    for (int i = 0; i < n; ++i) {
        double norm2 = 0;
        for (int j = 0; j < d; ++j) {
            t.data[i * d + j] = rng.normal();
            norm2 += t.data[i * d + j] * t.data[i * d + j];
        }
        for (int j = 0; j < d; ++j) t.data[i * d + j] /= std::sqrt(norm2);
    }
    return t;
}

std::vector<int> random_labels_min2(int n, int classes, uint64_t seed) {
    Rng rng(seed);
    std::vector<int> labels(n);
    for (;;) {
        for (auto& l : labels) l = rng.uniform_int(classes);
        std::vector<int> count(classes, 0);
        for (int l : labels) ++count[l];
        bool ok = true;
        for (int l : labels) ok = ok && count[l] >= 2;
        if (ok) return labels;
    }
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("contrastive loss of identical rows is N log(negatives/positives)") {
    // All similarities are equal, so every l_i = -log(|N_i| / (N-1)) = log 3
    // with N = 4 and one positive per patch.
    DTensor p({4, 8});
    for (int i = 0; i < 4; ++i) p.data[i * 8] = 1.0;  // identical unit rows
    const auto loss =
        contrastive_loss(DVar::constant(std::move(p)), {0, 0, 1, 1}, 0.07).value().data[0];
    CHECK(loss == doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("contrastive loss matches the brute-force oracle on random inputs") {
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 16, d = 8;
        const DTensor p = random_unit_rows(n, d, 500 + trial);
        const auto labels = random_labels_min2(n, 5, 900 + trial);
        const double got =
            contrastive_loss(DVar::constant(p), labels, 0.07).value().data[0];
        CHECK(got == doctest::Approx(contrastive_reference(p, labels, 0.07)).epsilon(1e-6));
    }
}

TEST_CASE("perfectly separated positives drive the loss to zero") {
    // Positives at dot 1, negatives at dot -1: l_i = log(1 + 2 e^(-2/tau)).
    DTensor p({4, 2});
    p.data = {1, 0, 1, 0, -1, 0, -1, 0};
    const auto loss =
        contrastive_loss(DVar::constant(std::move(p)), {0, 0, 1, 1}, 0.07).value().data[0];
    CHECK(loss < 1e-6);
}

TEST_CASE("contrastive loss is invariant under joint row/label permutation") {
    const DTensor p = random_unit_rows(12, 6, 31);
    const auto labels = random_labels_min2(12, 4, 32);
    const double base = contrastive_loss(DVar::constant(p), labels, 0.07).value().data[0];

    const ShufflePermutation perm = make_shuffle(12, 33);
    DTensor pp({12, 6});
    std::vector<int> pl(12);
    for (int i = 0; i < 12; ++i) {
        pl[i] = labels[perm.perm[i]];
        for (int j = 0; j < 6; ++j) pp.data[i * 6 + j] = p.data[perm.perm[i] * 6 + j];
    }
    const double permuted =
        contrastive_loss(DVar::constant(std::move(pp)), pl, 0.07).value().data[0];
    CHECK(permuted == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("replacing a positive with a far-away row never lowers the loss") {
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(600 + trial);
        DTensor p = random_unit_rows(6, 4, 700 + trial);
        const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
        // Make row 1 identical to its positive partner, row 0.
        for (int j = 0; j < 4; ++j) p.data[1 * 4 + j] = p.data[j];
        const double aligned = contrastive_loss(DVar::constant(p), labels, 0.2).value().data[0];
        // Replace row 1 with the antipode of row 0.
        for (int j = 0; j < 4; ++j) p.data[1 * 4 + j] = -p.data[j];
        const double opposed = contrastive_loss(DVar::constant(p), labels, 0.2).value().data[0];
        CHECK(aligned <= opposed + 1e-12);
    }
}

TEST_CASE("a contrastive class of size one is a hard error") {
    const DTensor p = random_unit_rows(4, 4, 41);
    CHECK_THROWS_AS(contrastive_loss(DVar::constant(p), {0, 0, 1, 2}, 0.07), Error);
}

TEST_CASE("position loss of uniform logits is N log C") {
    const auto loss =
        position_loss(DVar::constant(DTensor::full({4, 3}, 0.25)), {0, 1, 2, 0})
            .value()
            .data[0];
    CHECK(loss == doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("saturated correct logits drive the position loss to zero") {
    DTensor logits({4, 5});
    const std::vector<int> labels = {1, 4, 0, 2};
    for (int i = 0; i < 4; ++i) logits.data[i * 5 + labels[i]] = 100.0;
    const auto loss = position_loss(DVar::constant(std::move(logits)), labels).value().data[0];
    CHECK(loss < 1e-6);
}

TEST_CASE("position loss matches the scalar reference on random inputs") {
    Rng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        DTensor logits = gradcheck::random_tensor({8, 6}, rng, -2.0, 2.0);
        std::vector<int> labels(8);
        for (auto& l : labels) l = rng.uniform_int(6);
        const double got = position_loss(DVar::constant(logits), labels).value().data[0];
        CHECK(got == doctest::Approx(position_reference(logits, labels)).epsilon(1e-6));
    }
}

TEST_CASE("position loss rejects out-of-range labels") {
    CHECK_THROWS_AS(position_loss(DVar::constant(DTensor::zeros({2, 3})), {0, 3}), Error);
}

TEST_CASE("flow loss vanishes when the prediction matches inside the mask") {
    auto [flow, mask] = gt_flow_and_mask(sample_params(3), 32, 32);
    DTensor pred({32, 32, 2});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            // Arbitrary garbage outside the mask must not contribute.
            pred.data[(y * 32 + x) * 2] = mask.at(y, x) ? flow.fx(y, x) : 7.0;
            pred.data[(y * 32 + x) * 2 + 1] = mask.at(y, x) ? flow.fy(y, x) : -7.0;
        }
    const auto loss = flow_loss(DVar::constant(std::move(pred)), flow, mask).value().data[0];
    CHECK(loss <= 1e-6);
}

TEST_CASE("a uniform 0.1 x-offset under a full mask costs exactly 0.05") {
    const FlowField gt = FlowField::identity(16, 16);
    const ValidityMask mask(16, 16, 1);
    DTensor pred({16, 16, 2});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            pred.data[(y * 16 + x) * 2] = gt.fx(y, x) + 0.1;
            pred.data[(y * 16 + x) * 2 + 1] = gt.fy(y, x);
        }
    const auto loss = flow_loss(DVar::constant(std::move(pred)), gt, mask).value().data[0];
    CHECK(loss == doctest::Approx(0.05).epsilon(1e-6));
    // Sum reduction counts every valid element instead of averaging.
    DTensor pred2({16, 16, 2});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            pred2.data[(y * 16 + x) * 2] = gt.fx(y, x) + 0.1;
            pred2.data[(y * 16 + x) * 2 + 1] = gt.fy(y, x);
        }
    const auto total = flow_loss(DVar::constant(std::move(pred2)), gt, mask, false)
                           .value().data[0];
    CHECK(total == doctest::Approx(0.1 * 16 * 16).epsilon(1e-6));
}

TEST_CASE("flow loss under an all-zero mask is zero") {
    const FlowField gt = FlowField::identity(16, 16);
    const ValidityMask mask(16, 16, 0);
    const auto loss =
        flow_loss(DVar::constant(DTensor::full({16, 16, 2}, 3.0)), gt, mask).value().data[0];
    CHECK(loss == 0.0);
}

TEST_CASE("mask loss of a perfect prediction is at the clamp floor") {
    auto [flow, mask] = gt_flow_and_mask(sample_params(5), 32, 32);
    (void)flow;
    DTensor conf({32, 32, 1});
    for (size_t i = 0; i < mask.data.size(); ++i) conf.data[i] = mask.data[i];
    const auto loss = mask_loss(DVar::constant(std::move(conf)), mask).value().data[0];
    CHECK(loss <= 1e-6);
}

TEST_CASE("mask loss of a constant 0.5 prediction is log 2") {
    auto [flow, mask] = gt_flow_and_mask(sample_params(6), 32, 32);
    (void)flow;
    const auto loss =
        mask_loss(DVar::constant(DTensor::full({32, 32, 1}, 0.5)), mask).value().data[0];
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("mask loss matches the scalar reference on random inputs") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        ValidityMask gt(16, 16);
        for (auto& v : gt.data) v = rng.uniform() < 0.6 ? 1 : 0;
        DTensor conf = gradcheck::random_tensor({16, 16, 1}, rng, 0.02, 0.98);
        const double got = mask_loss(DVar::constant(conf), gt).value().data[0];
        CHECK(got == doctest::Approx(bce_reference(conf, gt)).epsilon(1e-6));
    }
}

TEST_CASE("all four losses are finite and nonnegative on random inputs") {
    Rng rng(71);
    const DTensor p = random_unit_rows(12, 8, 72);
    const auto labels = random_labels_min2(12, 3, 73);
    const double l_con = contrastive_loss(DVar::constant(p), labels, 0.07).value().data[0];
    const double l_pos =
        position_loss(DVar::constant(gradcheck::random_tensor({12, 3}, rng)), labels)
            .value().data[0];
    auto [flow, mask] = gt_flow_and_mask(sample_params(74), 32, 32);
    const double l_flow =
        flow_loss(DVar::constant(gradcheck::random_tensor({32, 32, 2}, rng)), flow, mask)
            .value().data[0];
    const double l_mask =
        mask_loss(DVar::constant(gradcheck::random_tensor({32, 32, 1}, rng, 0.1, 0.9)), mask)
            .value().data[0];
    for (double v : {l_con, l_pos, l_flow, l_mask}) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("loss gradients pass finite-difference checks") {
    Rng rng(81);
    {  // contrastive, through the l2_normalize that produces p_i
        std::vector<DVar> in = {
            DVar::leaf(gradcheck::random_tensor({8, 6}, rng, -1.0, 1.0), true)};
        const auto labels = random_labels_min2(8, 3, 82);
        auto r = gradcheck::check(in, [&] {
            return contrastive_loss(ad::l2_normalize(in[0]), labels, 0.07);
        });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // position
        std::vector<DVar> in = {DVar::leaf(gradcheck::random_tensor({6, 4}, rng), true)};
        const std::vector<int> labels = {0, 1, 2, 3, 0, 1};
        auto r = gradcheck::check(in, [&] { return position_loss(in[0], labels); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // flow: keep the prediction away from the L1 kink at zero error
        auto [flow, mask] = gt_flow_and_mask(sample_params(83), 16, 16);
        std::vector<DVar> in = {
            DVar::leaf(gradcheck::random_tensor({16, 16, 2}, rng, 1.5, 2.5), true)};
        auto r = gradcheck::check(in, [&] { return flow_loss(in[0], flow, mask); });
        CHECK(r.max_rel_err <= 1e-4);
    }
    {  // mask: confidences away from the clamp boundaries
        auto [flow, mask] = gt_flow_and_mask(sample_params(84), 16, 16);
        (void)flow;
        std::vector<DVar> in = {
            DVar::leaf(gradcheck::random_tensor({16, 16, 1}, rng, 0.1, 0.9), true)};
        auto r = gradcheck::check(in, [&] { return mask_loss(in[0], mask); });
        CHECK(r.max_rel_err <= 1e-4);
    }
}

}  // TEST_SUITE
