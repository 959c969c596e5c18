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
#include <deque>

#include "sfir/dataset.hpp"
#include "sfir/geometry.hpp"
#include "sfir/metrics.hpp"

using namespace sfir;

namespace {

Image rotate90(const Image& img) {
    Image out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, img.height - 1 - y, c) = img.at(y, x, c);
    return out;
}

double max_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

Image checkerboard(int size, int square) {
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float v = ((x / square + y / square) % 2) ? 1.f : 0.f;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    return img;
}

// Black/white transitions of the red channel along row `y` for x in [x0, x1).
int count_transitions(const Image& img, int y, int x0, int x1) {
    int n = 0;
    for (int x = x0 + 1; x < x1; ++x) {
        const bool a = img.at(y, x - 1, 0) > 0.5f;
        const bool b = img.at(y, x, 0) > 0.5f;
        n += a != b;
    }
    return n;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("radial_forward evaluates the odd polynomial") {
    const DistortionParams identity = DistortionParams::identity();
    CHECK(radial_forward(identity, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    const DistortionParams params({1.0, 0.1, 0.0, 0.0});
    CHECK(radial_forward(params, 0.0) == 0.0);
    CHECK(radial_forward(params, 1.0) == doctest::Approx(1.1).epsilon(1e-12));
    // r_c(0) = 0 exactly for any accepted parameters
    CHECK(radial_forward(DistortionParams({0.8, -0.1, 0.01, -0.001}), 0.0) == 0.0);
}

TEST_CASE("construction rejects non-monotone polynomials") {
    CHECK_THROWS_AS(DistortionParams({0.1, -1.0, 0.0, 0.0}), Error);
    CHECK_THROWS_AS(DistortionParams({-1.0, 0.0, 0.0, 0.0}), Error);
    CHECK_NOTHROW(DistortionParams({1.0, 0.0, 0.0, 0.0}));
}

TEST_CASE("radial_inverse round-trips through radial_forward") {
    const DistortionParams identity = DistortionParams::identity();
    auto r = radial_inverse(identity, 0.7);
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(0.7).epsilon(1e-9));

    // forward(1.0) = 1.1 for k=(1,0.1,0,0), so the inverse of 1.1 must be 1.0
    const DistortionParams params({1.0, 0.1, 0.0, 0.0});
    auto r2 = radial_inverse(params, 1.1);
    REQUIRE(r2.has_value());
    CHECK(std::abs(*r2 - 1.0) <= 1e-6);

    // 2.0 exceeds forward(sqrt(2)) = sqrt(2) for the identity model
    CHECK_FALSE(radial_inverse(identity, 2.0).has_value());
}

TEST_CASE("round-trip property over sampled models") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const DistortionParams params = sample_params(rng.next_u64());
        for (int i = 0; i < 64; ++i) {
            const double r = kMaxNormRadius * i / 63.0;
            const auto back = radial_inverse(params, radial_forward(params, r));
            REQUIRE(back.has_value());
            CHECK(std::abs(*back - r) <= 1e-6);
        }
    }
}

TEST_CASE("strict monotonicity over sampled models") {
    Rng rng(321);
    for (int trial = 0; trial < 50; ++trial) {
        const DistortionParams params = sample_params(rng.next_u64());
        double prev = -1.0;
        for (int i = 0; i < 512; ++i) {
            const double r = kMaxNormRadius * i / 511.0;
            const double f = radial_forward(params, r);
            CHECK(f > prev);
            prev = f;
        }
    }
}

TEST_CASE("distort_image with identity params is the identity") {
    const Image src = make_test_image(TestImageKind::kTextured, 64, 64, 9);
    const Image out = distort_image(src, DistortionParams::identity());
    CHECK(max_abs_diff(out, src) <= 1e-6);
}

TEST_CASE("distort_image maps uniform gray to uniform gray inside bounds") {
    Image gray(48, 48, 3, 0.5f);
    const Image out = distort_image(gray, DistortionParams({0.95, 0.04, 0.0, 0.0}));
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float v = out.at(y, x, 0);
            const bool gray_px = std::abs(v - 0.5f) <= 1e-6f;
            const bool black_px = v == 0.f;
            CHECK((gray_px || black_px));
        }
}

TEST_CASE("distort_image compresses outer checker squares relative to center") {
    // Oracle: along the central row, the distorted image at output radius band
    // [a,b] shows the source content of [fwd(a), fwd(b)]; the number of
    // checker transitions is that source span divided by the square size.
    const int size = 256, square = 16;
    const DistortionParams params({0.8, 0.05, 0.0, 0.0});
    const Image out = distort_image(checkerboard(size, square), params);

    const int row = size / 2;  // center offset 0.5px; stays within one square row
    auto band_pixels = [&](double a, double b) {
        return std::pair<int, int>{static_cast<int>((a + 1.0) / 2.0 * size),
                                   static_cast<int>((b + 1.0) / 2.0 * size)};
    };
    auto expected_transitions = [&](double a, double b) {
        const double src_span = (radial_forward(params, b) - radial_forward(params, a)) / 2.0;
        return src_span * size / square;
    };
    const auto [i0, i1] = band_pixels(0.0, 0.4);  // inner band
    const auto [o0, o1] = band_pixels(0.6, 1.0);  // outer band
    const int inner = count_transitions(out, row, i0, i1);
    const int outer = count_transitions(out, row, o0, o1);
    CHECK(outer > inner);
    CHECK(std::abs(inner - expected_transitions(0.0, 0.4)) <= 2.0);
    CHECK(std::abs(outer - expected_transitions(0.6, 1.0)) <= 2.0);
}

TEST_CASE("distort_image commutes with 90-degree rotation") {
    const Image src = make_test_image(TestImageKind::kTextured, 48, 48, 17);
    const DistortionParams params({0.85, -0.05, 0.01, 0.0});
    const Image a = rotate90(distort_image(src, params));
    const Image b = distort_image(rotate90(src), params);
    CHECK(max_abs_diff(a, b) <= 1e-6);
}

TEST_CASE("gt_flow_and_mask with identity params is the identity grid") {
    auto [flow, mask] = gt_flow_and_mask(DistortionParams::identity(), 32, 32);
    const FlowField grid = FlowField::identity(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            REQUIRE(mask.at(y, x) == 1);
            CHECK(flow.fx(y, x) == doctest::Approx(grid.fx(y, x)).epsilon(1e-6));
            CHECK(flow.fy(y, x) == doctest::Approx(grid.fy(y, x)).epsilon(1e-6));
        }
}

TEST_CASE("gt mask properties: center valid, symmetric, 4-connected, flow in range") {
    Rng rng(55);
    for (int trial = 0; trial < 8; ++trial) {
        const DistortionParams params = sample_params(rng.next_u64());
        const int h = 64, w = 64;
        auto [flow, mask] = gt_flow_and_mask(params, h, w);

        CHECK(mask.at(h / 2, w / 2) == 1);
        CHECK(mask.count() > 0);

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                CHECK(mask.at(y, x) == mask.at(h - 1 - y, w - 1 - x));  // central symmetry
                if (mask.at(y, x)) {
                    CHECK(flow.fx(y, x) >= -1.f);
                    CHECK(flow.fx(y, x) <= 1.f);
                    CHECK(flow.fy(y, x) >= -1.f);
                    CHECK(flow.fy(y, x) <= 1.f);
                } else {
                    CHECK(flow.fx(y, x) == kFlowInvalid);
                    CHECK(flow.fy(y, x) == kFlowInvalid);
                }
            }

        // 4-connectivity: BFS from the center reaches every valid pixel.
        std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
        std::deque<std::pair<int, int>> queue{{h / 2, w / 2}};
        seen[static_cast<size_t>(h / 2) * w + w / 2] = 1;
        size_t reached = 0;
        while (!queue.empty()) {
            auto [y, x] = queue.front();
            queue.pop_front();
            ++reached;
            const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                const int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                auto& s = seen[static_cast<size_t>(ny) * w + nx];
                if (!s && mask.at(ny, nx)) {
                    s = 1;
                    queue.emplace_back(ny, nx);
                }
            }
        }
        CHECK(reached == mask.count());
    }
}

TEST_CASE("distort then GT-rectify recovers smooth sources above 30 dB") {
    Rng rng(77);
    for (int trial = 0; trial < 4; ++trial) {
        const Image src = make_test_image(TestImageKind::kSmooth, 128, 128, 1000 + trial);
        const DistortionParams params = sample_params(rng.next_u64());
        const Image distorted = distort_image(src, params);
        auto [flow, mask] = gt_flow_and_mask(params, 128, 128);
        const Image recovered = warp(distorted, flow, mask);
        CHECK(psnr_masked(recovered, src, mask) >= 30.0);
    }
}

TEST_CASE("warp with the identity flow is the identity") {
    const Image src = make_test_image(TestImageKind::kTextured, 40, 40, 4);
    const FlowField flow = FlowField::identity(40, 40);
    const ValidityMask mask(40, 40, 1);
    CHECK(max_abs_diff(warp(src, flow, mask), src) <= 1e-6);
}

TEST_CASE("warp sending every pixel to pixel (0,0) yields a constant image") {
    const Image src = make_test_image(TestImageKind::kTextured, 24, 24, 5);
    FlowField flow(24, 24);
    const float cx = static_cast<float>(pixel_to_norm_x(0, 24));
    const float cy = static_cast<float>(pixel_to_norm_y(0, 24));
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            flow.fx(y, x) = cx;
            flow.fy(y, x) = cy;
        }
    const Image out = warp(src, flow, ValidityMask(24, 24, 1));
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(out.at(y, x, c) == doctest::Approx(src.at(0, 0, c)).epsilon(1e-6));
}

TEST_CASE("warp with an all-zero mask is black") {
    const Image src = make_test_image(TestImageKind::kSmooth, 24, 24, 6);
    const Image out = warp(src, FlowField::identity(24, 24), ValidityMask(24, 24, 0));
    for (float v : out.data) CHECK(v == 0.f);
}

TEST_CASE("warp is linear in image values") {
    Rng rng(99);
    const Image i1 = make_test_image(TestImageKind::kTextured, 32, 32, 7);
    const Image i2 = make_test_image(TestImageKind::kSmooth, 32, 32, 8);
    FlowField flow(32, 32);
    ValidityMask mask(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            flow.fx(y, x) = static_cast<float>(rng.uniform(-1.0, 1.0));
            flow.fy(y, x) = static_cast<float>(rng.uniform(-1.0, 1.0));
            mask.at(y, x) = rng.uniform() < 0.8 ? 1 : 0;
        }
    const float a = 0.3f, b = 0.6f;
    Image combo(32, 32, 3);
    for (size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * i1.data[i] + b * i2.data[i];
    const Image lhs = warp(combo, flow, mask);
    const Image w1 = warp(i1, flow, mask);
    const Image w2 = warp(i2, flow, mask);
    for (size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(lhs.data[i] == doctest::Approx(a * w1.data[i] + b * w2.data[i]).epsilon(1e-6));
}

}  // TEST_SUITE
