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

#include "sfir/metrics.hpp"

using namespace sfir;

namespace {

// Independent per-window SSIM reference: literal double loops over every
// valid 11x11 window, no separable filtering.
double ssim_reference(const Image& a, const Image& b) {
    const int h = a.height, w = a.width;
    auto gray = [](const Image& img, int y, int x) {
        return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    };
    double kernel[11][11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            ksum += kernel[i][j];
        }
    for (auto& row : kernel)
        for (auto& v : row) v /= ksum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0.0;
    int count = 0;
    for (int y = 5; y < h - 5; ++y)
        for (int x = 5; x < w - 5; ++x) {
            double mu_a = 0, mu_b = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    mu_a += kernel[i][j] * gray(a, y + i - 5, x + j - 5);
                    mu_b += kernel[i][j] * gray(b, y + i - 5, x + j - 5);
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double da = gray(a, y + i - 5, x + j - 5) - mu_a;
                    const double db = gray(b, y + i - 5, x + j - 5) - mu_b;
                    va += kernel[i][j] * da * da;
                    vb += kernel[i][j] * db * db;
                    cov += kernel[i][j] * da * db;
                }
            acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            ++count;
        }
    return acc / count;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr caps at 100 dB for identical images") {
    const Image a = make_test_image(TestImageKind::kSmooth, 32, 32, 1);
    CHECK(psnr(a, a) == 100.0);
}

TEST_CASE("psnr matches the analytic value for a constant offset") {
    Image a(32, 32, 3, 0.25f);
    Image b(32, 32, 3, 0.25f + 16.f / 255.f);
    const double expected = 20.0 * std::log10(255.0 / 16.0);
    CHECK(psnr(a, b) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));  // symmetry
}

TEST_CASE("psnr rejects shape mismatches") {
    CHECK_THROWS_AS(psnr(Image(8, 8, 3), Image(8, 9, 3)), Error);
}

TEST_CASE("psnr_masked ignores pixels outside the mask") {
    Image a(32, 32, 3, 0.5f);
    Image b = a;
    ValidityMask mask(32, 32, 1);
    // Corrupt one masked-out pixel; the masked PSNR must stay at the cap.
    mask.at(3, 3) = 0;
    b.at(3, 3, 0) = 1.f;
    CHECK(psnr(a, b) < 100.0);
    CHECK(psnr_masked(a, b, mask) == 100.0);
}

TEST_CASE("ssim of an image with itself is 1") {
    const Image a = make_test_image(TestImageKind::kTextured, 48, 48, 2);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim drops below 1 for inverted structure") {
    const Image a = make_test_image(TestImageKind::kTextured, 48, 48, 3);
    Image b = a;
    for (auto& v : b.data) v = 1.f - v;
    CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("ssim rejects images smaller than the window") {
    CHECK_THROWS_AS(ssim(Image(8, 8, 3), Image(8, 8, 3)), Error);
}

TEST_CASE("ssim matches the per-window reference on random pairs") {
    for (int trial = 0; trial < 6; ++trial) {
        const Image a = make_test_image(TestImageKind::kTextured, 24, 28, 100 + trial);
        const Image b = make_test_image(TestImageKind::kSmooth, 24, 28, 200 + trial);
        CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-6));
        CHECK(ssim(a, a) == doctest::Approx(ssim_reference(a, a)).epsilon(1e-6));
    }
}

TEST_CASE("report aggregates are arithmetic means") {
    MetricReport report;
    report.entries.push_back({"a", 10.0, 0.5, 12.0});
    report.entries.push_back({"b", 20.0, 0.7, 18.0});
    CHECK(report.mean_psnr() == doctest::Approx(15.0));
    CHECK(report.mean_ssim() == doctest::Approx(0.6));
    CHECK(report.mean_psnr_masked() == doctest::Approx(15.0));
    CHECK(report.count() == 2);
}

}  // TEST_SUITE
