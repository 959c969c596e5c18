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

#include "sfir/metrics.hpp"

#include <cmath>
#include <fstream>

namespace sfir {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double mse_to_psnr(double mse) {
    if (mse < 1e-10) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> to_gray(const Image& img) {
    std::vector<double> g(static_cast<size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            g[static_cast<size_t>(y) * img.width + x] = 0.299 * img.at(y, x, 0) +
                                                        0.587 * img.at(y, x, 1) +
                                                        0.114 * img.at(y, x, 2);
    return g;
}

// Separable Gaussian filtering, valid mode: output has (h-10) x (w-10)
// entries starting at offset 5.
std::vector<double> gaussian_valid(const std::vector<double>& in, int h, int w) {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kWindow);
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - (kWindow - 1) / 2.0;
            k[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
            sum += k[i];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();
    const int half = kWindow / 2;
    const int vw = w - 2 * half;
    // Horizontal pass.
    std::vector<double> tmp(static_cast<size_t>(h) * vw);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += kernel[k] * in[static_cast<size_t>(y) * w + x + k];
            tmp[static_cast<size_t>(y) * vw + x] = acc;
        }
    // Vertical pass.
    const int vh = h - 2 * half;
    std::vector<double> out(static_cast<size_t>(vh) * vw);
    for (int y = 0; y < vh; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += kernel[k] * tmp[static_cast<size_t>(y + k) * vw + x];
            out[static_cast<size_t>(y) * vw + x] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    SFIR_CHECK(a.same_shape(b), "psnr: images differ in shape");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return mse_to_psnr(acc / static_cast<double>(a.data.size()));
}

double psnr_masked(const Image& a, const Image& b, const ValidityMask& mask) {
    SFIR_CHECK(a.same_shape(b), "psnr_masked: images differ in shape");
    SFIR_CHECK(a.height == mask.height && a.width == mask.width,
               "psnr_masked: mask shape mismatch");
    double acc = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!mask.at(y, x)) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = static_cast<double>(a.at(y, x, c)) - b.at(y, x, c);
                acc += d * d;
            }
            n += static_cast<size_t>(a.channels);
        }
    SFIR_CHECK(n > 0, "psnr_masked: empty mask");
    return mse_to_psnr(acc / static_cast<double>(n));
}

double ssim(const Image& a, const Image& b) {
    SFIR_CHECK(a.same_shape(b), "ssim: images differ in shape");
    SFIR_CHECK(a.height >= kWindow && a.width >= kWindow,
               "ssim: images smaller than the 11x11 window");
    const int h = a.height, w = a.width;
    const auto ga = to_gray(a), gb = to_gray(b);
    std::vector<double> gaa(ga.size()), gbb(ga.size()), gab(ga.size());
    for (size_t i = 0; i < ga.size(); ++i) {
        gaa[i] = ga[i] * ga[i];
        gbb[i] = gb[i] * gb[i];
        gab[i] = ga[i] * gb[i];
    }
    const auto mu_a = gaussian_valid(ga, h, w);
    const auto mu_b = gaussian_valid(gb, h, w);
    const auto m_aa = gaussian_valid(gaa, h, w);
    const auto m_bb = gaussian_valid(gbb, h, w);
    const auto m_ab = gaussian_valid(gab, h, w);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
    }
    return acc / static_cast<double>(mu_a.size());
}

double MetricReport::mean_psnr() const {
    double acc = 0.0;
    for (const auto& e : entries) acc += e.psnr;
    return entries.empty() ? 0.0 : acc / entries.size();
}

double MetricReport::mean_ssim() const {
    double acc = 0.0;
    for (const auto& e : entries) acc += e.ssim;
    return entries.empty() ? 0.0 : acc / entries.size();
}

double MetricReport::mean_psnr_masked() const {
    double acc = 0.0;
    for (const auto& e : entries) acc += e.psnr_masked;
    return entries.empty() ? 0.0 : acc / entries.size();
}

void MetricReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metric report: " + path);
    out << "id,psnr,ssim,psnr_masked\n";
    for (const auto& e : entries)
        out << e.id << "," << e.psnr << "," << e.ssim << "," << e.psnr_masked << "\n";
    out << "aggregate," << mean_psnr() << "," << mean_ssim() << "," << mean_psnr_masked()
        << "\n";
    if (!out) throw IoError("metric report write failed: " + path);
}

}  // namespace sfir
