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

#pragma once

#include <string>
#include <vector>

#include "sfir/geometry.hpp"
#include "sfir/image.hpp"

namespace sfir {

inline constexpr double kPsnrCap = 100.0;  // returned for (near-)identical images

/// 10 log10(1 / MSE) over all pixels and channels, peak = 1.0 on float
/// images. Identical inputs return the 100 dB cap.
double psnr(const Image& a, const Image& b);

/// PSNR restricted to mask = 1 pixels.
double psnr_masked(const Image& a, const Image& b, const ValidityMask& mask);

/// Single-scale SSIM on the luma channel (0.299 R + 0.587 G + 0.114 B):
/// 11x11 Gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, averaged over
/// valid window positions. Inputs must be at least 11x11.
double ssim(const Image& a, const Image& b);

struct MetricReport {
    struct Entry {
        std::string id;
        double psnr = 0.0;
        double ssim = 0.0;
        double psnr_masked = 0.0;
    };
    std::vector<Entry> entries;

    double mean_psnr() const;
    double mean_ssim() const;
    double mean_psnr_masked() const;
    int count() const { return static_cast<int>(entries.size()); }

    /// CSV: header then one row per image plus an aggregate row.
    void write_csv(const std::string& path) const;
};

}  // namespace sfir
