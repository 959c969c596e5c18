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

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "sfir/image.hpp"

// Everything here is a pure function over immutable inputs; all of it is safe
// to call concurrently.

namespace sfir {

inline constexpr double kMaxNormRadius = 1.4142135623730951;  // sqrt(2), frame corner

/// Center-origin coordinate with half-width 1: pixel (u, v) of an HxW image
/// maps to (2(u+0.5)/W - 1, 2(v+0.5)/H - 1). Any in-image coordinate has
/// radius <= sqrt(2).
struct NormalizedCoord {
    double x = 0.0;
    double y = 0.0;

    static NormalizedCoord from_pixel(int u, int v, int w, int h) {
        return {2.0 * (u + 0.5) / w - 1.0, 2.0 * (v + 0.5) / h - 1.0};
    }
    double radius() const { return std::sqrt(x * x + y * y); }
    bool in_bounds() const { return x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0; }
    NormalizedCoord scaled(double s) const { return {x * s, y * s}; }
};

/// Radial model r_c = sum_i k_i r_d^(2i-1), i = 1..4, on normalized radii.
/// r_d is the radius in the distorted image, r_c in the distortion-free one.
class DistortionParams {
public:
    /// Validates at construction: the model must be strictly increasing on
    /// [0, sqrt(2)] (derivative positive on a 512-point grid), which
    /// guarantees a unique numerical inverse.
    explicit DistortionParams(const std::array<double, 4>& k);

    static DistortionParams identity() { return DistortionParams({1.0, 0.0, 0.0, 0.0}); }

    const std::array<double, 4>& k() const { return k_; }

    /// True iff the polynomial derivative is positive on the dense grid.
    static bool is_monotone(const std::array<double, 4>& k, int grid_points = 512);

private:
    std::array<double, 4> k_;
};

/// r_c for a given distorted radius. Strictly increasing on [0, sqrt(2)].
double radial_forward(const DistortionParams& params, double r_d);

/// Numerical inverse of radial_forward by bisection on [0, sqrt(2)]
/// (80 iterations, |forward(r_d) - r_c| <= 1e-9). Empty when r_c exceeds
/// forward(sqrt(2)), i.e. the rectified radius has no preimage.
std::optional<double> radial_inverse(const DistortionParams& params, double r_c);

inline constexpr float kFlowInvalid = -2.0f;  // sentinel for masked-out flow entries

/// Per-pixel absolute source coordinates in normalized space. Valid entries
/// lie in [-1,1]^2; invalid entries hold (kFlowInvalid, kFlowInvalid).
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // HxWx2, (fx, fy) interleaved

    FlowField() = default;
    FlowField(int h, int w)
        : height(h), width(w), data(static_cast<size_t>(h) * w * 2, 0.f) {}

    float& fx(int y, int x) { return data[(static_cast<size_t>(y) * width + x) * 2]; }
    float& fy(int y, int x) { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
    float fx(int y, int x) const { return data[(static_cast<size_t>(y) * width + x) * 2]; }
    float fy(int y, int x) const { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }

    /// The identity grid: every pixel points at its own normalized coordinate.
    static FlowField identity(int h, int w);
};

/// Per-pixel {0,1} validity. GT masks are centrally symmetric and 4-connected.
struct ValidityMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;

    ValidityMask() = default;
    ValidityMask(int h, int w, uint8_t fill = 0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count() const;
};

/// Synthesizes the fisheye view of `source`: each output pixel at normalized
/// radius r_d samples the source at radius radial_forward(r_d), same angle.
/// Samples falling outside [-1,1]^2 produce black.
Image distort_image(const Image& source, const DistortionParams& params);

/// Ground-truth backward flow and validity for an h x w rectified frame:
/// each pixel at radius r_c maps to radius radial_inverse(r_c), same angle.
/// mask = 1 iff the inverse exists and the coordinate lies in [-1,1]^2.
std::pair<FlowField, ValidityMask> gt_flow_and_mask(const DistortionParams& params,
                                                    int h, int w);

/// Backward warp: out(u,v) = bilinear sample of image at flow(u,v), then
/// masked to black where mask = 0.
Image warp(const Image& image, const FlowField& flow, const ValidityMask& mask);

}  // namespace sfir
