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

#include "sfir/geometry.hpp"

#include <cmath>

namespace sfir {

namespace {

double poly_eval(const std::array<double, 4>& k, double r) {
    const double r2 = r * r;
    return r * (k[0] + r2 * (k[1] + r2 * (k[2] + r2 * k[3])));
}

double poly_derivative(const std::array<double, 4>& k, double r) {
    const double r2 = r * r;
    return k[0] + r2 * (3.0 * k[1] + r2 * (5.0 * k[2] + r2 * 7.0 * k[3]));
}

}  // namespace

bool DistortionParams::is_monotone(const std::array<double, 4>& k, int grid_points) {
    for (int i = 0; i < grid_points; ++i) {
        const double r = kMaxNormRadius * i / (grid_points - 1);
        if (poly_derivative(k, r) <= 0.0) return false;
    }
    return true;
}

DistortionParams::DistortionParams(const std::array<double, 4>& k) : k_(k) {
    SFIR_CHECK(is_monotone(k),
               "DistortionParams: radial polynomial is not strictly increasing on "
               "[0, sqrt(2)]");
}

double radial_forward(const DistortionParams& params, double r_d) {
    return poly_eval(params.k(), r_d);
}

std::optional<double> radial_inverse(const DistortionParams& params, double r_c) {
    if (r_c <= 0.0) return 0.0;
    if (r_c > radial_forward(params, kMaxNormRadius)) return std::nullopt;
    // 80 halvings shrink the bracket to ~1e-24, so the radius error stays
    // below 1e-6 even where the polynomial slope is small; the value residual
    // |forward(r_d) - r_c| lands well under 1e-9.
    double lo = 0.0, hi = kMaxNormRadius;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (radial_forward(params, mid) < r_c)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

FlowField FlowField::identity(int h, int w) {
    FlowField f(h, w);
    for (int y = 0; y < h; ++y) {
        const float ny = static_cast<float>(pixel_to_norm_y(y, h));
        for (int x = 0; x < w; ++x) {
            f.fx(y, x) = static_cast<float>(pixel_to_norm_x(x, w));
            f.fy(y, x) = ny;
        }
    }
    return f;
}

size_t ValidityMask::count() const {
    size_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
}

Image distort_image(const Image& source, const DistortionParams& params) {
    SFIR_CHECK(source.channels == 3, "distort_image: source must be HxWx3");
    const int h = source.height, w = source.width;
    Image out(h, w, 3);
    const double k1 = params.k()[0];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const NormalizedCoord p = NormalizedCoord::from_pixel(x, y, w, h);
            const double r_d = p.radius();
            // scale = r_c / r_d; the limit at the center is k1.
            const double scale = r_d < 1e-12 ? k1 : radial_forward(params, r_d) / r_d;
            const NormalizedCoord src = p.scaled(scale);
            if (!src.in_bounds()) continue;  // black
            sample_bilinear(source, src.x, src.y, &out.at(y, x, 0));
        }
    }
    return out;
}

std::pair<FlowField, ValidityMask> gt_flow_and_mask(const DistortionParams& params,
                                                    int h, int w) {
    SFIR_CHECK(h >= 16 && w >= 16, "gt_flow_and_mask: dimensions must be >= 16");
    FlowField flow(h, w);
    ValidityMask mask(h, w);
    const double inv_k1 = 1.0 / params.k()[0];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const NormalizedCoord p = NormalizedCoord::from_pixel(x, y, w, h);
            const double r_c = p.radius();
            const auto r_d = radial_inverse(params, r_c);
            NormalizedCoord src;
            bool valid = r_d.has_value();
            if (valid) {
                src = p.scaled(r_c < 1e-12 ? inv_k1 : *r_d / r_c);
                valid = src.in_bounds();
            }
            if (valid) {
                flow.fx(y, x) = static_cast<float>(src.x);
                flow.fy(y, x) = static_cast<float>(src.y);
                mask.at(y, x) = 1;
            } else {
                flow.fx(y, x) = kFlowInvalid;
                flow.fy(y, x) = kFlowInvalid;
            }
        }
    }
    return {std::move(flow), std::move(mask)};
}

Image warp(const Image& image, const FlowField& flow, const ValidityMask& mask) {
    SFIR_CHECK(flow.height == mask.height && flow.width == mask.width,
               "warp: flow/mask dimensions differ");
    const int h = flow.height, w = flow.width, c = image.channels;
    Image out(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            sample_bilinear(image, flow.fx(y, x), flow.fy(y, x), &out.at(y, x, 0));
        }
    }
    return out;
}

}  // namespace sfir
