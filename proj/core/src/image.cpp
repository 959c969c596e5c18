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

#include "sfir/image.hpp"

#include <algorithm>
#include <cmath>

namespace sfir {

ImageU8 to_u8(const Image& img) {
    ImageU8 out;
    out.height = img.height;
    out.width = img.width;
    out.channels = img.channels;
    out.data.resize(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        const float v = std::clamp(img.data[i], 0.f, 1.f);
        out.data[i] = static_cast<uint8_t>(std::lround(v * 255.f));
    }
    return out;
}

Image to_float(const ImageU8& img) {
    Image out(img.height, img.width, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<float>(img.data[i]) / 255.f;
    return out;
}

void sample_bilinear(const Image& img, double nx, double ny, float* out) {
    const int h = img.height, w = img.width, c = img.channels;
    const double px = norm_to_pixel_x(nx, w);
    const double py = norm_to_pixel_y(ny, h);
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const float ax = static_cast<float>(px - x0);
    const float ay = static_cast<float>(py - y0);
    const int x0c = std::clamp(x0, 0, w - 1);
    const int x1c = std::clamp(x0 + 1, 0, w - 1);
    const int y0c = std::clamp(y0, 0, h - 1);
    const int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int ch = 0; ch < c; ++ch) {
        const float top = img.at(y0c, x0c, ch) * (1.f - ax) + img.at(y0c, x1c, ch) * ax;
        const float bot = img.at(y1c, x0c, ch) * (1.f - ax) + img.at(y1c, x1c, ch) * ax;
        out[ch] = top * (1.f - ay) + bot * ay;
    }
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    SFIR_CHECK(out_h > 0 && out_w > 0, "resize_bilinear: output dimensions must be positive");
    if (out_h == src.height && out_w == src.width) return src;
    Image out(out_h, out_w, src.channels);
    for (int y = 0; y < out_h; ++y) {
        const double ny = pixel_to_norm_y(y, out_h);
        for (int x = 0; x < out_w; ++x) {
            const double nx = pixel_to_norm_x(x, out_w);
            sample_bilinear(src, nx, ny, &out.at(y, x, 0));
        }
    }
    return out;
}

Image make_test_image(TestImageKind kind, int h, int w, uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x9d5c0f3a1b2e4d6cULL));
    Image img(h, w, 3);

    // Shared smooth base: per-channel affine ramp plus a few gaussian blobs.
    struct Blob {
        double cx, cy, s, amp[3];
    };
    std::vector<Blob> blobs(4);
    for (auto& b : blobs) {
        b.cx = rng.uniform(-0.8, 0.8);
        b.cy = rng.uniform(-0.8, 0.8);
        b.s = rng.uniform(0.25, 0.7);
        for (double& a : b.amp) a = rng.uniform(-0.5, 0.5);
    }
    double ramp[3][3];
    for (auto& r : ramp) {
        r[0] = rng.uniform(0.3, 0.7);   // offset
        r[1] = rng.uniform(-0.3, 0.3);  // x slope
        r[2] = rng.uniform(-0.3, 0.3);  // y slope
    }

    struct Grating {
        double fx, fy, phase, amp;
    };
    std::vector<Grating> gratings;
    if (kind == TestImageKind::kTextured) {
        gratings.resize(5);
        for (auto& g : gratings) {
            const double freq = rng.uniform(2.0, static_cast<double>(w) / 10.0);
            const double angle = rng.uniform(0.0, M_PI);
            g.fx = freq * std::cos(angle);
            g.fy = freq * std::sin(angle);
            g.phase = rng.uniform(0.0, 2.0 * M_PI);
            g.amp = rng.uniform(0.05, 0.18);
        }
    }

    for (int y = 0; y < h; ++y) {
        const double ny = pixel_to_norm_y(y, h);
        for (int x = 0; x < w; ++x) {
            const double nx = pixel_to_norm_x(x, w);
            double tex = 0.0;
            for (const auto& g : gratings)
                tex += g.amp * std::sin(g.fx * nx + g.fy * ny + g.phase);
            for (int c = 0; c < 3; ++c) {
                double v = ramp[c][0] + ramp[c][1] * nx + ramp[c][2] * ny + tex;
                for (const auto& b : blobs) {
                    const double dx = nx - b.cx, dy = ny - b.cy;
                    v += b.amp[c] * std::exp(-(dx * dx + dy * dy) / (b.s * b.s));
                }
                img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.02, 0.98));
            }
        }
    }
    return img;
}

}  // namespace sfir
