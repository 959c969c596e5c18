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

#include <cstdint>
#include <string>
#include <vector>

#include "sfir/common.hpp"

namespace sfir {

/// Dense HxWxC float image, row-major, channel-interleaved, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.f)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// 8-bit image as stored on disk.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> data;
};

ImageU8 to_u8(const Image& img);
Image to_float(const ImageU8& img);

/// Bilinear resize; a same-size call reproduces the input exactly.
Image resize_bilinear(const Image& src, int out_h, int out_w);

/// Pixel centers <-> center-origin normalized coordinates with half-width 1:
/// pixel (u, v) of an HxW image maps to (2(u+0.5)/W - 1, 2(v+0.5)/H - 1).
inline double pixel_to_norm_x(int u, int w) { return 2.0 * (u + 0.5) / w - 1.0; }
inline double pixel_to_norm_y(int v, int h) { return 2.0 * (v + 0.5) / h - 1.0; }
inline double norm_to_pixel_x(double x, int w) { return (x + 1.0) * 0.5 * w - 0.5; }
inline double norm_to_pixel_y(double y, int h) { return (y + 1.0) * 0.5 * h - 0.5; }

/// Bilinear sample at a normalized coordinate; taps clamp to the border.
void sample_bilinear(const Image& img, double nx, double ny, float* out);

enum class TestImageKind {
    kSmooth,    // low-order gradients + gaussian blobs; interpolation-friendly
    kTextured,  // smooth base + band-limited gratings; carries distortion cues
};

/// Deterministic procedural source image (stands in for a photo corpus).
Image make_test_image(TestImageKind kind, int h, int w, uint64_t seed);

// PNG I/O (8-bit; grayscale and alpha inputs are converted to RGB).
ImageU8 load_png(const std::string& path);
void save_png(const std::string& path, const ImageU8& img);

}  // namespace sfir
