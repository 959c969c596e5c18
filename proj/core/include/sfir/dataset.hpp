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

/// Per-patch distortion-class labels for a (h/p) x (w/p) grid.
///
/// A patch's class is the unordered pair of the rank of |dx| and the rank of
/// |dy|, where (dx, dy) is the patch center's offset from the grid center.
/// On a square 2m x 2m grid this yields m(m+1)/2 classes; literal
/// radius-equality labeling would merge colliding radii (e.g. offsets (1,7)
/// and (5,5)) and produce fewer.
struct PositionMap {
    int grid_h = 0;
    int grid_w = 0;
    int num_classes = 0;            // C_t
    std::vector<int> labels;        // grid_h * grid_w, raster order, in [0, C_t)

    int label(int gy, int gx) const { return labels[static_cast<size_t>(gy) * grid_w + gx]; }
};

/// Requires p | h, p | w and an even-sided grid.
PositionMap build_position_map(int h, int w, int p);

/// A seeded bijection on [0, n) plus its inverse: shuffled[i] = orig[perm[i]].
struct ShufflePermutation {
    std::vector<int> perm;
    std::vector<int> inverse;
    uint64_t seed = 0;

    template <typename T>
    std::vector<T> apply(const std::vector<T>& rows) const {
        std::vector<T> out(rows.size());
        for (size_t i = 0; i < perm.size(); ++i) out[i] = rows[perm[i]];
        return out;
    }
};

/// Uniform Fisher-Yates permutation, deterministic in the seed.
ShufflePermutation make_shuffle(int n, uint64_t seed);

/// Draws k1 in [0.7, 1.0], k2 in [-0.20, 0.05], k3 in [-0.02, 0.02],
/// k4 in [-0.005, 0.005], rejecting non-monotone draws (at most 1000 tries).
DistortionParams sample_params(uint64_t seed);

/// One dataset item. `clean` is the resized distortion-free source, kept as
/// the reference for evaluation.
struct SampleRecord {
    std::string id;
    std::string source_id;
    ImageU8 distorted;
    ImageU8 clean;
    FlowField flow_gt;
    ValidityMask mask_gt;
    std::array<double, 4> params{};
};

struct ManifestRecord {
    std::string id;
    std::string source_id;
    std::array<double, 4> params{};
    std::string distorted_file;
    std::string clean_file;
    std::string flow_file;
    std::string mask_file;
};

struct Manifest {
    int version = 1;
    int count = 0;
    int image_size = 256;
    int patch_size = 16;
    uint64_t seed = 0;
    std::vector<ManifestRecord> records;
};

/// Source image provider for synthesis; either a directory of PNGs or the
/// built-in procedural generators.
class ImageCollection {
public:
    /// Procedural sources. `smooth_fraction` of them are interpolation-friendly.
    static ImageCollection procedural(int count, uint64_t seed, double smooth_fraction = 0.5);
    /// All PNGs in a directory (sorted by filename).
    static ImageCollection from_directory(const std::string& dir);

    int size() const { return count_; }
    /// The i-th source, resized to size x size.
    Image get(int i, int size) const;
    std::string id(int i) const;

private:
    ImageCollection() = default;
    int count_ = 0;
    uint64_t seed_ = 0;
    double smooth_fraction_ = 0.5;
    std::vector<std::string> paths_;  // empty for procedural collections
};

/// Writes `count` records (distorted + clean images, GT flow, GT mask) and a
/// manifest.json into out_dir. Deterministic in (sources, count, seed).
Manifest synthesize_dataset(const ImageCollection& sources, int count, uint64_t seed,
                            const std::string& out_dir, int image_size = 256,
                            int patch_size = 16);

Manifest load_manifest(const std::string& dataset_dir);
SampleRecord load_record(const std::string& dataset_dir, const ManifestRecord& rec);

}  // namespace sfir
