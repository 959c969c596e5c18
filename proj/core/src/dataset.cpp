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

#include "sfir/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sfir/tensor_file.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfir {

PositionMap build_position_map(int h, int w, int p) {
    SFIR_CHECK(p > 0 && h % p == 0 && w % p == 0,
               "build_position_map: patch size must divide image dimensions");
    const int gh = h / p, gw = w / p;
    SFIR_CHECK(gh % 2 == 0 && gw % 2 == 0, "build_position_map: grid must be even-sided");

    PositionMap map;
    map.grid_h = gh;
    map.grid_w = gw;
    map.labels.resize(static_cast<size_t>(gh) * gw);

    // rank(|offset|) for cell index i on an even axis of length g: twice the
    // cell center offset from the axis center is 2i - (g-1), an odd integer,
    // so ranks run 0 (innermost) .. g/2-1 (outermost).
    auto rank = [](int i, int g) { return (std::abs(2 * i - (g - 1)) - 1) / 2; };

    int next = 0;
    std::vector<int> lut;  // triangular pair index -> dense class id
    auto pair_id = [&](int a, int b) {
        const int lo = std::min(a, b), hi = std::max(a, b);
        const int tri = hi * (hi + 1) / 2 + lo;
        if (tri >= static_cast<int>(lut.size())) lut.resize(tri + 1, -1);
        if (lut[tri] < 0) lut[tri] = next++;
        return lut[tri];
    };

    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            map.labels[static_cast<size_t>(gy) * gw + gx] = pair_id(rank(gx, gw), rank(gy, gh));
    map.num_classes = next;
    return map;
}

ShufflePermutation make_shuffle(int n, uint64_t seed) {
    SFIR_CHECK(n >= 2, "make_shuffle: n must be >= 2");
    ShufflePermutation s;
    s.seed = seed;
    s.perm.resize(n);
    for (int i = 0; i < n; ++i) s.perm[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = rng.uniform_int(i + 1);
        std::swap(s.perm[i], s.perm[j]);
    }
    s.inverse.resize(n);
    for (int i = 0; i < n; ++i) s.inverse[s.perm[i]] = i;
    return s;
}

DistortionParams sample_params(uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::array<double, 4> k = {
            rng.uniform(0.7, 1.0),
            rng.uniform(-0.20, 0.05),
            rng.uniform(-0.02, 0.02),
            rng.uniform(-0.005, 0.005),
        };
        if (DistortionParams::is_monotone(k)) return DistortionParams(k);
    }
    throw Error("sample_params: 1000 consecutive non-monotone draws; ranges misconfigured");
}

ImageCollection ImageCollection::procedural(int count, uint64_t seed, double smooth_fraction) {
    SFIR_CHECK(count > 0, "ImageCollection: count must be positive");
    ImageCollection c;
    c.count_ = count;
    c.seed_ = seed;
    c.smooth_fraction_ = smooth_fraction;
    return c;
}

ImageCollection ImageCollection::from_directory(const std::string& dir) {
    ImageCollection c;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".png") c.paths_.push_back(entry.path().string());
    }
    std::sort(c.paths_.begin(), c.paths_.end());
    if (c.paths_.empty()) throw IoError("no .png sources found in: " + dir);
    c.count_ = static_cast<int>(c.paths_.size());
    return c;
}

Image ImageCollection::get(int i, int size) const {
    SFIR_CHECK(i >= 0 && i < count_, "ImageCollection: index out of range");
    if (!paths_.empty()) {
        const Image img = to_float(load_png(paths_[i]));
        return resize_bilinear(img, size, size);
    }
    const bool smooth = i < static_cast<int>(count_ * smooth_fraction_ + 0.5);
    return make_test_image(smooth ? TestImageKind::kSmooth : TestImageKind::kTextured,
                           size, size, splitmix64(seed_) + static_cast<uint64_t>(i));
}

std::string ImageCollection::id(int i) const {
    if (!paths_.empty()) return fs::path(paths_[i]).stem().string();
    const bool smooth = i < static_cast<int>(count_ * smooth_fraction_ + 0.5);
    return (smooth ? "proc_smooth_" : "proc_textured_") + std::to_string(i);
}

namespace {

std::vector<float> flow_to_vec(const FlowField& f) { return f.data; }

}  // namespace

Manifest synthesize_dataset(const ImageCollection& sources, int count, uint64_t seed,
                            const std::string& out_dir, int image_size, int patch_size) {
    SFIR_CHECK(sources.size() > 0, "synthesize_dataset: sources empty");
    SFIR_CHECK(count > 0, "synthesize_dataset: count must be positive");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + out_dir);

    Manifest m;
    m.count = count;
    m.image_size = image_size;
    m.patch_size = patch_size;
    m.seed = seed;

    Rng rng(seed);
    const uint32_t hw = static_cast<uint32_t>(image_size);
    for (int i = 0; i < count; ++i) {
        const uint64_t param_seed = rng.fork(static_cast<uint64_t>(i) * 2 + 1);
        const int src_index = rng.uniform_int(sources.size());

        const DistortionParams params = sample_params(param_seed);
        const Image clean = sources.get(src_index, image_size);
        const Image distorted = distort_image(clean, params);
        auto [flow, mask] = gt_flow_and_mask(params, image_size, image_size);

        ManifestRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "rec_%05d", i);
        rec.id = idbuf;
        rec.source_id = sources.id(src_index);
        rec.params = params.k();
        rec.distorted_file = rec.id + "_distorted.sfir";
        rec.clean_file = rec.id + "_clean.sfir";
        rec.flow_file = rec.id + "_flow.sfir";
        rec.mask_file = rec.id + "_mask.sfir";

        const std::string base = out_dir + "/";
        const ImageU8 d8 = to_u8(distorted);
        const ImageU8 c8 = to_u8(clean);
        write_u8_tensor(base + rec.distorted_file, {hw, hw, 3}, d8.data);
        write_u8_tensor(base + rec.clean_file, {hw, hw, 3}, c8.data);
        write_f32_tensor(base + rec.flow_file, {hw, hw, 2}, flow_to_vec(flow));
        write_u8_tensor(base + rec.mask_file, {hw, hw, 1}, mask.data);

        m.records.push_back(std::move(rec));
    }

    json j;
    j["version"] = m.version;
    j["count"] = m.count;
    j["image_size"] = m.image_size;
    j["patch_size"] = m.patch_size;
    j["seed"] = m.seed;
    j["records"] = json::array();
    for (const auto& rec : m.records) {
        json r;
        r["id"] = rec.id;
        r["source_id"] = rec.source_id;
        r["params"] = rec.params;
        r["files"] = {{"distorted", rec.distorted_file},
                      {"clean", rec.clean_file},
                      {"flow", rec.flow_file},
                      {"mask", rec.mask_file}};
        j["records"].push_back(std::move(r));
    }
    std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + out_dir + "/manifest.json");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("manifest write failed: " + out_dir + "/manifest.json");
    return m;
}

Manifest load_manifest(const std::string& dataset_dir) {
    const std::string path = dataset_dir + "/manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + path + ": " + e.what());
    }
    Manifest m;
    m.version = j.at("version").get<int>();
    m.count = j.at("count").get<int>();
    m.image_size = j.at("image_size").get<int>();
    m.patch_size = j.at("patch_size").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& r : j.at("records")) {
        ManifestRecord rec;
        rec.id = r.at("id").get<std::string>();
        rec.source_id = r.at("source_id").get<std::string>();
        const auto& params = r.at("params");
        for (int i = 0; i < 4; ++i) rec.params[i] = params.at(i).get<double>();
        rec.distorted_file = r.at("files").at("distorted").get<std::string>();
        rec.clean_file = r.at("files").at("clean").get<std::string>();
        rec.flow_file = r.at("files").at("flow").get<std::string>();
        rec.mask_file = r.at("files").at("mask").get<std::string>();
        m.records.push_back(std::move(rec));
    }
    return m;
}

SampleRecord load_record(const std::string& dataset_dir, const ManifestRecord& rec) {
    SampleRecord s;
    s.id = rec.id;
    s.source_id = rec.source_id;
    s.params = rec.params;

    const std::string base = dataset_dir + "/";
    auto expect = [](const TensorFile& t, TensorFile::Dtype dtype, size_t rank,
                     const std::string& path) {
        if (t.dtype != dtype || t.dims.size() != rank)
            throw IoError("unexpected tensor layout in " + path);
    };

    const std::string dpath = base + rec.distorted_file;
    TensorFile d = read_tensor_file(dpath);
    expect(d, TensorFile::Dtype::kU8, 3, dpath);
    s.distorted = {static_cast<int>(d.dims[0]), static_cast<int>(d.dims[1]),
                   static_cast<int>(d.dims[2]), std::move(d.u8)};

    const std::string cpath = base + rec.clean_file;
    TensorFile c = read_tensor_file(cpath);
    expect(c, TensorFile::Dtype::kU8, 3, cpath);
    s.clean = {static_cast<int>(c.dims[0]), static_cast<int>(c.dims[1]),
               static_cast<int>(c.dims[2]), std::move(c.u8)};

    const std::string fpath = base + rec.flow_file;
    TensorFile f = read_tensor_file(fpath);
    expect(f, TensorFile::Dtype::kF32, 3, fpath);
    s.flow_gt.height = static_cast<int>(f.dims[0]);
    s.flow_gt.width = static_cast<int>(f.dims[1]);
    s.flow_gt.data = std::move(f.f32);

    const std::string mpath = base + rec.mask_file;
    TensorFile mk = read_tensor_file(mpath);
    expect(mk, TensorFile::Dtype::kU8, 3, mpath);
    s.mask_gt.height = static_cast<int>(mk.dims[0]);
    s.mask_gt.width = static_cast<int>(mk.dims[1]);
    s.mask_gt.data = std::move(mk.u8);
    return s;
}

}  // namespace sfir
