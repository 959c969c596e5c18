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

#include "sfir/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sfir {

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'S', 'F', 'I', 'R'};
constexpr uint8_t kVersion = 0x01;
}  // namespace

void write_tensor_file(const std::string& path, const TensorFile& t) {
    SFIR_CHECK(t.dims.size() <= 255, "tensor rank exceeds format limit");
    const size_t n = t.numel();
    if (t.dtype == TensorFile::Dtype::kF32)
        SFIR_CHECK(t.f32.size() == n, "f32 payload size does not match dims");
    else
        SFIR_CHECK(t.u8.size() == n, "u8 payload size does not match dims");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open tensor file for writing: " + path);
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    out.put(static_cast<char>(t.dtype));
    out.put(static_cast<char>(t.dims.size()));
    for (uint32_t d : t.dims) out.write(reinterpret_cast<const char*>(&d), 4);
    if (t.dtype == TensorFile::Dtype::kF32)
        out.write(reinterpret_cast<const char*>(t.f32.data()),
                  static_cast<std::streamsize>(n * sizeof(float)));
    else
        out.write(reinterpret_cast<const char*>(t.u8.data()),
                  static_cast<std::streamsize>(n));
    if (!out) throw IoError("tensor file write failed: " + path);
}

TensorFile read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad tensor file magic: " + path);
    const int version = in.get();
    if (version != kVersion) throw IoError("unsupported tensor file version: " + path);
    const int dtype = in.get();
    if (dtype != 0x01 && dtype != 0x02) throw IoError("unknown tensor dtype: " + path);
    const int rank = in.get();
    if (rank < 0 || !in) throw IoError("truncated tensor header: " + path);

    TensorFile t;
    t.dtype = static_cast<TensorFile::Dtype>(dtype);
    t.dims.resize(static_cast<size_t>(rank));
    for (auto& d : t.dims) in.read(reinterpret_cast<char*>(&d), 4);
    if (!in) throw IoError("truncated tensor dims: " + path);

    const size_t n = t.numel();
    if (t.dtype == TensorFile::Dtype::kF32) {
        t.f32.resize(n);
        in.read(reinterpret_cast<char*>(t.f32.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        t.u8.resize(n);
        in.read(reinterpret_cast<char*>(t.u8.data()), static_cast<std::streamsize>(n));
    }
    if (!in) throw IoError("truncated tensor payload: " + path);
    return t;
}

void write_f32_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                      const std::vector<float>& data) {
    TensorFile t;
    t.dtype = TensorFile::Dtype::kF32;
    t.dims = dims;
    t.f32 = data;
    write_tensor_file(path, t);
}

void write_u8_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                     const std::vector<uint8_t>& data) {
    TensorFile t;
    t.dtype = TensorFile::Dtype::kU8;
    t.dims = dims;
    t.u8 = data;
    write_tensor_file(path, t);
}

}  // namespace sfir
