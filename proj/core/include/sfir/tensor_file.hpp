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

// On-disk tensor container: magic "SFIR", version byte 0x01, dtype byte
// (0x01 = f32, 0x02 = u8), rank byte, rank little-endian u32 dims, then the
// row-major little-endian payload.

struct TensorFile {
    enum class Dtype : uint8_t { kF32 = 0x01, kU8 = 0x02 };

    Dtype dtype = Dtype::kF32;
    std::vector<uint32_t> dims;
    std::vector<float> f32;
    std::vector<uint8_t> u8;

    size_t numel() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

void write_tensor_file(const std::string& path, const TensorFile& t);
TensorFile read_tensor_file(const std::string& path);

// Convenience wrappers for the shapes the dataset uses.
void write_f32_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                      const std::vector<float>& data);
void write_u8_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                     const std::vector<uint8_t>& data);

}  // namespace sfir
