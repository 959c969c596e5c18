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

#include "sfir/geometry.hpp"
#include "sfir/model.hpp"

namespace sfir {

struct RectifyTiming {
    double prep_ms = 0.0;     // downsampling to the model resolution
    double forward_ms = 0.0;  // embed + encode + FPM + BRM (resolution-independent)
    double warp_ms = 0.0;     // flow/mask interpolation + full-resolution warp
};

struct RectifyResult {
    Image output;       // same dimensions as the input
    FlowField flow;     // upsampled to input resolution
    ValidityMask mask;  // confidence binarized at config.sigma
    RectifyTiming timing;
};

/// Arbitrary-resolution rectification: the network runs at its fixed training
/// resolution; the predicted flow and confidence are bilinearly interpolated
/// to the input size (flow values are normalized coordinates, so they are
/// resolution-invariant) and the original image is warped at full resolution.
RectifyResult rectify_image(const Rectifier& model, const Image& input);

}  // namespace sfir
