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

#include "sfir/rectify.hpp"

#include <chrono>

namespace sfir {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Bilinear interpolation of a multi-channel float field stored HxWxC.
std::vector<float> resize_field(const std::vector<float>& in, int h, int w, int c,
                                int out_h, int out_w) {
    if (out_h == h && out_w == w) return in;
    std::vector<float> out(static_cast<size_t>(out_h) * out_w * c);
    Image wrap;  // reuse the image sampler; fields are small
    wrap.height = h;
    wrap.width = w;
    wrap.channels = c;
    wrap.data = in;
    for (int y = 0; y < out_h; ++y) {
        const double ny = pixel_to_norm_y(y, out_h);
        for (int x = 0; x < out_w; ++x) {
            const double nx = pixel_to_norm_x(x, out_w);
            sample_bilinear(wrap, nx, ny, out.data() + (static_cast<size_t>(y) * out_w + x) * c);
        }
    }
    return out;
}

}  // namespace

RectifyResult rectify_image(const Rectifier& model, const Image& input) {
    SFIR_CHECK(input.height >= 64 && input.width >= 64,
               "rectify: input must be at least 64x64");
    SFIR_CHECK(input.channels == 3, "rectify: input must be HxWx3");
    SFIR_CHECK(model.stage() == Stage::kFinetune,
               "rectify: checkpoint is not a fine-tuned (flow-head) model");
    const int net = model.config().image_size;
    RectifyResult res;

    auto t0 = std::chrono::steady_clock::now();
    const Image small = resize_bilinear(input, net, net);
    res.timing.prep_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    ad::TensorT<float> flow_net, conf_net;
    {
        ad::NoGradGuard no_grad;
        auto e_o = model.embed_image(small);
        auto e_r = model.encode(e_o);
        flow_net = model.fpm(e_r).flow_full.value();  // [net,net,2]
        conf_net = model.brm(e_r).value();            // [net,net,1]
    }
    res.timing.forward_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const int oh = input.height, ow = input.width;
    res.flow.height = oh;
    res.flow.width = ow;
    res.flow.data = resize_field(flow_net.data, net, net, 2, oh, ow);
    const std::vector<float> conf = resize_field(conf_net.data, net, net, 1, oh, ow);
    res.mask = binarize_confidence(conf, oh, ow, model.config().sigma);
    res.output = warp(input, res.flow, res.mask);
    res.timing.warp_ms = ms_since(t0);
    return res;
}

}  // namespace sfir
