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

#include <benchmark/benchmark.h>

#include "sfir/dataset.hpp"
#include "sfir/geometry.hpp"
#include "sfir/metrics.hpp"
#include "sfir/model.hpp"
#include "sfir/nn.hpp"

using namespace sfir;

namespace {

ad::Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    ad::Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

void BM_gemm_nn(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ad::Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    ad::Tensor c({n, n});
    for (auto _ : state) {
        std::fill(c.data.begin(), c.data.end(), 0.f);
        ad::gemm_nn(n, n, n, a.data.data(), b.data.data(), c.data.data());
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_gemm_nn)->Arg(64)->Arg(256)->Arg(512);

void BM_radial_inverse(benchmark::State& state) {
    const DistortionParams params = sample_params(3);
    double r = 0.0;
    for (auto _ : state) {
        r += 1e-4;
        if (r > 1.2) r = 0.0;
        benchmark::DoNotOptimize(radial_inverse(params, r));
    }
}
BENCHMARK(BM_radial_inverse);

void BM_gt_flow_and_mask(benchmark::State& state) {
    const DistortionParams params = sample_params(5);
    const int size = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto out = gt_flow_and_mask(params, size, size);
        benchmark::DoNotOptimize(out.first.data.data());
    }
}
BENCHMARK(BM_gt_flow_and_mask)->Arg(64)->Arg(256);

void BM_warp(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const Image img = make_test_image(TestImageKind::kTextured, size, size, 7);
    const DistortionParams params = sample_params(9);
    auto [flow, mask] = gt_flow_and_mask(params, size, size);
    for (auto _ : state) {
        const Image out = warp(img, flow, mask);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(size) * size);
}
BENCHMARK(BM_warp)->Arg(256)->Arg(1024);

void BM_attention_forward(benchmark::State& state) {
    const int n = 256, d = 256, heads = 8;
    nn::ParamStoreT<float> params;
    Rng rng(11);
    for (const char* w : {"wq", "wk", "wv", "wo"})
        params.add(w, nn::init_trunc_normal<float>({d, d}, rng));
    for (const char* b : {"bq", "bk", "bv", "bo"}) params.add(b, nn::init_zeros<float>({d}));
    const auto x = ad::Var::constant(random_tensor({n, d}, 13));
    ad::NoGradGuard no_grad;
    for (auto _ : state) {
        auto y = nn::multi_head_self_attention(
            x, heads, params.get("wq"), params.get("bq"), params.get("wk"), params.get("bk"),
            params.get("wv"), params.get("bv"), params.get("wo"), params.get("bo"));
        benchmark::DoNotOptimize(y.value().data.data());
    }
}
BENCHMARK(BM_attention_forward);

void BM_convex_upsample(benchmark::State& state) {
    const int g = 16, p = 16;
    const auto coarse = ad::Var::constant(random_tensor({g, g, 2}, 17));
    auto weights = ad::reshape(
        ad::softmax_lastdim(ad::Var::constant(random_tensor({g * g * p * p, 9}, 19))),
        {g, g, p * p * 9});
    ad::NoGradGuard no_grad;
    for (auto _ : state) {
        auto out = ad::convex_upsample(coarse, weights, p);
        benchmark::DoNotOptimize(out.value().data.data());
    }
}
BENCHMARK(BM_convex_upsample);

void BM_encoder_forward(benchmark::State& state) {
    const ModelConfig cfg = ModelConfig::desk();
    const Rectifier model(cfg, Stage::kPretrain, 21);
    const Image img = make_test_image(TestImageKind::kTextured, cfg.image_size,
                                      cfg.image_size, 23);
    ad::NoGradGuard no_grad;
    for (auto _ : state) {
        auto e_r = model.encode(model.embed_image(img));
        benchmark::DoNotOptimize(e_r.value().data.data());
    }
}
BENCHMARK(BM_encoder_forward);

void BM_ssim(benchmark::State& state) {
    const Image a = make_test_image(TestImageKind::kTextured, 256, 256, 29);
    const Image b = make_test_image(TestImageKind::kSmooth, 256, 256, 31);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_ssim);

}  // namespace

BENCHMARK_MAIN();
