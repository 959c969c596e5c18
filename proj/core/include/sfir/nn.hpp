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
#include <unordered_map>
#include <vector>

#include "sfir/autodiff.hpp"
#include "sfir/common.hpp"

namespace sfir::nn {

/// Named, ordered parameter set. Names are dot-separated paths; the order is
/// insertion order and is what serialization and the optimizer iterate in.
template <typename S>
struct ParamStoreT {
    std::vector<std::pair<std::string, ad::VarT<S>>> items;
    std::unordered_map<std::string, size_t> index;

    ad::VarT<S>& add(const std::string& name, ad::TensorT<S> init) {
        SFIR_CHECK(!index.count(name), "duplicate parameter name: " + name);
        index.emplace(name, items.size());
        items.emplace_back(name, ad::VarT<S>::leaf(std::move(init), true));
        return items.back().second;
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }
    ad::VarT<S>& get(const std::string& name) {
        auto it = index.find(name);
        SFIR_CHECK(it != index.end(), "unknown parameter: " + name);
        return items[it->second].second;
    }
    const ad::VarT<S>& get(const std::string& name) const {
        auto it = index.find(name);
        SFIR_CHECK(it != index.end(), "unknown parameter: " + name);
        return items[it->second].second;
    }
    void zero_grad() {
        for (auto& [name, v] : items) v.zero_grad();
    }
    size_t size() const { return items.size(); }
};

// Initializers: truncated normal sigma=0.02 for projections, zeros
// for biases, ones for layer-norm gains).

template <typename S>
ad::TensorT<S> init_trunc_normal(std::vector<int> shape, Rng& rng, double sigma = 0.02) {
    ad::TensorT<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.trunc_normal(sigma));
    return t;
}

template <typename S>
ad::TensorT<S> init_zeros(std::vector<int> shape) {
    return ad::TensorT<S>::zeros(std::move(shape));
}

template <typename S>
ad::TensorT<S> init_ones(std::vector<int> shape) {
    return ad::TensorT<S>::full(std::move(shape), S(1));
}

/// Fixed sine-cosine positional embeddings indexed by sequence position:
/// pe[pos, 2i] = sin(pos / 10000^(2i/d)), pe[pos, 2i+1] = cos(same).
template <typename S>
ad::TensorT<S> sincos_positional_embedding(int n, int d) {
    SFIR_CHECK(d % 2 == 0, "positional embedding dim must be even");
    ad::TensorT<S> pe({n, d});
    for (int pos = 0; pos < n; ++pos)
        for (int i = 0; i < d / 2; ++i) {
            const double angle = pos / std::pow(10000.0, (2.0 * i) / d);
            pe.data[static_cast<size_t>(pos) * d + 2 * i] = static_cast<S>(std::sin(angle));
            pe.data[static_cast<size_t>(pos) * d + 2 * i + 1] = static_cast<S>(std::cos(angle));
        }
    return pe;
}

template <typename S>
ad::VarT<S> linear(const ad::VarT<S>& x, const ad::VarT<S>& w, const ad::VarT<S>& b) {
    return ad::add_rowvec(ad::matmul(x, w), b);
}

/// Standard multi-head scaled dot-product self-attention over x [N,D].
/// Permutation-equivariant: there is no positional term inside.
template <typename S>
ad::VarT<S> multi_head_self_attention(const ad::VarT<S>& x, int heads,
                                      const ad::VarT<S>& wq, const ad::VarT<S>& bq,
                                      const ad::VarT<S>& wk, const ad::VarT<S>& bk,
                                      const ad::VarT<S>& wv, const ad::VarT<S>& bv,
                                      const ad::VarT<S>& wo, const ad::VarT<S>& bo) {
    const int n = x.value().dim(0), d = x.value().dim(1);
    SFIR_CHECK(d % heads == 0, "attention: dim " + std::to_string(d) +
                                   " not divisible by heads " + std::to_string(heads));
    const int dh = d / heads;
    auto split = [&](const ad::VarT<S>& t) {
        // [N,D] -> [heads, N, dh]
        return ad::permute(ad::reshape(t, {n, heads, dh}), {1, 0, 2});
    };
    auto q = split(linear(x, wq, bq));
    auto k = split(linear(x, wk, bk));
    auto v = split(linear(x, wv, bv));
    auto scores = ad::affine(ad::bmm(q, ad::permute(k, {0, 2, 1})),
                             static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))), S(0));
    auto attn = ad::softmax_lastdim(scores);           // [heads, N, N]
    auto ctx = ad::bmm(attn, v);                       // [heads, N, dh]
    auto merged = ad::reshape(ad::permute(ctx, {1, 0, 2}), {n, d});
    return linear(merged, wo, bo);
}

/// One-cycle learning-rate schedule: linear warmup from max_lr/25 to max_lr
/// over the first 30% of steps, then cosine decay to max_lr/1e4. The peak is
/// hit exactly at the end of warmup.
inline double one_cycle_lr(int64_t step, int64_t total, double max_lr) {
    SFIR_CHECK(total >= 1 && step >= 0 && step <= total, "one_cycle_lr: step out of range");
    const double start_lr = max_lr / 25.0;
    const double end_lr = max_lr / 1e4;
    const int64_t warm = std::max<int64_t>(1, static_cast<int64_t>(std::llround(0.3 * total)));
    if (step <= warm)
        return start_lr + (max_lr - start_lr) * static_cast<double>(step) / warm;
    const double t = static_cast<double>(step - warm) / static_cast<double>(total - warm);
    return end_lr + (max_lr - end_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

/// Adam with bias correction. Moment buffers are keyed by parameter order;
/// the store must not change between steps.
template <typename S>
class AdamT {
public:
    explicit AdamT(S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStoreT<S>& params, S lr) {
        if (m_.empty()) {
            for (auto& [name, v] : params.items) {
                m_.push_back(ad::TensorT<S>::zeros(v.value().shape));
                v_.push_back(ad::TensorT<S>::zeros(v.value().shape));
            }
        }
        SFIR_CHECK(m_.size() == params.size(), "adam_step: parameter set changed");
        ++t_;
        const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1_), t_));
        const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2_), t_));
        for (size_t p = 0; p < params.size(); ++p) {
            auto& [name, var] = params.items[p];
            auto* node = var.node().get();
            SFIR_CHECK(node->grad_touched,
                       "adam_step: parameter '" + name + "' has no gradient");
            auto& w = node->value.data;
            const auto& g = node->grad.data;
            auto& m = m_[p].data;
            auto& v = v_[p].data;
            for (size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1_ * m[i] + (S(1) - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (S(1) - beta2_) * g[i] * g[i];
                const S mhat = m[i] / bc1;
                const S vhat = v[i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    S beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<ad::TensorT<S>> m_, v_;
};

using ParamStore = ParamStoreT<float>;
using Adam = AdamT<float>;

}  // namespace sfir::nn
