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

#include <vector>

#include "sfir/autodiff.hpp"
#include "sfir/geometry.hpp"

namespace sfir {

/// Multi-positive InfoNCE over unit-norm rows p [N,D]:
///   l_i = -log( sum_{j in N_i} exp(p_i.p_j / tau) / sum_{k != i} exp(p_i.p_k / tau) )
/// where N_i are the other rows sharing label i. Total is the sum of l_i.
/// Log-sum-exp stabilized. A label class of size 1 is a hard error.
template <typename S>
ad::VarT<S> contrastive_loss(const ad::VarT<S>& p, const std::vector<int>& labels,
                             double tau) {
    SFIR_CHECK(p.value().rank() == 2, "contrastive_loss: features must be [N,D]");
    SFIR_CHECK(tau > 0.0, "contrastive_loss: tau must be positive");
    const int n = p.value().dim(0);
    SFIR_CHECK(static_cast<int>(labels.size()) == n,
               "contrastive_loss: labels length does not match rows");

    std::vector<int> class_size;
    for (int l : labels) {
        SFIR_CHECK(l >= 0, "contrastive_loss: negative label");
        if (l >= static_cast<int>(class_size.size())) class_size.resize(l + 1, 0);
        ++class_size[l];
    }
    for (int i = 0; i < n; ++i)
        SFIR_CHECK(class_size[labels[i]] >= 2,
                   "contrastive_loss: label class " + std::to_string(labels[i]) +
                       " has a single member; l_i is undefined");

    ad::TensorT<S> pos_mask({n, n});
    ad::TensorT<S> all_mask({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            all_mask.data[static_cast<size_t>(i) * n + j] = S(1);
            if (labels[i] == labels[j])
                pos_mask.data[static_cast<size_t>(i) * n + j] = S(1);
        }

    auto sims = ad::affine(ad::matmul(p, ad::permute(p, {1, 0})),
                           static_cast<S>(1.0 / tau), S(0));
    auto lse_all = ad::masked_lse(sims, all_mask);
    auto lse_pos = ad::masked_lse(sims, pos_mask);
    return ad::sum(ad::sub(lse_all, lse_pos));
}

/// Softmax cross-entropy summed over the N rows of logits [N, C_t].
template <typename S>
ad::VarT<S> position_loss(const ad::VarT<S>& logits, const std::vector<int>& labels) {
    SFIR_CHECK(logits.value().rank() == 2, "position_loss: logits must be [N,C]");
    const int n = logits.value().dim(0), c = logits.value().dim(1);
    SFIR_CHECK(static_cast<int>(labels.size()) == n,
               "position_loss: labels length does not match rows");
    ad::TensorT<S> onehot({n, c});
    for (int i = 0; i < n; ++i) {
        SFIR_CHECK(labels[i] >= 0 && labels[i] < c,
                   "position_loss: label " + std::to_string(labels[i]) +
                       " out of range [0, " + std::to_string(c) + ")");
        onehot.data[static_cast<size_t>(i) * c + labels[i]] = S(1);
    }
    auto lse = ad::masked_lse(logits, ad::TensorT<S>::full({n, c}, S(1)));
    auto picked = ad::sum(ad::mul(logits, ad::VarT<S>::constant(std::move(onehot))));
    return ad::sub(ad::sum(lse), picked);
}

/// L1 between the masked prediction and the pre-masked ground truth:
/// || f_b * M_gt - f_gt ||_1, reduced to the mean per valid element (both
/// channels of every mask=1 pixel) unless sum reduction is requested.
template <typename S>
ad::VarT<S> flow_loss(const ad::VarT<S>& flow, const FlowField& flow_gt,
                      const ValidityMask& mask_gt, bool mean_reduction = true) {
    const int h = flow_gt.height, w = flow_gt.width;
    SFIR_CHECK(flow.value().rank() == 3 && flow.value().dim(0) == h &&
                   flow.value().dim(1) == w && flow.value().dim(2) == 2,
               "flow_loss: prediction shape " + ad::shape_str(flow.value().shape) +
                   " does not match ground truth");
    SFIR_CHECK(mask_gt.height == h && mask_gt.width == w, "flow_loss: mask shape mismatch");

    const size_t valid = mask_gt.count();
    if (valid == 0) return ad::VarT<S>::constant(ad::TensorT<S>::scalar(S(0)));

    ad::TensorT<S> mask3({h, w, 2});
    ad::TensorT<S> gt({h, w, 2});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask_gt.at(y, x)) continue;
            const size_t o = (static_cast<size_t>(y) * w + x) * 2;
            mask3.data[o] = mask3.data[o + 1] = S(1);
            gt.data[o] = static_cast<S>(flow_gt.fx(y, x));
            gt.data[o + 1] = static_cast<S>(flow_gt.fy(y, x));
        }
    auto diff = ad::sub(ad::mul(flow, ad::VarT<S>::constant(std::move(mask3))),
                        ad::VarT<S>::constant(std::move(gt)));
    auto total = ad::sum(ad::abs(diff));
    if (!mean_reduction) return total;
    return ad::affine(total, S(1) / static_cast<S>(2 * valid), S(0));
}

/// Binary cross-entropy between the predicted confidence map (clamped to
/// [1e-7, 1-1e-7]) and the 0/1 ground-truth mask, averaged over all H*W
/// pixels unless sum reduction is requested.
template <typename S>
ad::VarT<S> mask_loss(const ad::VarT<S>& confidence, const ValidityMask& mask_gt,
                      bool mean_reduction = true) {
    const int h = mask_gt.height, w = mask_gt.width;
    SFIR_CHECK(confidence.value().rank() == 3 && confidence.value().dim(0) == h &&
                   confidence.value().dim(1) == w && confidence.value().dim(2) == 1,
               "mask_loss: confidence shape " + ad::shape_str(confidence.value().shape) +
                   " does not match ground truth");
    ad::TensorT<S> y({h, w, 1});
    ad::TensorT<S> one_minus_y({h, w, 1});
    for (size_t i = 0; i < mask_gt.data.size(); ++i) {
        y.data[i] = static_cast<S>(mask_gt.data[i]);
        one_minus_y.data[i] = S(1) - y.data[i];
    }
    auto pred = ad::clamp(confidence, static_cast<S>(1e-7), static_cast<S>(1.0 - 1e-7));
    auto pos = ad::mul(ad::log(pred), ad::VarT<S>::constant(std::move(y)));
    auto neg = ad::mul(ad::log(ad::affine(pred, S(-1), S(1))),
                       ad::VarT<S>::constant(std::move(one_minus_y)));
    auto total = ad::sum(ad::add(pos, neg));
    const S scale = mean_reduction ? S(-1) / static_cast<S>(h * w) : S(-1);
    return ad::affine(total, scale, S(0));
}

}  // namespace sfir
