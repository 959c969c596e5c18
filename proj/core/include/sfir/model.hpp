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

#include "sfir/autodiff.hpp"
#include "sfir/dataset.hpp"
#include "sfir/image.hpp"
#include "sfir/nn.hpp"

namespace sfir {

enum class Stage { kPretrain, kFinetune };

struct ModelConfig {
    int image_size = 256;
    int patch_size = 16;
    int dim = 256;           // D
    int depth = 10;          // N_T encoder layers
    int transfer_depth = 8;  // N_F layers initialized from the pretrained model
    int heads = 8;
    int mlp_ratio = 4;
    double sigma = 0.5;  // confidence binarization threshold
    double tau = 0.07;   // contrastive temperature

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * 3; }
    int num_classes() const {
        return build_position_map(image_size, image_size, patch_size).num_classes;
    }

    void validate() const {
        SFIR_CHECK(patch_size > 0 && image_size % patch_size == 0,
                   "ModelConfig: patch size must divide image size");
        SFIR_CHECK(grid() % 2 == 0, "ModelConfig: patch grid must be even-sided");
        SFIR_CHECK(transfer_depth < depth, "ModelConfig: requires N_F < N_T");
        SFIR_CHECK(sigma > 0.0 && sigma < 1.0, "ModelConfig: sigma must be in (0,1)");
        SFIR_CHECK(dim % heads == 0, "ModelConfig: dim must be divisible by heads");
        SFIR_CHECK(dim % 2 == 0, "ModelConfig: dim must be even");
    }

    /// Small configuration for single-core desk runs and tests.
    static ModelConfig desk() {
        ModelConfig c;
        c.image_size = 64;
        c.patch_size = 8;
        c.dim = 64;
        c.depth = 4;
        c.transfer_depth = 3;
        c.heads = 4;
        return c;
    }
};

/// The rectification network. The pretraining stage carries the pretext
/// position head; the fine-tuning stage carries the flow-prediction (FPM)
/// and boundary-refinement (BRM) heads. Both share the patch embedding and
/// the transformer trunk, which is what makes the N_F-layer transfer work.
template <typename S>
class RectifierT {
public:
    RectifierT(const ModelConfig& cfg, Stage stage, uint64_t seed)
        : cfg_(cfg), stage_(stage) {
        cfg_.validate();
        Rng rng(seed);
        build_params(rng);
        pos_embed_ = ad::VarT<S>::constant(
            nn::sincos_positional_embedding<S>(cfg_.tokens(), cfg_.dim));
        coarse_grid_ = ad::VarT<S>::constant(identity_grid(cfg_.grid(), cfg_.grid()));
        fine_grid_ =
            ad::VarT<S>::constant(identity_grid(cfg_.image_size, cfg_.image_size));
    }

    const ModelConfig& config() const { return cfg_; }
    Stage stage() const { return stage_; }
    nn::ParamStoreT<S>& params() { return params_; }
    const nn::ParamStoreT<S>& params() const { return params_; }
    /// Mutable positional-embedding access (tests zero it to probe equivariance).
    ad::VarT<S>& positional_embedding() { return pos_embed_; }

    /// Raster-order patches, each flattened to P*P*3 (rows, columns, channels).
    ad::TensorT<S> image_to_patches(const Image& img) const {
        SFIR_CHECK(img.height == cfg_.image_size && img.width == cfg_.image_size &&
                       img.channels == 3,
                   "image_to_patches: expected " + std::to_string(cfg_.image_size) + "x" +
                       std::to_string(cfg_.image_size) + "x3 input");
        const int p = cfg_.patch_size, g = cfg_.grid();
        ad::TensorT<S> out({cfg_.tokens(), cfg_.patch_dim()});
        size_t o = 0;
        for (int gi = 0; gi < g; ++gi)
            for (int gj = 0; gj < g; ++gj)
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int c = 0; c < 3; ++c)
                            out.data[o++] = static_cast<S>(img.at(gi * p + dy, gj * p + dx, c));
        return out;
    }

    /// E_o = shared linear projection of the flattened patches, with the
    /// projection output scaled by sqrt(D) (the usual transformer convention
    /// that keeps token content comparable to the unit-amplitude positional
    /// embeddings). [N, D]
    ad::VarT<S> embed_patches(const ad::VarT<S>& patches) const {
        SFIR_CHECK(patches.value().rank() == 2 && patches.value().dim(1) == cfg_.patch_dim(),
                   "embed_patches: expected [N, " + std::to_string(cfg_.patch_dim()) + "]");
        const S scale = static_cast<S>(std::sqrt(static_cast<double>(cfg_.dim)));
        return ad::add_rowvec(
            ad::affine(ad::matmul(patches, params_.get("patch_embed.w")), scale, S(0)),
            params_.get("patch_embed.b"));
    }

    ad::VarT<S> embed_image(const Image& img) const {
        return embed_patches(ad::VarT<S>::constant(image_to_patches(img)));
    }

    /// Shuffles rows by perm (pretraining), adds positional embeddings by
    /// sequence index, then runs the N_T encoder layers. [N, D]
    ad::VarT<S> encode(const ad::VarT<S>& e_o, const std::vector<int>* perm = nullptr) const {
        const int n = cfg_.tokens();
        SFIR_CHECK(e_o.value().rank() == 2 && e_o.value().dim(0) == n &&
                       e_o.value().dim(1) == cfg_.dim,
                   "encode: expected [" + std::to_string(n) + ", " + std::to_string(cfg_.dim) +
                       "], got " + ad::shape_str(e_o.value().shape));
        ad::VarT<S> x = e_o;
        if (perm) {
            SFIR_CHECK(static_cast<int>(perm->size()) == n,
                       "encode: permutation length does not match token count");
            x = ad::gather_rows(x, *perm);
        }
        x = ad::add(x, pos_embed_);
        for (int layer = 0; layer < cfg_.depth; ++layer) {
            const std::string b = "enc." + std::to_string(layer) + ".";
            auto normed = ad::layer_norm(x, params_.get(b + "ln1.g"), params_.get(b + "ln1.b"));
            auto attn = nn::multi_head_self_attention(
                normed, cfg_.heads, params_.get(b + "attn.wq"), params_.get(b + "attn.bq"),
                params_.get(b + "attn.wk"), params_.get(b + "attn.bk"),
                params_.get(b + "attn.wv"), params_.get(b + "attn.bv"),
                params_.get(b + "attn.wo"), params_.get(b + "attn.bo"));
            x = ad::add(x, attn);
            auto normed2 = ad::layer_norm(x, params_.get(b + "ln2.g"), params_.get(b + "ln2.b"));
            auto hidden = ad::gelu(
                nn::linear(normed2, params_.get(b + "mlp.w1"), params_.get(b + "mlp.b1")));
            auto mlp = nn::linear(hidden, params_.get(b + "mlp.w2"), params_.get(b + "mlp.b2"));
            x = ad::add(x, mlp);
        }
        return x;
    }

    /// Pretext classification head: layer-norm then linear to C_t logits.
    ad::VarT<S> position_logits(const ad::VarT<S>& e_r) const {
        SFIR_CHECK(stage_ == Stage::kPretrain, "position head exists only in pretraining");
        auto normed =
            ad::layer_norm(e_r, params_.get("head.pos.ln.g"), params_.get("head.pos.ln.b"));
        return nn::linear(normed, params_.get("head.pos.fc.w"), params_.get("head.pos.fc.b"));
    }

    /// Contrastive representations p_i: rows of E_r scaled to the unit sphere.
    ad::VarT<S> contrastive_features(const ad::VarT<S>& e_r) const {
        return ad::l2_normalize(e_r);
    }

    struct FpmOut {
        ad::VarT<S> flow_full;    // [H, W, 2] absolute normalized source coords (f_b)
        ad::VarT<S> coarse_flow;  // [g, g, 2] absolute coarse flow (f_m)
    };

    /// Flow prediction: coarse displacement + learned convex upsampling. The
    /// upsampled field is the displacement; the exact full-resolution identity
    /// grid is added afterwards, so zeroed heads yield the identity warp.
    /// E_r rows must be in raster order (a shuffled input is undetectable).
    FpmOut fpm(const ad::VarT<S>& e_r) const {
        SFIR_CHECK(stage_ == Stage::kFinetune, "fpm exists only in fine-tuning");
        const int g = cfg_.grid();
        auto grid = ad::reshape(e_r, {g, g, cfg_.dim});
        auto hidden = ad::gelu(
            ad::conv2d(grid, params_.get("fpm.flow.c1.w"), params_.get("fpm.flow.c1.b")));
        auto disp = ad::conv2d(hidden, params_.get("fpm.flow.c2.w"),
                               params_.get("fpm.flow.c2.b"));  // [g,g,2]
        auto weights = upsample_weights("fpm.up.", grid);
        auto disp_full = ad::convex_upsample(disp, weights, cfg_.patch_size);
        return {ad::add(disp_full, fine_grid_), ad::add(disp, coarse_grid_)};
    }

    /// Boundary refinement: coarse confidence in [0,1] (sigmoid), convex
    /// upsampled to full resolution. Binarize at config.sigma for M_b.
    ad::VarT<S> brm(const ad::VarT<S>& e_r) const {
        SFIR_CHECK(stage_ == Stage::kFinetune, "brm exists only in fine-tuning");
        const int g = cfg_.grid();
        auto grid = ad::reshape(e_r, {g, g, cfg_.dim});
        auto hidden = ad::gelu(
            ad::conv2d(grid, params_.get("brm.conf.c1.w"), params_.get("brm.conf.c1.b")));
        auto conf = ad::sigmoid(ad::conv2d(hidden, params_.get("brm.conf.c2.w"),
                                           params_.get("brm.conf.c2.b")));  // [g,g,1]
        auto weights = upsample_weights("brm.up.", grid);
        return ad::convex_upsample(conf, weights, cfg_.patch_size);  // [H,W,1]
    }

    static ad::TensorT<S> identity_grid(int h, int w) {
        ad::TensorT<S> t({h, w, 2});
        size_t o = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                t.data[o++] = static_cast<S>(pixel_to_norm_x(x, w));
                t.data[o++] = static_cast<S>(pixel_to_norm_y(y, h));
            }
        return t;
    }

private:
    ad::VarT<S> upsample_weights(const std::string& prefix, const ad::VarT<S>& grid) const {
        const int g = cfg_.grid(), p = cfg_.patch_size;
        auto hidden = ad::gelu(
            ad::conv2d(grid, params_.get(prefix + "c1.w"), params_.get(prefix + "c1.b")));
        auto logits = ad::conv2d(hidden, params_.get(prefix + "c2.w"),
                                 params_.get(prefix + "c2.b"));  // [g,g,P*P*9]
        auto soft = ad::softmax_lastdim(ad::reshape(logits, {g * g * p * p, 9}));
        return ad::reshape(soft, {g, g, p * p * 9});
    }

    void build_params(Rng& rng) {
        const int d = cfg_.dim;
        auto tn = [&](std::vector<int> shape) {
            return nn::init_trunc_normal<S>(std::move(shape), rng);
        };
        params_.add("patch_embed.w", tn({cfg_.patch_dim(), d}));
        params_.add("patch_embed.b", nn::init_zeros<S>({d}));
        for (int layer = 0; layer < cfg_.depth; ++layer) {
            const std::string b = "enc." + std::to_string(layer) + ".";
            params_.add(b + "ln1.g", nn::init_ones<S>({d}));
            params_.add(b + "ln1.b", nn::init_zeros<S>({d}));
            for (const char* m : {"wq", "wk", "wv", "wo"}) params_.add(b + "attn." + m, tn({d, d}));
            for (const char* m : {"bq", "bk", "bv", "bo"})
                params_.add(b + "attn." + m, nn::init_zeros<S>({d}));
            params_.add(b + "ln2.g", nn::init_ones<S>({d}));
            params_.add(b + "ln2.b", nn::init_zeros<S>({d}));
            params_.add(b + "mlp.w1", tn({d, d * cfg_.mlp_ratio}));
            params_.add(b + "mlp.b1", nn::init_zeros<S>({d * cfg_.mlp_ratio}));
            params_.add(b + "mlp.w2", tn({d * cfg_.mlp_ratio, d}));
            params_.add(b + "mlp.b2", nn::init_zeros<S>({d}));
        }
        if (stage_ == Stage::kPretrain) {
            const int ct = cfg_.num_classes();
            params_.add("head.pos.ln.g", nn::init_ones<S>({d}));
            params_.add("head.pos.ln.b", nn::init_zeros<S>({d}));
            params_.add("head.pos.fc.w", tn({d, ct}));
            params_.add("head.pos.fc.b", nn::init_zeros<S>({ct}));
        } else {
            const int p9 = cfg_.patch_size * cfg_.patch_size * 9;
            // Output convs start at zero: identity flow, uniform upsample
            // weights, confidence 0.5.
            auto head = [&](const std::string& prefix, int cout) {
                params_.add(prefix + "c1.w", tn({3, 3, d, d}));
                params_.add(prefix + "c1.b", nn::init_zeros<S>({d}));
                params_.add(prefix + "c2.w", nn::init_zeros<S>({3, 3, d, cout}));
                params_.add(prefix + "c2.b", nn::init_zeros<S>({cout}));
            };
            head("fpm.flow.", 2);
            head("fpm.up.", p9);
            head("brm.conf.", 1);
            head("brm.up.", p9);
        }
    }

    ModelConfig cfg_;
    Stage stage_;
    nn::ParamStoreT<S> params_;
    ad::VarT<S> pos_embed_;
    ad::VarT<S> coarse_grid_;
    ad::VarT<S> fine_grid_;
};

/// M_b = (M >= sigma); the tie at sigma goes to foreground.
inline ValidityMask binarize_confidence(const std::vector<float>& confidence, int h, int w,
                                        double sigma) {
    SFIR_CHECK(confidence.size() == static_cast<size_t>(h) * w,
               "binarize_confidence: size mismatch");
    ValidityMask mask(h, w);
    const float s = static_cast<float>(sigma);
    for (size_t i = 0; i < confidence.size(); ++i) mask.data[i] = confidence[i] >= s ? 1 : 0;
    return mask;
}

/// Copies the patch embedding and the first n_f encoder layers from
/// `pretrained` into `fresh`; everything else keeps its fresh initialization.
/// A shape mismatch on any copied tensor is a hard error naming the path.
template <typename S>
void transfer_weights(const nn::ParamStoreT<S>& pretrained, nn::ParamStoreT<S>& fresh,
                      int n_f) {
    for (auto& [name, var] : fresh.items) {
        bool copy = name.rfind("patch_embed.", 0) == 0;
        if (name.rfind("enc.", 0) == 0) {
            const size_t dot = name.find('.', 4);
            const int layer = std::stoi(name.substr(4, dot - 4));
            copy = layer < n_f;
        }
        if (!copy) continue;
        SFIR_CHECK(pretrained.has(name),
                   "transfer_weights: pretrained model lacks parameter '" + name + "'");
        const auto& src = pretrained.get(name).value();
        SFIR_CHECK(src.shape == var.value().shape,
                   "transfer_weights: shape mismatch for '" + name + "': " +
                       ad::shape_str(src.shape) + " vs " + ad::shape_str(var.value().shape));
        var.value().data = src.data;
    }
}

using Rectifier = RectifierT<float>;

}  // namespace sfir
