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

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "sfir/checkpoint.hpp"
#include "sfir/dataset.hpp"
#include "sfir/gradcheck.hpp"
#include "sfir/losses.hpp"
#include "sfir/metrics.hpp"
#include "sfir/rectify.hpp"
#include "sfir/train.hpp"

namespace fs = std::filesystem;
using namespace sfir;

namespace {

struct ModelFlags {
    int image_size = 256;
    int patch_size = 16;
    int dim = 256;
    int depth = 10;
    int nf = 8;
    int heads = 8;
    bool desk = false;

    ModelConfig to_config() const {
        ModelConfig c = desk ? ModelConfig::desk() : ModelConfig();
        if (!desk) {
            c.image_size = image_size;
            c.patch_size = patch_size;
            c.dim = dim;
            c.depth = depth;
            c.transfer_depth = nf;
            c.heads = heads;
        }
        return c;
    }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--image-size", f.image_size, "Network input resolution");
    cmd->add_option("--patch-size", f.patch_size, "Vision-transformer patch size");
    cmd->add_option("--dim", f.dim, "Token embedding dimension");
    cmd->add_option("--depth", f.depth, "Number of encoder layers");
    cmd->add_option("--nf", f.nf, "Encoder layers initialized from the pretrained model");
    cmd->add_option("--heads", f.heads, "Attention heads");
    cmd->add_flag("--desk", f.desk, "Use the small single-core configuration");
}

Image side_by_side(const Image& a, const Image& b, const Image& c) {
    const int h = a.height, w = a.width;
    Image out(h, 3 * w + 2, 3, 1.f);
    auto blit = [&](const Image& img, int x0) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) out.at(y, x0 + x, ch) = img.at(y, x, ch);
    };
    blit(a, 0);
    blit(b, w + 1);
    blit(c, 2 * w + 2);
    return out;
}

int run_synth(const std::string& out_dir, int count, uint64_t seed, int size, int patch,
              const std::string& sources_dir, double smooth_fraction) {
    ImageCollection sources =
        sources_dir.empty()
            ? ImageCollection::procedural(std::max(count, 8), splitmix64(seed ^ 0xabcdef),
                                          smooth_fraction)
            : ImageCollection::from_directory(sources_dir);
    const Manifest m = synthesize_dataset(sources, count, seed, out_dir, size, patch);
    std::cout << "wrote " << m.count << " records to " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& dataset_dir, const std::string& checkpoint_dir,
             const std::string& out_dir, bool oracle) {
    const Manifest manifest = load_manifest(dataset_dir);
    std::optional<Rectifier> model;
    if (!oracle) {
        SFIR_CHECK(!checkpoint_dir.empty(), "eval: --checkpoint required unless --oracle");
        model.emplace(load_checkpoint(checkpoint_dir));
    }
    fs::create_directories(out_dir);

    MetricReport report;
    for (const auto& rec : manifest.records) {
        const SampleRecord s = load_record(dataset_dir, rec);
        const Image distorted = to_float(s.distorted);
        const Image reference = to_float(s.clean);
        Image rectified;
        ValidityMask mask;
        if (oracle) {
            rectified = warp(distorted, s.flow_gt, s.mask_gt);
            mask = s.mask_gt;
        } else {
            RectifyResult r = rectify_image(*model, distorted);
            rectified = std::move(r.output);
            mask = std::move(r.mask);
        }
        MetricReport::Entry e;
        e.id = rec.id;
        e.psnr = psnr(rectified, reference);
        e.ssim = ssim(rectified, reference);
        e.psnr_masked = psnr_masked(rectified, reference, s.mask_gt);
        report.entries.push_back(e);
        save_png(out_dir + "/" + rec.id + "_compare.png",
                 to_u8(side_by_side(distorted, rectified, reference)));
    }
    report.write_csv(out_dir + "/report.csv");
    std::cout << "images: " << report.count() << "\n"
              << "mean PSNR: " << report.mean_psnr() << " dB\n"
              << "mean SSIM: " << report.mean_ssim() << "\n"
              << "mean PSNR (GT mask): " << report.mean_psnr_masked() << " dB\n"
              << "report: " << out_dir << "/report.csv\n";
    return 0;
}

int run_selfcheck() {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::cout << (ok ? "[ ok ] " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };

    {
        const int expected[4][2] = {{8, 136}, {16, 36}, {32, 10}, {64, 3}};
        bool ok = true;
        for (auto [p, ct] : expected)
            ok = ok && build_position_map(256, 256, p).num_classes == ct;
        check("position-map class counts (256x256, P=8/16/32/64)", ok);
    }
    {
        bool ok = true;
        Rng rng(7);
        for (int trial = 0; trial < 100 && ok; ++trial) {
            const DistortionParams params = sample_params(rng.next_u64());
            for (int i = 0; i < 64; ++i) {
                const double r = kMaxNormRadius * i / 63.0;
                const auto back = radial_inverse(params, radial_forward(params, r));
                if (!back || std::abs(*back - r) > 1e-6) {
                    ok = false;
                    break;
                }
            }
        }
        check("radial forward/inverse round-trip (100 models x 64 radii)", ok);
    }
    {
        Rng rng(11);
        std::vector<ad::VarT<double>> inputs = {
            ad::VarT<double>::leaf(gradcheck::random_tensor({5, 4}, rng), true),
            ad::VarT<double>::leaf(gradcheck::random_tensor({4, 6}, rng), true)};
        auto r = gradcheck::check(inputs, [&] {
            return ad::mean(ad::gelu(ad::matmul(inputs[0], inputs[1])));
        });
        check("gradient: matmul+gelu", r.max_rel_err <= 1e-4);
    }
    {
        Rng rng(13);
        ModelConfig cfg;
        cfg.image_size = 32;
        cfg.patch_size = 8;
        cfg.dim = 16;
        cfg.depth = 2;
        cfg.transfer_depth = 1;
        cfg.heads = 2;
        RectifierT<double> model(cfg, Stage::kFinetune, 5);
        std::vector<ad::VarT<double>> inputs = {
            ad::VarT<double>::leaf(gradcheck::random_tensor({cfg.tokens(), cfg.dim}, rng), true)};
        auto [flow, mask] = gt_flow_and_mask(sample_params(3), cfg.image_size, cfg.image_size);
        auto r = gradcheck::check_directional(
            inputs,
            [&] {
                auto out = model.fpm(inputs[0]);
                return flow_loss(out.flow_full, flow, mask);
            },
            /*seed=*/17, /*directions=*/4);
        check("gradient: FPM head + flow loss (directional)", r.max_rel_err <= 1e-4);
    }
    {
        Rng rng(19);
        auto feats = gradcheck::random_tensor({8, 6}, rng);
        std::vector<ad::VarT<double>> inputs = {ad::VarT<double>::leaf(feats, true)};
        const std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};
        auto r = gradcheck::check(inputs, [&] {
            return contrastive_loss(ad::l2_normalize(inputs[0]), labels, 0.07);
        });
        check("gradient: contrastive loss", r.max_rel_err <= 1e-4);
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fisheye image rectification toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize a distorted dataset with GT flows");
    std::string synth_out = "dataset";
    int synth_count = 16;
    uint64_t synth_seed = 0;
    int synth_size = 256, synth_patch = 16;
    std::string synth_sources;
    double synth_smooth = 0.5;
    synth->add_option("--out", synth_out, "Output dataset directory");
    synth->add_option("--count", synth_count, "Number of records");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--size", synth_size, "Image size");
    synth->add_option("--patch-size", synth_patch, "Patch size recorded in the manifest");
    synth->add_option("--sources", synth_sources, "Directory of source PNGs (default: procedural)");
    synth->add_option("--smooth-fraction", synth_smooth,
                      "Fraction of smooth procedural sources (rest are textured)");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
    TrainConfig pre_cfg;
    ModelFlags pre_model;
    bool pre_no_shuffle = false;
    pre->add_option("--dataset", pre_cfg.dataset_dir, "Dataset directory")->required();
    pre->add_option("--out", pre_cfg.checkpoint_dir, "Checkpoint output directory")->required();
    pre->add_option("--epochs", pre_cfg.epochs, "Training epochs");
    pre->add_option("--batch", pre_cfg.batch_size, "Batch size");
    pre->add_option("--seed", pre_cfg.seed, "RNG seed");
    pre->add_option("--max-lr", pre_cfg.max_lr, "One-cycle peak learning rate");
    pre->add_option("--max-steps", pre_cfg.max_steps, "Hard step cap (0 = all epochs)");
    pre->add_flag("--no-shuffle", pre_no_shuffle, "Disable patch shuffling (ablation)");
    add_model_flags(pre, pre_model);

    // finetune
    auto* fin = app.add_subcommand("finetune", "Rectification fine-tuning");
    TrainConfig fin_cfg;
    ModelFlags fin_model;
    fin->add_option("--dataset", fin_cfg.dataset_dir, "Dataset directory")->required();
    fin->add_option("--out", fin_cfg.checkpoint_dir, "Checkpoint output directory")->required();
    fin->add_option("--checkpoint", fin_cfg.pretrained_dir,
                    "Pretrained checkpoint to transfer N_F layers from");
    fin->add_option("--epochs", fin_cfg.epochs, "Training epochs");
    fin->add_option("--batch", fin_cfg.batch_size, "Batch size");
    fin->add_option("--seed", fin_cfg.seed, "RNG seed");
    fin->add_option("--max-lr", fin_cfg.max_lr, "One-cycle peak learning rate");
    fin->add_option("--max-steps", fin_cfg.max_steps, "Hard step cap (0 = all epochs)");
    add_model_flags(fin, fin_model);

    // rectify
    auto* rec = app.add_subcommand("rectify", "Rectify a fisheye image of any resolution");
    std::string rec_ckpt, rec_image, rec_out = "rectified.png";
    rec->add_option("--checkpoint", rec_ckpt, "Fine-tuned checkpoint directory")->required();
    rec->add_option("--image", rec_image, "Input PNG")->required();
    rec->add_option("--out", rec_out, "Output PNG");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate rectification over a dataset");
    std::string ev_dataset, ev_ckpt, ev_out = "eval_out";
    bool ev_oracle = false;
    ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    ev->add_option("--checkpoint", ev_ckpt, "Fine-tuned checkpoint directory");
    ev->add_option("--out", ev_out, "Report/comparison output directory");
    ev->add_flag("--oracle", ev_oracle, "Warp with ground-truth flow instead of the model");

    // selfcheck
    app.add_subcommand("selfcheck", "Fast internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed())
            return run_synth(synth_out, synth_count, synth_seed, synth_size, synth_patch,
                             synth_sources, synth_smooth);
        if (pre->parsed()) {
            pre_cfg.model = pre_model.to_config();
            pre_cfg.shuffle_patches = !pre_no_shuffle;
            const TrainResult r = pretrain(pre_cfg);
            std::cout << "steps: " << r.steps << "\nfinal L_con: " << r.final_mean("L_con")
                      << "\nfinal L_pos: " << r.final_mean("L_pos")
                      << "\ncheckpoint: " << r.final_checkpoint << "\n";
            return 0;
        }
        if (fin->parsed()) {
            fin_cfg.model = fin_model.to_config();
            const TrainResult r = finetune(fin_cfg);
            std::cout << "steps: " << r.steps << "\nfinal L_flow: " << r.final_mean("L_flow")
                      << "\nfinal L_mask: " << r.final_mean("L_mask")
                      << "\ncheckpoint: " << r.final_checkpoint << "\n";
            return 0;
        }
        if (rec->parsed()) {
            const Rectifier model = load_checkpoint(rec_ckpt);
            const Image input = to_float(load_png(rec_image));
            const RectifyResult r = rectify_image(model, input);
            save_png(rec_out, to_u8(r.output));
            std::cout << "wrote " << rec_out << " (" << input.width << "x" << input.height
                      << "); forward " << r.timing.forward_ms << " ms, warp "
                      << r.timing.warp_ms << " ms\n";
            return 0;
        }
        if (ev->parsed()) return run_eval(ev_dataset, ev_ckpt, ev_out, ev_oracle);
        return run_selfcheck();
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
