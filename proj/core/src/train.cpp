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

#include "sfir/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sfir/checkpoint.hpp"
#include "sfir/losses.hpp"

namespace fs = std::filesystem;

namespace sfir {

namespace {

struct LoadedDataset {
    std::vector<Image> distorted;
    std::vector<FlowField> flows;
    std::vector<ValidityMask> masks;
    int image_size = 0;
};

LoadedDataset load_training_data(const std::string& dir, bool need_annotations) {
    const Manifest manifest = load_manifest(dir);
    SFIR_CHECK(manifest.count > 0, "training dataset is empty: " + dir);
    LoadedDataset out;
    out.image_size = manifest.image_size;
    for (const auto& rec : manifest.records) {
        SampleRecord s = load_record(dir, rec);
        out.distorted.push_back(to_float(s.distorted));
        if (need_annotations) {
            out.flows.push_back(std::move(s.flow_gt));
            out.masks.push_back(std::move(s.mask_gt));
        }
    }
    return out;
}

void write_loss_log(const std::string& dir, const std::vector<LossLogEntry>& log) {
    std::ofstream out(dir + "/loss_log.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write loss log: " + dir + "/loss_log.csv");
    out << "step,loss_name,value\n";
    for (const auto& e : log) out << e.step << "," << e.name << "," << e.value << "\n";
    if (!out) throw IoError("loss log write failed: " + dir + "/loss_log.csv");
}

// Keeps the last `keep` epoch checkpoints plus `final`.
void prune_checkpoints(const std::string& dir, int epoch, int keep) {
    for (int old = epoch - keep; old >= 0; --old) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d", old);
        std::error_code ec;
        fs::remove_all(fs::path(dir) / name, ec);
    }
}

std::string epoch_dir(const std::string& dir, int epoch) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
    return (fs::path(dir) / name).string();
}

// Shared two-stage loop: per-epoch data order, per-step batch assembly,
// one-cycle Adam, per-epoch checkpointing, CSV loss logging.
template <typename StepFn>
TrainResult run_training(const TrainConfig& config, Rectifier& model, int sample_count,
                         const char* loss_a, const char* loss_b, StepFn&& step_fn) {
    TrainResult result;
    const int batches_per_epoch =
        (sample_count + config.batch_size - 1) / config.batch_size;
    int64_t total_steps = static_cast<int64_t>(batches_per_epoch) * config.epochs;
    if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);
    SFIR_CHECK(total_steps >= 1, "training would take zero steps");

    Rng order_rng(splitmix64(config.seed ^ 0x6f1db2a94c3e5871ULL));
    nn::AdamT<float> adam;
    int64_t step = 0;
    std::vector<int> order(static_cast<size_t>(sample_count));
    for (int i = 0; i < sample_count; ++i) order[i] = i;

    if (!config.checkpoint_dir.empty()) {
        std::error_code ec;
        fs::create_directories(config.checkpoint_dir, ec);
        if (ec) throw IoError("cannot create checkpoint directory: " + config.checkpoint_dir);
    }

    for (int epoch = 0; epoch < config.epochs && step < total_steps; ++epoch) {
        for (int i = sample_count - 1; i > 0; --i)
            std::swap(order[i], order[order_rng.uniform_int(i + 1)]);
        for (int b = 0; b < batches_per_epoch && step < total_steps; ++b) {
            std::vector<int> batch;
            for (int k = 0; k < config.batch_size; ++k) {
                const int idx = b * config.batch_size + k;
                if (idx < sample_count) batch.push_back(order[idx]);
            }
            auto [la, lb, loss] = step_fn(batch, step);
            if (!std::isfinite(la) || !std::isfinite(lb))
                throw Error("non-finite loss at step " + std::to_string(step));
            ad::backward(loss);
            adam.step(model.params(),
                      static_cast<float>(nn::one_cycle_lr(step, total_steps, config.max_lr)));
            model.params().zero_grad();
            result.log.push_back({step, loss_a, la});
            result.log.push_back({step, loss_b, lb});
            ++step;
        }
        if (!config.checkpoint_dir.empty()) {
            const std::string dir = epoch_dir(config.checkpoint_dir, epoch);
            save_checkpoint(dir, model);
            prune_checkpoints(config.checkpoint_dir, epoch, config.keep_checkpoints);
            result.final_checkpoint = dir;
        }
    }
    if (!config.checkpoint_dir.empty()) {
        const std::string final_dir = (fs::path(config.checkpoint_dir) / "final").string();
        save_checkpoint(final_dir, model);
        result.final_checkpoint = final_dir;
        write_loss_log(config.checkpoint_dir, result.log);
    }
    result.steps = step;
    return result;
}

}  // namespace

double TrainResult::final_mean(const std::string& name, double tail_fraction) const {
    std::vector<double> values;
    for (const auto& e : log)
        if (e.name == name) values.push_back(e.value);
    SFIR_CHECK(!values.empty(), "no logged values for loss: " + name);
    const size_t tail =
        std::max<size_t>(1, static_cast<size_t>(std::ceil(values.size() * tail_fraction)));
    double acc = 0.0;
    for (size_t i = values.size() - tail; i < values.size(); ++i) acc += values[i];
    return acc / static_cast<double>(tail);
}

double TrainResult::first(const std::string& name) const {
    for (const auto& e : log)
        if (e.name == name) return e.value;
    throw Error("no logged values for loss: " + name);
}

TrainResult pretrain(const TrainConfig& config) {
    config.validate();
    LoadedDataset data = load_training_data(config.dataset_dir, /*need_annotations=*/false);
    SFIR_CHECK(data.image_size == config.model.image_size,
               "dataset image size " + std::to_string(data.image_size) +
                   " does not match model config " + std::to_string(config.model.image_size));

    Rectifier model(config.model, Stage::kPretrain, splitmix64(config.seed));
    const PositionMap pmap = build_position_map(config.model.image_size,
                                                config.model.image_size,
                                                config.model.patch_size);
    const int n = config.model.tokens();
    Rng shuffle_rng(splitmix64(config.seed ^ 0x1c8b34f59e2d7a60ULL));

    const int count = static_cast<int>(data.distorted.size());
    return run_training(
        config, model, count, "L_con", "L_pos",
        [&](const std::vector<int>& batch, int64_t) {
            ad::Var total_con, total_pos;
            for (int idx : batch) {
                std::vector<int> labels = pmap.labels;
                ad::Var e_o = model.embed_image(data.distorted[idx]);
                ad::Var e_r;
                if (config.shuffle_patches) {
                    const ShufflePermutation perm = make_shuffle(n, shuffle_rng.next_u64());
                    labels = perm.apply(labels);
                    e_r = model.encode(e_o, &perm.perm);
                } else {
                    e_r = model.encode(e_o);
                }
                auto l_con = contrastive_loss(model.contrastive_features(e_r), labels,
                                              config.model.tau);
                auto l_pos = position_loss(model.position_logits(e_r), labels);
                total_con = total_con.defined() ? ad::add(total_con, l_con) : l_con;
                total_pos = total_pos.defined() ? ad::add(total_pos, l_pos) : l_pos;
            }
            const float inv_b = 1.f / static_cast<float>(batch.size());
            total_con = ad::affine(total_con, inv_b, 0.f);
            total_pos = ad::affine(total_pos, inv_b, 0.f);
            auto loss = ad::add(total_con, total_pos);  // L_pre
            return std::tuple<double, double, ad::Var>(
                total_con.value().data[0], total_pos.value().data[0], loss);
        });
}

TrainResult finetune(const TrainConfig& config) {
    config.validate();
    LoadedDataset data = load_training_data(config.dataset_dir, /*need_annotations=*/true);
    SFIR_CHECK(data.image_size == config.model.image_size,
               "dataset image size " + std::to_string(data.image_size) +
                   " does not match model config " + std::to_string(config.model.image_size));

    Rectifier model(config.model, Stage::kFinetune, splitmix64(config.seed));
    if (!config.pretrained_dir.empty()) {
        const Rectifier pretrained = load_checkpoint(config.pretrained_dir);
        transfer_weights(pretrained.params(), model.params(), config.model.transfer_depth);
    }

    const int count = static_cast<int>(data.distorted.size());
    return run_training(
        config, model, count, "L_flow", "L_mask",
        [&](const std::vector<int>& batch, int64_t) {
            ad::Var total_flow, total_mask;
            for (int idx : batch) {
                ad::Var e_r = model.encode(model.embed_image(data.distorted[idx]));
                auto fpm_out = model.fpm(e_r);
                auto conf = model.brm(e_r);
                auto l_flow = flow_loss(fpm_out.flow_full, data.flows[idx], data.masks[idx],
                                        config.mean_reduction);
                auto l_mask = mask_loss(conf, data.masks[idx], config.mean_reduction);
                total_flow = total_flow.defined() ? ad::add(total_flow, l_flow) : l_flow;
                total_mask = total_mask.defined() ? ad::add(total_mask, l_mask) : l_mask;
            }
            const float inv_b = 1.f / static_cast<float>(batch.size());
            total_flow = ad::affine(total_flow, inv_b, 0.f);
            total_mask = ad::affine(total_mask, inv_b, 0.f);
            auto loss = ad::add(total_flow, total_mask);  // L_ft
            return std::tuple<double, double, ad::Var>(
                total_flow.value().data[0], total_mask.value().data[0], loss);
        });
}

double position_head_accuracy(const Rectifier& model, const std::vector<Image>& images,
                              uint64_t seed, int shuffles_per_image) {
    SFIR_CHECK(model.stage() == Stage::kPretrain,
               "position_head_accuracy: needs a pretraining-stage model");
    const ModelConfig& cfg = model.config();
    const PositionMap pmap = build_position_map(cfg.image_size, cfg.image_size, cfg.patch_size);
    const int n = cfg.tokens();
    Rng rng(splitmix64(seed ^ 0x77aa55cc11ee33ddULL));

    ad::NoGradGuard no_grad;
    int64_t correct = 0, total = 0;
    for (const Image& img : images) {
        for (int rep = 0; rep < shuffles_per_image; ++rep) {
            const ShufflePermutation perm = make_shuffle(n, rng.next_u64());
            const std::vector<int> labels = perm.apply(pmap.labels);
            auto e_r = model.encode(model.embed_image(img), &perm.perm);
            const auto logits_var = model.position_logits(e_r);
            const auto& logits = logits_var.value();
            const int c = logits.dim(1);
            for (int i = 0; i < n; ++i) {
                const float* row = logits.data.data() + static_cast<size_t>(i) * c;
                int best = 0;
                for (int j = 1; j < c; ++j)
                    if (row[j] > row[best]) best = j;
                correct += best == labels[i];
                ++total;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace sfir
