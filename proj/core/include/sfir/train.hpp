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

#include "sfir/dataset.hpp"
#include "sfir/model.hpp"

// Training runs on a single optimizer thread; determinism is guaranteed for a
// fixed seed in that mode.

namespace sfir {

struct TrainConfig {
    ModelConfig model;
    std::string dataset_dir;
    std::string checkpoint_dir;        // output; loss_log.csv lives here too
    std::string pretrained_dir;        // optional: fine-tuning transfer source
    int epochs = 65;                   // full-scale default
    int batch_size = 4;                // desk default; full-scale runs use 64
    double max_lr = 1e-4;
    uint64_t seed = 0;
    int64_t max_steps = 0;             // 0 = run all epochs; otherwise hard cap
    bool shuffle_patches = true;       // pretraining shuffle (ablation switch)
    bool mean_reduction = true;        // flow/mask losses: mean vs sum
    int keep_checkpoints = 2;          // per-epoch retention

    void validate() const {
        SFIR_CHECK(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
        SFIR_CHECK(epochs >= 1, "TrainConfig: epochs must be >= 1");
        SFIR_CHECK(!dataset_dir.empty(), "TrainConfig: dataset_dir required");
    }
};

struct LossLogEntry {
    int64_t step;
    std::string name;
    double value;
};

struct TrainResult {
    std::string final_checkpoint;  // directory of the last saved checkpoint
    std::vector<LossLogEntry> log;
    int64_t steps = 0;

    /// Mean of the named loss over the final `tail_fraction` of steps.
    double final_mean(const std::string& name, double tail_fraction = 0.1) const;
    /// First logged value of the named loss.
    double first(const std::string& name) const;
};

/// Self-supervised pretraining: per sample a fresh patch shuffle, the
/// contrastive + position losses, Adam with the one-cycle schedule.
TrainResult pretrain(const TrainConfig& config);

/// Rectification fine-tuning: no shuffle, FPM + BRM heads, flow + mask
/// losses. When `pretrained_dir` is set, the first N_F encoder layers and the
/// patch embedding are initialized from that checkpoint.
TrainResult finetune(const TrainConfig& config);

/// Fraction of patches whose position-head argmax matches the label, over
/// freshly shuffled encodings of the given images. Chance level is 1/C_t.
double position_head_accuracy(const Rectifier& model, const std::vector<Image>& images,
                              uint64_t seed, int shuffles_per_image = 4);

}  // namespace sfir
