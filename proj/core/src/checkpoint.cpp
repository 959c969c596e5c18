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

#include "sfir/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "sfir/tensor_file.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfir {

void save_checkpoint(const std::string& dir, const Rectifier& model) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory: " + dir);

    const ModelConfig& c = model.config();
    json j;
    j["stage"] = model.stage() == Stage::kPretrain ? "pretrain" : "finetune";
    j["image_size"] = c.image_size;
    j["patch_size"] = c.patch_size;
    j["dim"] = c.dim;
    j["depth"] = c.depth;
    j["transfer_depth"] = c.transfer_depth;
    j["heads"] = c.heads;
    j["mlp_ratio"] = c.mlp_ratio;
    j["sigma"] = c.sigma;
    j["tau"] = c.tau;
    {
        std::ofstream out(dir + "/config.json", std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint config: " + dir);
        out << j.dump(2) << "\n";
    }

    std::ofstream index(dir + "/params.txt", std::ios::trunc);
    if (!index) throw IoError("cannot write checkpoint index: " + dir);
    for (const auto& [name, var] : model.params().items) {
        const std::string file = name + ".sfir";
        const auto& t = var.value();
        std::vector<uint32_t> dims(t.shape.begin(), t.shape.end());
        write_f32_tensor(dir + "/" + file, dims, t.data);
        index << name << "\t" << file << "\n";
    }
    if (!index) throw IoError("checkpoint index write failed: " + dir);
}

Rectifier load_checkpoint(const std::string& dir) {
    std::ifstream cfg_in(dir + "/config.json");
    if (!cfg_in) throw IoError("cannot open checkpoint config: " + dir + "/config.json");
    json j;
    try {
        cfg_in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint config in " + dir + ": " + e.what());
    }

    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.dim = j.at("dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.transfer_depth = j.at("transfer_depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.sigma = j.at("sigma").get<double>();
    c.tau = j.at("tau").get<double>();
    const std::string stage_name = j.at("stage").get<std::string>();
    const Stage stage = stage_name == "pretrain" ? Stage::kPretrain : Stage::kFinetune;

    Rectifier model(c, stage, /*seed=*/0);

    std::ifstream index(dir + "/params.txt");
    if (!index) throw IoError("cannot open checkpoint index: " + dir + "/params.txt");
    size_t loaded = 0;
    std::unordered_set<std::string> seen;
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("malformed checkpoint index line: " + line);
        const std::string name = line.substr(0, tab);
        const std::string file = line.substr(tab + 1);
        SFIR_CHECK(seen.insert(name).second,
                   "checkpoint index lists parameter '" + name + "' twice");
        SFIR_CHECK(model.params().has(name),
                   "checkpoint parameter '" + name + "' does not exist in this architecture");
        auto& var = model.params().get(name);
        TensorFile t = read_tensor_file(dir + "/" + file);
        if (t.dtype != TensorFile::Dtype::kF32)
            throw IoError("checkpoint tensor is not f32: " + file);
        std::vector<int> shape(t.dims.begin(), t.dims.end());
        SFIR_CHECK(shape == var.value().shape,
                   "checkpoint shape mismatch for '" + name + "': " + ad::shape_str(shape) +
                       " vs " + ad::shape_str(var.value().shape));
        var.value().data = std::move(t.f32);
        ++loaded;
    }
    SFIR_CHECK(loaded == model.params().size(),
               "checkpoint loads " + std::to_string(loaded) + " of " +
                   std::to_string(model.params().size()) + " parameters");
    return model;
}

}  // namespace sfir
