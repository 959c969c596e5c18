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

#include "sfir/model.hpp"

namespace sfir {

// A checkpoint is a directory: config.json (model config + stage), params.txt
// (one "name<TAB>file" line per parameter, in store order), and one f32
// tensor file per parameter.

void save_checkpoint(const std::string& dir, const Rectifier& model);

/// Rebuilds the model from config.json and loads every tensor. A shape or
/// name mismatch is a hard error naming the parameter path.
Rectifier load_checkpoint(const std::string& dir);

}  // namespace sfir
