// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Checkpoint directory layout: manifest.json (name, shape, byte offset per
// parameter, plus free-form "extra" metadata) and params.bin, one
// little-endian f32 blob. Round trips are bit-exact.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ast/nn.h"

namespace ast {

void save_checkpoint(const std::string& dir,
                     const std::vector<NamedParam>& params,
                     const nlohmann::json& extra = nlohmann::json::object());

// Fills `params` (matched by name; shapes must agree) and returns "extra".
nlohmann::json load_checkpoint(const std::string& dir,
                               const std::vector<NamedParam>& params);

bool checkpoint_exists(const std::string& dir);

// Reads only the manifest's "extra" metadata.
nlohmann::json load_checkpoint_extra(const std::string& dir);

}  // namespace ast
