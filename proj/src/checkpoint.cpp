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

#include "ast/checkpoint.h"

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "ast/error.h"

namespace ast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.bin";
}  // namespace

void save_checkpoint(const std::string& dir,
                     const std::vector<NamedParam>& params,
                     const json& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create checkpoint dir " + dir);

  json manifest;
  manifest["format"] = "ast-checkpoint-v1";
  manifest["extra"] = extra;
  json plist = json::array();

  std::ofstream blob(fs::path(dir) / kBlobName, std::ios::binary);
  require(blob.good(), ErrorCategory::kIo, "cannot write params.bin in " + dir);
  uint64_t offset = 0;
  for (const auto& p : params) {
    json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor->shape;
    entry["offset"] = offset;
    plist.push_back(entry);
    const auto bytes = p.tensor->data.size() * sizeof(float);
    blob.write(reinterpret_cast<const char*>(p.tensor->data.data()),
               static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  manifest["params"] = plist;
  blob.close();
  require(blob.good(), ErrorCategory::kIo, "write failed for params.bin");

  std::ofstream mf(fs::path(dir) / kManifestName);
  require(mf.good(), ErrorCategory::kIo, "cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

bool checkpoint_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / kManifestName) &&
         fs::exists(fs::path(dir) / kBlobName);
}

namespace {
json read_manifest(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / kManifestName);
  require(mf.good(), ErrorCategory::kIo, "cannot open checkpoint " + dir);
  json manifest;
  mf >> manifest;
  require(manifest.value("format", "") == "ast-checkpoint-v1",
          ErrorCategory::kInput, "unrecognized checkpoint format in " + dir);
  return manifest;
}
}  // namespace

json load_checkpoint_extra(const std::string& dir) {
  return read_manifest(dir)["extra"];
}

json load_checkpoint(const std::string& dir,
                     const std::vector<NamedParam>& params) {
  json manifest = read_manifest(dir);
  struct Entry {
    Shape shape;
    uint64_t offset;
  };
  std::unordered_map<std::string, Entry> index;
  for (const auto& e : manifest["params"]) {
    Entry entry;
    entry.shape = e["shape"].get<Shape>();
    entry.offset = e["offset"].get<uint64_t>();
    index[e["name"].get<std::string>()] = entry;
  }

  std::ifstream blob(fs::path(dir) / kBlobName, std::ios::binary);
  require(blob.good(), ErrorCategory::kIo, "cannot open params.bin in " + dir);
  for (const auto& p : params) {
    auto it = index.find(p.name);
    require(it != index.end(), ErrorCategory::kInput,
            "checkpoint " + dir + " is missing parameter " + p.name);
    require(it->second.shape == p.tensor->shape, ErrorCategory::kDimension,
            "checkpoint shape mismatch for " + p.name + ": stored " +
                shape_str(it->second.shape) + " vs model " +
                shape_str(p.tensor->shape));
    blob.seekg(static_cast<std::streamoff>(it->second.offset));
    blob.read(reinterpret_cast<char*>(p.tensor->data.data()),
              static_cast<std::streamsize>(p.tensor->data.size() * sizeof(float)));
    require(blob.good(), ErrorCategory::kIo,
            "short read for parameter " + p.name + " in " + dir);
  }
  return manifest["extra"];
}

}  // namespace ast
