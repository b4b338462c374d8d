/* Copyright 2026 The UDTA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Flat binary checkpoints: magic "UDTC", version u32, then records of
// (name length u32, name bytes, rank u32, dims u32 x rank, f32 payload) until
// end of file. All integers and floats little-endian.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "udta/graph.hpp"

namespace udta {

using TensorMap = std::map<std::string, Tensor<float>>;

void save_tensors(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap load_tensors(const std::filesystem::path& path);

// Every parameter and BN buffer of the graph whose name passes `keep`.
TensorMap graph_tensors(ModelGraph& graph, const std::function<bool(const std::string&)>& keep = {});

// Copies entries whose name starts with one of `prefixes` into the graph.
// Every graph tensor under those prefixes must be present with a matching
// shape; returns the number of tensors loaded.
std::size_t restore_tensors(ModelGraph& graph, const TensorMap& tensors, const std::vector<std::string>& prefixes);

void save_checkpoint(ModelGraph& graph, const std::filesystem::path& path,
                     const std::function<bool(const std::string&)>& keep = {});
std::size_t load_checkpoint(ModelGraph& graph, const std::filesystem::path& path,
                            const std::vector<std::string>& prefixes);

}  // namespace udta
