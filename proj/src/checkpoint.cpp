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

#include "udta/checkpoint.hpp"

#include <fstream>

#include "udta/binary_io.hpp"
#include "udta/errors.hpp"

namespace udta {

namespace {

constexpr std::uint32_t kVersion = 1;

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const std::string& p : prefixes) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

}  // namespace

void save_tensors(const TensorMap& tensors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write("UDTC", 4);
  binio::write_u32(out, kVersion);
  for (const auto& [name, t] : tensors) {
    binio::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t.shape();
    binio::write_u32(out, 4);
    for (std::size_t d : {s.n, s.c, s.h, s.w}) binio::write_u32(out, static_cast<std::uint32_t>(d));
    binio::write_f32s(out, t.ptr(), t.size());
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

TensorMap load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string file = path.string();
  binio::expect_magic(in, "UDTC", file);
  const std::uint32_t version = binio::read_u32(in, "version");
  if (version != kVersion) throw IoError(file + ": unsupported checkpoint version " + std::to_string(version));
  TensorMap out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t len = binio::read_u32(in, "record name length");
    if (len == 0 || len > 4096) throw IoError(file + ": corrupt record name length " + std::to_string(len));
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError(file + ": truncated record name");
    const std::uint32_t rank = binio::read_u32(in, name + " rank");
    if (rank == 0 || rank > 4) throw IoError(file + ": record " + name + " has unsupported rank " +
                                             std::to_string(rank));
    std::size_t dims[4] = {1, 1, 1, 1};
    for (std::uint32_t i = 0; i < rank; ++i) dims[4 - rank + i] = binio::read_u32(in, name + " dims");
    Tensor<float> t(Shape{dims[0], dims[1], dims[2], dims[3]});
    binio::read_f32s(in, t.ptr(), t.size(), name);
    if (!out.emplace(name, std::move(t)).second) throw IoError(file + ": duplicate record " + name);
  }
  return out;
}

TensorMap graph_tensors(ModelGraph& graph, const std::function<bool(const std::string&)>& keep) {
  TensorMap out;
  for (const ParamRef<float>& r : graph.state()) {
    if (!keep || keep(r.name)) out.emplace(r.name, *r.value);
  }
  return out;
}

std::size_t restore_tensors(ModelGraph& graph, const TensorMap& tensors, const std::vector<std::string>& prefixes) {
  std::size_t loaded = 0;
  for (const ParamRef<float>& r : graph.state()) {
    if (!has_prefix(r.name, prefixes)) continue;
    auto it = tensors.find(r.name);
    if (it == tensors.end()) throw IoError("checkpoint lacks tensor " + r.name);
    if (it->second.shape() != r.value->shape()) {
      throw IoError("checkpoint tensor " + r.name + " has shape " + it->second.shape().str() + ", graph expects " +
                    r.value->shape().str());
    }
    *r.value = it->second;
    ++loaded;
  }
  return loaded;
}

void save_checkpoint(ModelGraph& graph, const std::filesystem::path& path,
                     const std::function<bool(const std::string&)>& keep) {
  save_tensors(graph_tensors(graph, keep), path);
}

std::size_t load_checkpoint(ModelGraph& graph, const std::filesystem::path& path,
                            const std::vector<std::string>& prefixes) {
  return restore_tensors(graph, load_tensors(path), prefixes);
}

}  // namespace udta
