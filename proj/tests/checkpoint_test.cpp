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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "udta/architectures.hpp"
#include "udta/checkpoint.hpp"
#include "udta/errors.hpp"

namespace udta {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "udta_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

bool same(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
}

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

TEST(Checkpoint, TensorMapRoundTripIsBitExact) {
  TensorMap m;
  m["a"] = Tensor<float>(Shape{2, 3, 1, 1}, 1.5f);
  m["b.weight"] = Tensor<float>(Shape{1, 1, 1, 4});
  m["b.weight"][2] = -0.0f;
  m["b.weight"][3] = 1e-38f;
  const fs::path p = temp_file("map.udtc");
  save_tensors(m, p);
  const TensorMap r = load_tensors(p);
  ASSERT_EQ(r.size(), 2u);
  for (const auto& [k, v] : m) EXPECT_TRUE(same(v, r.at(k))) << k;
  const std::size_t expected = 8 + (4 + 1 + 4 + 16 + 6 * 4) + (4 + 8 + 4 + 16 + 4 * 4);
  EXPECT_EQ(fs::file_size(p), expected);
}

TEST(Checkpoint, GraphRoundTripRestoresEveryTensor) {
  Model a = build_model(desk_spec(), ModelKind::Udta, {.seed = 1, .classes = 8});
  Model b = build_model(desk_spec(), ModelKind::Udta, {.seed = 2, .classes = 8});
  const fs::path p = temp_file("udta.udtc");
  save_checkpoint(a.graph, p);
  const std::size_t n = load_checkpoint(b.graph, p, {""});
  const TensorMap ta = graph_tensors(a.graph);
  const TensorMap tb = graph_tensors(b.graph);
  EXPECT_EQ(n, ta.size());
  for (const auto& [k, v] : ta) EXPECT_TRUE(same(v, tb.at(k))) << k;
}

TEST(Checkpoint, BackboneTransfersAcrossModelKinds) {
  Model pre = build_model(desk_spec(), ModelKind::Backbone, {.seed = 3, .classes = 10});
  Model udta = build_model(desk_spec(), ModelKind::Udta, {.seed = 4, .classes = 8});
  const TensorMap bb = graph_tensors(pre.graph, [](const std::string& n) { return starts_with(n, "backbone."); });
  const TensorMap before = graph_tensors(udta.graph);
  EXPECT_GT(restore_tensors(udta.graph, bb, {"backbone."}), 0u);
  for (const auto& [k, v] : graph_tensors(udta.graph)) {
    if (starts_with(k, "backbone.")) {
      EXPECT_TRUE(same(v, bb.at(k))) << k;
    } else {
      EXPECT_TRUE(same(v, before.at(k))) << k;
    }
  }
  EXPECT_THROW(restore_tensors(udta.graph, bb, {"classifier."}), IoError);
}

TEST(Checkpoint, ShapeMismatchIsAnError) {
  Model a = build_model(desk_spec(), ModelKind::TopFT, {.seed = 1, .classes = 10});
  Model b = build_model(desk_spec(), ModelKind::TopFT, {.seed = 1, .classes = 8});
  try {
    restore_tensors(b.graph, graph_tensors(a.graph), {"classifier."});
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, BadMagicTruncationAndMissingFile) {
  TensorMap m;
  m["x"] = Tensor<float>(Shape{1, 8, 1, 1}, 2.0f);
  const fs::path p = temp_file("bad.udtc");
  save_tensors(m, p);
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.write("UDTD", 4);
  }
  try {
    load_tensors(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("UDTC"), std::string::npos);
  }
  save_tensors(m, p);
  fs::resize_file(p, fs::file_size(p) - 4);
  EXPECT_THROW(load_tensors(p), IoError);
  EXPECT_THROW(load_tensors(temp_file("nope.udtc")), IoError);
}

TEST(Checkpoint, SaveIsDeterministic) {
  Model a = build_model(desk_spec(), ModelKind::ResidualAdapter, {.seed = 9, .classes = 8});
  const fs::path p1 = temp_file("d1.udtc");
  const fs::path p2 = temp_file("d2.udtc");
  save_checkpoint(a.graph, p1);
  save_checkpoint(a.graph, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  EXPECT_GT(s1.size(), 8u);
}

}  // namespace
}  // namespace udta
