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

#include <algorithm>

#include "udta/errors.hpp"
#include "udta/gradcheck_suite.hpp"

namespace udta {
namespace {

GradCheckResult check(const std::string& arch, std::size_t probes, double step = 0.0, std::uint64_t seed = 3) {
  GradCheckCase c = make_gradcheck_case(arch, seed);
  GradCheckOptions o;
  o.probes = probes;
  o.step = step;
  o.seed = seed;
  return run_gradcheck(c, o);
}

TEST(GradCheck, LinearToyShadowIsExact) {
  const auto r = check("linear-toy", 50, 1e-5);
  EXPECT_EQ(r.probes_run, 50u);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param;
}

TEST(GradCheck, EveryOpKind) {
  const auto r = check("op-zoo", 200);
  EXPECT_EQ(r.probes_run, 200u);
  EXPECT_LT(r.max_rel_error, 1e-2) << r.worst_param;
}

TEST(GradCheck, OpZooShadowIsTight) {
  GradCheckCase c = make_gradcheck_case("op-zoo", 5);
  c.shadow = true;
  GradCheckOptions o;
  o.probes = 100;
  o.step = 1e-5;
  EXPECT_LT(run_gradcheck(c, o).max_rel_error, 1e-5);
}

TEST(GradCheck, TwoThinBlockUdtaToy) {
  const auto r = check("udta-toy", 100);
  EXPECT_LT(r.max_rel_error, 1e-2) << r.worst_param;
}

TEST(GradCheck, UdtaDeskGraph) {
  const auto r = check("udta-desk", 40);
  EXPECT_GE(r.probes_run, 40u);
  EXPECT_LT(r.max_rel_error, 1e-2) << r.worst_param;
}

TEST(GradCheck, AutoencoderDeskGraph) {
  const auto r = check("ae-desk", 40);
  EXPECT_LT(r.max_rel_error, 1e-2) << r.worst_param;
}

TEST(GradCheck, ZeroParameterSetIsVacuous) {
  GradCheckCase c = make_gradcheck_case("linear-toy", 1);
  GradCheckOptions o;
  const auto r = finite_difference_check(c.graph, c.input, c.loss, NodeSet{}, o);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.probes_run, 0u);
}

TEST(GradCheck, ReportsWorstProbeAndLeavesWeightsUntouched) {
  GradCheckCase c = make_gradcheck_case("udta-toy", 4);
  ModelGraph before = c.graph;
  GradCheckOptions o;
  o.probes = 30;
  o.step = 1e-3;
  const auto r = run_gradcheck(c, o);
  EXPECT_FALSE(r.worst_param.empty());
  EXPECT_NE(r.worst_param.find('['), std::string::npos);
  for (NodeId id : c.trainable) {
    auto a = c.graph.parameters(id);
    auto b = before.parameters(id);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k].value, *b[k].value);
  }
}

TEST(GradCheck, SameSeedSameResult) {
  const auto a = check("op-zoo", 30, 1e-3, 9);
  const auto b = check("op-zoo", 30, 1e-3, 9);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
  EXPECT_EQ(a.worst_param, b.worst_param);
}

TEST(GradCheck, UnknownArchitectureIsSpecError) {
  EXPECT_THROW(make_gradcheck_case("resnet-huge"), SpecError);
}

TEST(GradCheck, ArchitectureListCoversBaselines) {
  const auto& names = gradcheck_arch_names();
  for (const char* n : {"linear-toy", "udta-desk", "topft-desk", "fullft-desk", "mp-desk", "ra-desk"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
}

}  // namespace
}  // namespace udta
