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

#include "udta/profiler.hpp"

#include <sstream>

#include "udta/errors.hpp"

namespace udta {

std::uint64_t CostBreakdown::of(const GraphTopology& graph, Component component) const {
  std::uint64_t sum = 0;
  for (const NodeDesc& d : graph.nodes()) {
    if (d.component == component) sum += per_node.at(index_of(d.id));
  }
  return sum;
}

CostBreakdown count_forward(const GraphTopology& graph, const CostModel& cost) {
  cost.validate();
  CostBreakdown out;
  out.per_node.resize(graph.size());
  for (const NodeDesc& d : graph.nodes()) {
    const std::uint64_t f = forward_flops_per_sample(graph, d.id, cost.mac_cost) * cost.batch;
    out.per_node[index_of(d.id)] = f;
    out.total += f;
  }
  return out;
}

CostBreakdown count_backward(const GraphTopology& graph, NodeId loss, const NodeSet& trainable,
                             const CostModel& cost) {
  cost.validate();
  const NodeSet required = compute_required_set(graph, loss, trainable);
  CostBreakdown out;
  out.per_node.resize(graph.size());
  for (NodeId id : required) {
    const std::uint64_t b = backward_flops_per_sample(graph, id, trainable.contains(id), cost) * cost.batch;
    out.per_node[index_of(id)] = b;
    out.total += b;
  }
  return out;
}

std::map<Component, std::uint64_t> count_params(const GraphTopology& graph, const NodeSet& trainable) {
  std::map<Component, std::uint64_t> out;
  for (NodeId id : trainable) {
    const NodeDesc& d = graph.desc(id);
    out[d.component] += d.param_count;
  }
  return out;
}

std::uint64_t total_params(const GraphTopology& graph, const NodeSet& trainable) {
  std::uint64_t n = 0;
  for (const auto& [c, v] : count_params(graph, trainable)) n += v;
  return n;
}

ProfileReport profile(std::string label, const GraphTopology& graph, NodeId loss, const NodeSet& trainable,
                      const CostModel& cost) {
  ProfileReport r;
  r.label = std::move(label);
  const CostBreakdown f = count_forward(graph, cost);
  const CostBreakdown b = count_backward(graph, loss, trainable, cost);
  const auto params = count_params(graph, trainable);
  for (const NodeDesc& d : graph.nodes()) {
    ComponentCost& c = r.components[d.component];
    c.f_flops += f.per_node[index_of(d.id)];
    c.b_flops += b.per_node[index_of(d.id)];
  }
  for (const auto& [component, n] : params) r.components[component].trainable_params = n;
  r.total = {f.total, b.total, 0};
  for (const auto& [component, n] : params) r.total.trainable_params += n;
  return r;
}

const ComparisonRow& Comparison::row(std::string_view label) const {
  for (const ComparisonRow& r : rows) {
    if (r.report.label == label) return r;
  }
  throw SpecError("no profile row labelled '" + std::string(label) + "'");
}

std::string Comparison::to_csv() const {
  std::ostringstream out;
  out << "label,component,f_flops,b_flops,trainable_params\n";
  for (const ComparisonRow& row : rows) {
    for (const auto& [component, c] : row.report.components) {
      out << row.report.label << ',' << to_string(component) << ',' << c.f_flops << ',' << c.b_flops << ','
          << c.trainable_params << '\n';
    }
    const ComponentCost& t = row.report.total;
    out << row.report.label << ",total," << t.f_flops << ',' << t.b_flops << ',' << t.trainable_params << '\n';
  }
  return out.str();
}

nlohmann::json Comparison::to_json() const {
  nlohmann::json configs = nlohmann::json::array();
  for (const ComparisonRow& row : rows) {
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [component, c] : row.report.components) {
      comps[std::string(to_string(component))] = {
          {"f_flops", c.f_flops}, {"b_flops", c.b_flops}, {"trainable_params", c.trainable_params}};
    }
    const ComponentCost& t = row.report.total;
    configs.push_back({{"label", row.report.label},
                       {"f_flops", t.f_flops},
                       {"b_flops", t.b_flops},
                       {"trainable_params", t.trainable_params},
                       {"components", std::move(comps)},
                       {"f_flops_ratio_vs_ref", row.f_flops_ratio},
                       {"b_flops_ratio_vs_ref", row.b_flops_ratio},
                       {"params_ratio_vs_ref", row.params_ratio}});
  }
  return {{"reference", reference}, {"configs", std::move(configs)}};
}

Comparison compare_configs(std::span<const ProfileConfig> configs, const CostModel& cost, std::string reference) {
  if (configs.empty()) throw SpecError("compare_configs needs at least one config");
  Comparison out;
  for (const ProfileConfig& c : configs) {
    if (!c.graph) throw SpecError("config '" + c.label + "' has no graph");
    out.rows.push_back({profile(c.label, *c.graph, c.loss, c.trainable, cost)});
  }
  out.reference = reference.empty() ? out.rows.front().report.label : std::move(reference);
  const ComponentCost ref = out.row(out.reference).report.total;
  auto ratio = [](std::uint64_t a, std::uint64_t b) {
    return b == 0 ? (a == 0 ? 1.0 : 0.0) : static_cast<double>(a) / static_cast<double>(b);
  };
  for (ComparisonRow& r : out.rows) {
    r.f_flops_ratio = ratio(r.report.total.f_flops, ref.f_flops);
    r.b_flops_ratio = ratio(r.report.total.b_flops, ref.b_flops);
    r.params_ratio = ratio(r.report.total.trainable_params, ref.trainable_params);
  }
  return out;
}

namespace {

ProfileConfig config_of(const std::string& label, const Model& m) {
  return {label, &m.graph, m.loss, m.trainable()};
}

ModelKind kind_for_label(const std::string& label) {
  if (label == "scratch") return ModelKind::FullFT;
  return model_kind_from_string(label);
}

}  // namespace

ProfileSuite standard_suite(const ModelSpec& spec, std::span<const std::string> labels) {
  ProfileSuite s;
  s.models.reserve(labels.size());
  for (const std::string& label : labels) {
    s.models.push_back(build_model(spec, kind_for_label(label), {.random_init = false}));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) s.configs.push_back(config_of(labels[i], s.models[i]));
  return s;
}

ProfileSuite sweep_suite(const ModelSpec& spec, char variable, std::span<const int> values) {
  if (variable != 'b' && variable != 'u') throw SpecError("sweep variable must be 'b' or 'u'");
  ProfileSuite s;
  s.models.reserve(values.size());
  std::vector<std::string> labels;
  for (int v : values) {
    ModelSpec sp = spec;
    (variable == 'b' ? sp.thin_blocks : sp.thin_expansion) = v;
    s.models.push_back(build_model(sp, ModelKind::Udta, {.random_init = false}));
    labels.push_back(std::string("udta_") + variable + std::to_string(v));
  }
  for (std::size_t i = 0; i < values.size(); ++i) s.configs.push_back(config_of(labels[i], s.models[i]));
  return s;
}

}  // namespace udta
