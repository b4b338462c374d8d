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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "udta/errors.hpp"
#include "udta/gradcheck_suite.hpp"
#include "udta/pipeline.hpp"
#include "udta/profiler.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace udta;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string dump(const json& j) { return j.dump(); }

PipelineConfig config_from(const std::string& text) {
  PipelineConfig c = PipelineConfig::defaults();
  if (!text.empty()) c = merge_config(c, json::parse(text));
  c.validate();
  return c;
}

py::array_t<float> to_numpy(const Tensor<float>& t) {
  const Shape& s = t.shape();
  py::array_t<float> a({s.n, s.c, s.h, s.w});
  std::memcpy(a.mutable_data(), t.ptr(), t.size() * sizeof(float));
  return a;
}

py::tuple dataset_tuple(const Dataset& d) {
  return py::make_tuple(to_numpy(d.images), py::array_t<std::int32_t>(d.labels.size(), d.labels.data()));
}

std::string profile_configs(const std::string& spec, const std::vector<std::string>& configs, std::size_t batch,
                            std::uint64_t mac_cost, const std::string& reference) {
  const CostModel cost{.mac_cost = mac_cost, .batch = batch};
  cost.validate();
  std::vector<std::string> labels = configs;
  if (labels.empty()) labels.assign(std::begin(kStandardConfigs), std::end(kStandardConfigs));
  const ProfileSuite suite = standard_suite(resolve_model_spec(spec), labels);
  const bool has_ref = std::find(labels.begin(), labels.end(), reference) != labels.end();
  return dump(compare_configs(suite.configs, cost, has_ref ? reference : "").to_json());
}

std::string sweep(const std::string& spec, const std::string& variable, const std::vector<int>& values,
                  std::size_t batch) {
  if (variable.size() != 1) throw SpecError("sweep variable must be 'b' or 'u'");
  const ProfileSuite suite = sweep_suite(resolve_model_spec(spec), variable[0], values);
  return dump(compare_configs(suite.configs, {.batch = batch}).to_json());
}

std::string gradcheck(const std::string& arch, std::size_t probes, double step, std::uint64_t seed) {
  if (probes == 0) throw SpecError("probes must be >= 1");
  GradCheckCase c = make_gradcheck_case(arch, seed);
  const GradCheckResult r = run_gradcheck(c, {.probes = probes, .step = step, .seed = seed});
  return dump({{"arch", arch},
               {"probes", r.probes_run},
               {"max_rel_error", r.max_rel_error},
               {"tolerance", c.tolerance},
               {"worst_param", r.worst_param},
               {"pass", r.max_rel_error < c.tolerance}});
}

py::tuple generate_data(const std::string& spec_text) {
  const SynthSpec spec = synth_spec_from_json(spec_text.empty() ? json::object() : json::parse(spec_text));
  const SplitDatasets d = generate(spec);
  return py::make_tuple(dataset_tuple(d.train), dataset_tuple(d.test));
}

std::string trace_summary(const std::string& spec, const std::string& kind) {
  const Model m = build_model(resolve_model_spec(spec), model_kind_from_string(kind), {.random_init = false});
  const NodeSet req = compute_required_set(m.graph, m.loss, m.trainable());
  json by_component = json::object();
  for (NodeId id : req) {
    const std::string c(to_string(m.graph.desc(id).component));
    by_component[c] = by_component.value(c, 0) + 1;
  }
  return dump({{"kind", kind}, {"required_nodes", req.size()}, {"required_by_component", by_component}});
}

}  // namespace

PYBIND11_MODULE(_udta, m) {
  m.doc() = "UDTA core: static profiler, gradient checker, synthetic data and the training pipeline";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("model_spec", [](const std::string& name) { return dump(to_json(resolve_model_spec(name))); },
        py::arg("name") = "desk");
  m.def("profile", &profile_configs, py::arg("spec") = "full", py::arg("configs") = std::vector<std::string>{},
        py::arg("batch") = 256, py::arg("mac_cost") = 1, py::arg("reference") = "model_patch");
  m.def("sweep", &sweep, py::arg("spec"), py::arg("variable"), py::arg("values"), py::arg("batch") = 256);
  m.def("required_set", &trace_summary, py::arg("spec"), py::arg("kind"));
  m.def("gradcheck", &gradcheck, py::arg("arch"), py::arg("probes") = 50, py::arg("step") = 0.0,
        py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("gradcheck_archs", &gradcheck_arch_names);
  m.def("generate", &generate_data, py::arg("spec") = "");

  m.def("default_config", [] { return dump(to_json(PipelineConfig::defaults())); });
  m.def("gen_data", [](const std::string& cfg, const std::string& dir) { stage_gen_data(config_from(cfg), dir); },
        py::arg("config"), py::arg("dir"));
  m.def(
      "pretrain", [](const std::string& cfg, const std::string& dir) { return stage_pretrain(config_from(cfg), dir); },
      py::arg("config"), py::arg("dir"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "train_ae",
      [](const std::string& cfg, const std::string& dir) { return dump(stage_train_ae(config_from(cfg), dir).to_json()); },
      py::arg("config"), py::arg("dir"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "adapt",
      [](const std::string& cfg, const std::string& dir, std::uint64_t seed) {
        return dump(stage_adapt(config_from(cfg), dir, seed).to_json());
      },
      py::arg("config"), py::arg("dir"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "baseline",
      [](const std::string& cfg, const std::string& dir, const std::string& kind, std::uint64_t seed) {
        return dump(stage_baseline(config_from(cfg), dir, kind, seed).to_json());
      },
      py::arg("config"), py::arg("dir"), py::arg("kind"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "pipeline",
      [](const std::string& cfg, const std::string& dir) { return dump(run_pipeline(config_from(cfg), dir).to_json()); },
      py::arg("config"), py::arg("dir"), py::call_guard<py::gil_scoped_release>());
}
