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

// udta: pipeline stages, static profiler and gradient checker.
//
// Exit codes: 0 success, 1 usage or invalid input, 2 invariant breach
// (including a failed gradient check), 3 file or IO failure.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "udta/errors.hpp"
#include "udta/gradcheck_suite.hpp"
#include "udta/pipeline.hpp"
#include "udta/profiler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace udta;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvariant = 2, kIo = 3 };

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

// Hash of the file when `spec` names one, else of the built-in's canonical JSON.
json spec_hash(const std::string& spec) {
  const ModelSpec s = resolve_model_spec(spec);
  const bool file = fs::is_regular_file(spec);
  return {{"spec", spec},
          {"name", s.name},
          {"source", file ? "file" : "built-in"},
          {"sha256", sha256_hex(file ? read_file(spec) : to_json(s).dump())}};
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, const json& specs,
                    const json& seeds, const json& outputs) {
  fs::create_directories(dir);
  const json m = {{"subcommand", command}, {"config", config}, {"spec_hashes", specs},
                  {"seeds", seeds},        {"outputs", outputs}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Options shared by the training subcommands; unset flags leave the config alone.
struct StageFlags {
  std::string config_file;
  std::optional<std::string> spec;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> workers;
  bool joint_encoder = false;
};

void add_stage_flags(CLI::App* app, StageFlags& f, bool adapt_like) {
  app->add_option("--config", f.config_file, "JSON pipeline config")->check(CLI::ExistingFile);
  app->add_option("--spec", f.spec, "model spec: full, desk or a JSON path");
  app->add_option("--epochs", f.epochs, "epochs of this stage")->check(CLI::NonNegativeNumber);
  app->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  app->add_option("--batch", f.batch, "mini-batch size")->check(CLI::PositiveNumber);
  if (adapt_like) {
    app->add_option("--seeds", f.seeds, "adaptation seeds, comma separated")->delimiter(',');
    app->add_option("--workers", f.workers, "parallel runs (0: all cores)");
  }
}

PipelineConfig resolve_config(const StageFlags& f, std::initializer_list<TrainConfig PipelineConfig::*> stages) {
  PipelineConfig c = PipelineConfig::defaults();
  if (!f.config_file.empty()) {
    json j;
    try {
      j = json::parse(read_file(f.config_file));
    } catch (const json::parse_error& e) {
      throw SpecError("config " + f.config_file + ": " + e.what());
    }
    // A manifest written by an earlier run carries its resolved config.
    if (j.contains("subcommand") && j.contains("config")) j = j["config"];
    c = merge_config(c, j);
  }
  if (f.spec) c.model_spec = *f.spec;
  for (auto stage : stages) {
    TrainConfig& t = c.*stage;
    if (f.epochs) t.epochs = *f.epochs;
    if (f.lr) t.adam.learning_rate = *f.lr;
    if (f.batch) t.batch = *f.batch;
  }
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.workers) c.workers = *f.workers;
  if (f.joint_encoder) c.adapt.joint_encoder = true;
  c.validate();
  return c;
}

fs::path default_out_dir() {
  const char* env = std::getenv("UDTA_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path("udta_out");
}

void print_records(const std::vector<RunRecord>& runs) {
  for (const RunRecord& r : runs) std::cout << r.to_json().dump() << '\n';
}

struct ProfileFlags {
  std::string spec = "full";
  std::string configs = "all";
  std::string sweep;
  std::size_t batch = 256;
  std::uint64_t mac_cost = 1;
  std::string format = "csv";
  std::string out;
  std::string reference = "model_patch";
  bool frozen_input_grad_only = false;
};

int cmd_profile(const ProfileFlags& f, const fs::path& out_dir) {
  const CostModel cost{.mac_cost = f.mac_cost,
                       .batch = f.batch,
                       .convention = f.frozen_input_grad_only ? BackwardConvention::InputGradOnlyFrozen
                                                              : BackwardConvention::FullAdjoint};
  cost.validate();
  const ModelSpec spec = resolve_model_spec(f.spec);
  const json config = {{"spec", f.spec},           {"configs", f.configs}, {"sweep", f.sweep},
                       {"batch", f.batch},         {"mac_cost", f.mac_cost}, {"format", f.format},
                       {"reference", f.reference}, {"convention", f.frozen_input_grad_only ? "input_grad_only_frozen"
                                                                                           : "full_adjoint"}};
  write_manifest(out_dir, "profile", config, json::array({spec_hash(f.spec)}), json::array(),
                 {{"report", f.out.empty() ? "stdout" : f.out}});
  ProfileSuite suite;
  std::string reference = f.reference;
  if (!f.sweep.empty()) {
    const auto eq = f.sweep.find('=');
    if (eq != 1) throw SpecError("--sweep expects b=<list> or u=<list>, got '" + f.sweep + "'");
    std::vector<int> values;
    for (const std::string& v : split_csv(f.sweep.substr(2))) {
      try {
        values.push_back(std::stoi(v));
      } catch (const std::exception&) {
        throw SpecError("--sweep value '" + v + "' is not an integer");
      }
    }
    if (values.empty()) throw SpecError("--sweep needs at least one value");
    suite = sweep_suite(spec, static_cast<char>(std::tolower(f.sweep[0])), values);
    reference.clear();
  } else {
    std::vector<std::string> labels;
    if (f.configs == "all") {
      labels.assign(std::begin(kStandardConfigs), std::end(kStandardConfigs));
    } else {
      labels = split_csv(f.configs);
    }
    suite = standard_suite(spec, labels);
    if (std::find(labels.begin(), labels.end(), reference) == labels.end()) reference.clear();
  }
  const Comparison cmp = compare_configs(suite.configs, cost, reference);
  const std::string text = f.format == "json" ? cmp.to_json().dump(2) + "\n" : cmp.to_csv();
  if (f.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(f.out);
    if (!out) throw IoError("cannot write " + f.out);
    out << text;
  }
  return kOk;
}

struct GradCheckFlags {
  std::string arch = "udta-desk";
  std::size_t probes = 200;
  double step = 0.0;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradCheckFlags& f, const fs::path& out_dir) {
  write_manifest(out_dir, "gradcheck", {{"arch", f.arch}, {"probes", f.probes}, {"step", f.step}, {"seed", f.seed}},
                 json::array(), json::array({f.seed}), json::object());
  GradCheckCase c = make_gradcheck_case(f.arch, f.seed);
  GradCheckOptions o;
  o.probes = f.probes;
  o.step = f.step;
  o.seed = f.seed;
  const GradCheckResult r = run_gradcheck(c, o);
  const bool pass = r.max_rel_error < c.tolerance;
  const json report = {{"arch", f.arch},
                       {"precision", c.shadow ? "f64" : "f32"},
                       {"probes", r.probes_run},
                       {"kink_skips", r.kink_skips},
                       {"max_rel_error", r.max_rel_error},
                       {"tolerance", c.tolerance},
                       {"worst_param", r.worst_param},
                       {"worst_analytic", r.worst_analytic},
                       {"worst_numeric", r.worst_numeric},
                       {"pass", pass}};
  std::cout << report.dump() << '\n';
  if (!pass) {
    std::cerr << "gradcheck failed: " << r.worst_param << " has relative error " << r.max_rel_error
              << " (tolerance " << c.tolerance << ")\n";
    return kInvariant;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UDTA desk-scale pipeline, static FLOPs profiler and gradient checker"};
  app.require_subcommand(1);
  std::string out_dir_flag;
  app.add_option("--out-dir", out_dir_flag, "output root (default: $UDTA_OUT_DIR or ./udta_out)");

  StageFlags gen_f, pre_f, ae_f, adapt_f, base_f, pipe_f;
  auto* gen = app.add_subcommand("gen-data", "generate source and target datasets");
  add_stage_flags(gen, gen_f, false);
  auto* pre = app.add_subcommand("pretrain", "pre-train the backbone on the source task");
  add_stage_flags(pre, pre_f, false);
  auto* ae = app.add_subcommand("train-ae", "train one autoencoder per encoded attachment point");
  add_stage_flags(ae, ae_f, false);
  auto* ad = app.add_subcommand("adapt", "train UDTA and the classifier on the target task");
  add_stage_flags(ad, adapt_f, true);
  ad->add_flag("--joint-encoder", adapt_f.joint_encoder, "also train the encoders");
  auto* base = app.add_subcommand("baseline", "adapt a baseline on the target task");
  add_stage_flags(base, base_f, true);
  std::string kind;
  base->add_option("--kind", kind, "topft, fullft, mp, ra or scratch")->required();
  auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
  add_stage_flags(pipe, pipe_f, true);
  std::string baselines;
  pipe->add_option("--baselines", baselines, "baselines to run, comma separated");

  ProfileFlags prof_f;
  auto* prof = app.add_subcommand("profile", "static FLOPs and parameter comparison");
  prof->add_option("--spec", prof_f.spec, "model spec: full, desk or a JSON path")->capture_default_str();
  prof->add_option("--configs", prof_f.configs, "all or a comma separated list of configs")->capture_default_str();
  prof->add_option("--sweep", prof_f.sweep, "b=<list> or u=<list>");
  prof->add_option("--batch", prof_f.batch, "batch size")->check(CLI::PositiveNumber)->capture_default_str();
  prof->add_option("--mac-cost", prof_f.mac_cost, "FLOPs per MAC")->check(CLI::IsMember({1, 2}))->capture_default_str();
  prof->add_option("--format", prof_f.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  prof->add_option("--out", prof_f.out, "report file (default: stdout)");
  prof->add_option("--reference", prof_f.reference, "label the ratios are taken against")->capture_default_str();
  prof->add_flag("--frozen-input-grad-only", prof_f.frozen_input_grad_only,
                 "charge frozen nodes 1x forward in backward instead of 2x");
  prof->get_option("--sweep")->excludes("--configs");

  GradCheckFlags gc_f;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--arch", gc_f.arch, "architecture")->check(CLI::IsMember(gradcheck_arch_names()))->capture_default_str();
  gc->add_option("--probes", gc_f.probes, "number of probes")->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--step", gc_f.step, "perturbation step (0: architecture default)")->check(CLI::NonNegativeNumber);
  gc->add_option("--seed", gc_f.seed, "probe and weight seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const fs::path out_dir = out_dir_flag.empty() ? default_out_dir() : fs::path(out_dir_flag);
  try {
    auto manifest = [&](const char* name, const PipelineConfig& c, const json& outputs) {
      write_manifest(out_dir, name, to_json(c), json::array({spec_hash(c.model_spec)}), c.seeds, outputs);
    };
    if (*gen) {
      const PipelineConfig c = resolve_config(gen_f, {});
      manifest("gen-data", c, {{"data", (out_dir / "data").string()}});
      stage_gen_data(c, out_dir);
    } else if (*pre) {
      const PipelineConfig c = resolve_config(pre_f, {&PipelineConfig::pretrain});
      manifest("pretrain", c, {{"checkpoint", (out_dir / "checkpoints" / "backbone.udtc").string()}});
      std::cout << json{{"pretrain_top1", stage_pretrain(c, out_dir)}}.dump() << '\n';
    } else if (*ae) {
      const PipelineConfig c = resolve_config(ae_f, {&PipelineConfig::train_ae});
      manifest("train-ae", c, {{"checkpoint", (out_dir / "checkpoints" / "encoders.udtc").string()}});
      std::cout << stage_train_ae(c, out_dir).to_json().dump() << '\n';
    } else if (*ad) {
      const PipelineConfig c = resolve_config(adapt_f, {&PipelineConfig::adapt});
      manifest("adapt", c, {{"traces", (out_dir / "traces").string()}, {"metrics", (out_dir / "metrics").string()}});
      print_records(fan_out(c, out_dir, {"udta"}));
    } else if (*base) {
      const PipelineConfig c = resolve_config(base_f, {&PipelineConfig::adapt});
      if (!is_baseline_name(kind)) throw SpecError("unknown baseline kind '" + kind + "'");
      manifest("baseline", c, {{"traces", (out_dir / "traces").string()}, {"metrics", (out_dir / "metrics").string()}});
      print_records(fan_out(c, out_dir, {kind}));
    } else if (*pipe) {
      PipelineConfig c = resolve_config(pipe_f, {&PipelineConfig::pretrain, &PipelineConfig::train_ae,
                                                 &PipelineConfig::adapt});
      if (!baselines.empty()) c.baselines = split_csv(baselines);
      c.validate();
      manifest("pipeline", c, {{"summary", (out_dir / "summary.json").string()}});
      std::cout << run_pipeline(c, out_dir).to_json().dump(2) << '\n';
    } else if (*prof) {
      return cmd_profile(prof_f, out_dir);
    } else if (*gc) {
      return cmd_gradcheck(gc_f, out_dir);
    }
  } catch (const InvariantError& e) {
    std::cerr << "invariant breach: " << e.what() << '\n';
    return kInvariant;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
