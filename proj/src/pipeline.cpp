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

#include "udta/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "udta/checkpoint.hpp"
#include "udta/errors.hpp"

namespace udta {

namespace fs = std::filesystem;

namespace {

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

fs::path data_file(const fs::path& dir, const char* task, const char* split) {
  return dir / "data" / (std::string(task) + "_" + split + ".udtd");
}

fs::path ensure_dir(const fs::path& p) {
  fs::create_directories(p);
  return p;
}

std::string run_name(const std::string& kind, std::uint64_t seed) { return kind + "_s" + std::to_string(seed); }

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path) {
    if (!out_) throw IoError("cannot write metrics file " + path.string());
  }
  void operator()(const EpochMetrics& m) { out_ << m.to_json().dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void merge_train(TrainConfig& c, const nlohmann::json& j, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch") c.batch = value.get<std::size_t>();
    else if (key == "learning_rate") c.adam.learning_rate = value.get<double>();
    else if (key == "beta1") c.adam.beta1 = value.get<double>();
    else if (key == "beta2") c.adam.beta2 = value.get<double>();
    else if (key == "adam_epsilon") c.adam.epsilon = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "eval_batch") c.eval_batch = value.get<std::size_t>();
    else if (key == "joint_encoder") c.joint_encoder = value.get<bool>();
    else if (key != "stage") throw SpecError("unknown key '" + key + "' in " + where);
  }
}

SynthSpec merge_synth(const SynthSpec& base, const nlohmann::json& j, const std::string& where) {
  nlohmann::json merged = to_json(base);
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw SpecError("unknown key '" + key + "' in " + where);
    merged[key] = value;
  }
  return synth_spec_from_json(merged);
}

ModelSpec spec_of(const PipelineConfig& c) { return resolve_model_spec(c.model_spec); }

RunRecord record(const std::string& kind, std::uint64_t seed, const TrainResult& r) {
  RunRecord rec;
  rec.kind = kind;
  rec.seed = seed;
  rec.top1 = r.final_top1.value_or(0.0);
  const auto bb = r.trace.flops.find(Component::Backbone);
  rec.backbone_backward_flops = bb == r.trace.flops.end() ? 0 : bb->second;
  for (const auto& [c, f] : r.trace.flops) rec.total_backward_flops += f;
  rec.steps = r.trace.steps;
  return rec;
}

// Checkpoints, metrics and trace report of one adaptation run.
RunRecord finish_run(Model& m, const fs::path& dir, const std::string& kind, std::uint64_t seed,
                     const TrainResult& r) {
  const std::string name = run_name(kind, seed);
  save_checkpoint(m.graph, ensure_dir(dir / "checkpoints") / (name + ".udtc"));
  nlohmann::json trace = r.trace.to_json();
  trace["run"] = name;
  trace["kind"] = kind;
  trace["seed"] = seed;
  trace["epochs"] = nlohmann::json::array();
  for (const EpochMetrics& e : r.epochs) {
    trace["epochs"].push_back({{"epoch", e.epoch},
                               {"backbone_backward_flops", e.backbone_backward_flops},
                               {"total_backward_flops", e.total_backward_flops}});
  }
  write_json(ensure_dir(dir / "traces") / (name + ".json"), trace);
  return record(kind, seed, r);
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.source.classes = 10;
  c.source.templates = 3;
  c.source.seed = 1;
  c.source.template_seed = 1000;
  c.target.classes = 8;
  c.target.templates = 2;
  c.target.train_per_class = 128;
  c.target.seed = 2;
  c.target.template_seed = 2000;
  c.pretrain.seed = 7;
  c.train_ae.seed = 8;
  return c;
}

void PipelineConfig::validate() const {
  source.validate();
  target.validate();
  pretrain.validate();
  train_ae.validate();
  adapt.validate();
  if (pretrain.stage != Stage::Pretrain || train_ae.stage != Stage::AETrain || adapt.stage != Stage::Adapt) {
    throw SpecError("stage configs are out of order");
  }
  if (seeds.empty()) throw SpecError("at least one adaptation seed is required");
  if (source.resolution != target.resolution || source.channels != target.channels) {
    throw SpecError("source and target images must share resolution and channels");
  }
  for (const std::string& b : baselines) {
    if (!is_baseline_name(b)) throw SpecError("unknown baseline '" + b + "'");
  }
  const ModelSpec spec = spec_of(*this);
  if (spec.input_resolution != source.resolution) {
    throw SpecError("model '" + spec.name + "' expects " + std::to_string(spec.input_resolution) +
                    "px inputs, data is " + std::to_string(source.resolution) + "px");
  }
}

nlohmann::json to_json(const PipelineConfig& c) {
  auto train = [](const TrainConfig& t) {
    nlohmann::json j = to_json(t);
    if (t.stage != Stage::Adapt) j.erase("joint_encoder");
    return j;
  };
  return {{"model_spec", c.model_spec}, {"source", to_json(c.source)},    {"target", to_json(c.target)},
          {"pretrain", train(c.pretrain)}, {"train_ae", train(c.train_ae)}, {"adapt", train(c.adapt)},
          {"seeds", c.seeds},           {"baselines", c.baselines},      {"workers", c.workers}};
}

PipelineConfig merge_config(PipelineConfig base, const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("pipeline config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model_spec") base.model_spec = value.get<std::string>();
      else if (key == "source") base.source = merge_synth(base.source, value, key);
      else if (key == "target") base.target = merge_synth(base.target, value, key);
      else if (key == "pretrain") merge_train(base.pretrain, value, key);
      else if (key == "train_ae") merge_train(base.train_ae, value, key);
      else if (key == "adapt") merge_train(base.adapt, value, key);
      else if (key == "seeds") base.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "baselines") base.baselines = value.get<std::vector<std::string>>();
      else if (key == "workers") base.workers = value.get<std::size_t>();
      else throw SpecError("unknown pipeline config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed pipeline config: ") + e.what());
  }
  return base;
}

bool is_baseline_name(const std::string& kind) {
  if (kind == "scratch") return true;
  try {
    const ModelKind k = model_kind_from_string(kind);
    return k != ModelKind::Backbone && k != ModelKind::Udta;
  } catch (const SpecError&) {
    return false;
  }
}

nlohmann::json RunRecord::to_json() const {
  return {{"kind", kind},
          {"seed", seed},
          {"top1", top1},
          {"backbone_backward_flops", backbone_backward_flops},
          {"total_backward_flops", total_backward_flops},
          {"steps", steps}};
}

nlohmann::json AutoencoderReport::to_json() const {
  nlohmann::json ratio = nlohmann::json::array();
  for (std::size_t i = 0; i < trained_mse.size(); ++i) ratio.push_back(trained_mse[i] / random_mse[i]);
  return {{"random_init_mse", random_mse}, {"trained_mse", trained_mse}, {"trained_over_random", ratio}};
}

double PipelineSummary::median_top1(const std::string& kind) const {
  std::vector<double> v;
  for (const RunRecord& r : runs) {
    if (r.kind == kind) v.push_back(r.top1);
  }
  if (v.empty()) throw SpecError("no runs of kind '" + kind + "'");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json PipelineSummary::to_json() const {
  nlohmann::json runs_j = nlohmann::json::array();
  nlohmann::json medians = nlohmann::json::object();
  for (const RunRecord& r : runs) {
    runs_j.push_back(r.to_json());
    if (!medians.contains(r.kind)) medians[r.kind] = median_top1(r.kind);
  }
  return {{"pretrain_top1", pretrain_top1},
          {"autoencoders", autoencoders.to_json()},
          {"runs", std::move(runs_j)},
          {"median_top1", std::move(medians)}};
}

void stage_gen_data(const PipelineConfig& config, const fs::path& dir) {
  config.validate();
  ensure_dir(dir / "data");
  const SplitDatasets src = generate(config.source);
  save_dataset(src.train, data_file(dir, "source", "train"));
  save_dataset(src.test, data_file(dir, "source", "test"));
  const SplitDatasets tgt = generate(config.target);
  save_dataset(tgt.train, data_file(dir, "target", "train"));
  save_dataset(tgt.test, data_file(dir, "target", "test"));
}

double stage_pretrain(const PipelineConfig& config, const fs::path& dir) {
  config.validate();
  const Dataset train = load_dataset(data_file(dir, "source", "train"));
  const Dataset test = load_dataset(data_file(dir, "source", "test"));
  Model m = build_model(spec_of(config), ModelKind::Backbone, {.seed = config.pretrain.seed, .classes = train.classes});
  JsonLines sink(ensure_dir(dir / "metrics") / "pretrain.jsonl");
  const TrainResult r = pretrain(m, train, &test, config.pretrain, std::ref(sink));
  save_checkpoint(m.graph, ensure_dir(dir / "checkpoints") / "backbone.udtc",
                  [](const std::string& n) { return starts_with(n, "backbone."); });
  return r.final_top1.value_or(0.0);
}

AutoencoderReport stage_train_ae(const PipelineConfig& config, const fs::path& dir) {
  config.validate();
  const Dataset train = load_dataset(data_file(dir, "source", "train"));
  const Dataset test = load_dataset(data_file(dir, "source", "test"));
  AutoencoderModel ae = build_autoencoder_model(spec_of(config), config.train_ae.seed);
  load_checkpoint(ae.graph, dir / "checkpoints" / "backbone.udtc", {"backbone."});
  ae.graph.set_bn_mode(Component::Backbone, BnMode::Eval);
  AutoencoderReport report;
  report.random_mse = reconstruction_mse(ae, test, config.train_ae.eval_batch);
  JsonLines sink(ensure_dir(dir / "metrics") / "train_ae.jsonl");
  const TrainResult r = train_autoencoders(ae, train, config.train_ae, std::ref(sink));
  report.trained_mse = reconstruction_mse(ae, test, config.train_ae.eval_batch);
  save_checkpoint(ae.graph, ensure_dir(dir / "checkpoints") / "encoders.udtc",
                  [](const std::string& n) { return starts_with(n, "encoder."); });
  nlohmann::json trace = r.trace.to_json();
  trace["run"] = "train_ae";
  trace["reconstruction"] = report.to_json();
  write_json(ensure_dir(dir / "traces") / "train_ae.json", trace);
  return report;
}

RunRecord stage_adapt(const PipelineConfig& config, const fs::path& dir, std::uint64_t seed) {
  config.validate();
  const Dataset train = load_dataset(data_file(dir, "target", "train"));
  const Dataset test = load_dataset(data_file(dir, "target", "test"));
  TrainConfig tc = config.adapt;
  tc.seed = seed;
  Model m = build_model(spec_of(config), ModelKind::Udta,
                        {.seed = seed, .classes = train.classes, .joint_encoder = tc.joint_encoder});
  load_checkpoint(m.graph, dir / "checkpoints" / "backbone.udtc", {"backbone."});
  // Joint mode trains the encoders from their initialisation instead.
  if (!tc.joint_encoder) load_checkpoint(m.graph, dir / "checkpoints" / "encoders.udtc", {"encoder."});
  JsonLines sink(ensure_dir(dir / "metrics") / (run_name("udta", seed) + ".jsonl"));
  const TrainResult r = adapt(m, train, test, tc, std::ref(sink));
  return finish_run(m, dir, "udta", seed, r);
}

RunRecord stage_baseline(const PipelineConfig& config, const fs::path& dir, const std::string& kind,
                         std::uint64_t seed) {
  config.validate();
  if (!is_baseline_name(kind)) throw SpecError("unknown baseline '" + kind + "'");
  const Dataset train = load_dataset(data_file(dir, "target", "train"));
  const Dataset test = load_dataset(data_file(dir, "target", "test"));
  TrainConfig tc = config.adapt;
  tc.seed = seed;
  tc.joint_encoder = false;
  const bool scratch = kind == "scratch";
  Model m = build_baseline(spec_of(config), scratch ? ModelKind::FullFT : model_kind_from_string(kind), train.classes,
                           seed);
  if (!scratch) load_checkpoint(m.graph, dir / "checkpoints" / "backbone.udtc", {"backbone."});
  const std::string label = scratch ? "scratch" : std::string(to_string(m.kind));
  JsonLines sink(ensure_dir(dir / "metrics") / (run_name(label, seed) + ".jsonl"));
  const TrainResult r = run_baseline_adaptation(m, train, test, tc, std::ref(sink));
  return finish_run(m, dir, label, seed, r);
}

std::vector<RunRecord> fan_out(const PipelineConfig& config, const fs::path& dir,
                               const std::vector<std::string>& kinds) {
  struct Job {
    std::string kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const std::string& k : kinds) {
    for (std::uint64_t s : config.seeds) jobs.push_back({k, s});
  }
  std::vector<RunRecord> out(jobs.size());
  std::size_t workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& j = jobs[i];
        out[i] = j.kind == "udta" ? stage_adapt(config, dir, j.seed) : stage_baseline(config, dir, j.kind, j.seed);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

PipelineSummary run_pipeline(const PipelineConfig& config, const fs::path& dir) {
  config.validate();
  PipelineSummary s;
  stage_gen_data(config, dir);
  s.pretrain_top1 = stage_pretrain(config, dir);
  if (!config.adapt.joint_encoder) s.autoencoders = stage_train_ae(config, dir);
  std::vector<std::string> kinds{"udta"};
  kinds.insert(kinds.end(), config.baselines.begin(), config.baselines.end());
  s.runs = fan_out(config, dir, kinds);
  write_json(dir / "summary.json", s.to_json());
  return s;
}

}  // namespace udta
