// Copyright 2026 The kws-tcanet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// kws: command-line front end for training, evaluation and data tooling.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "kws/audio.h"
#include "kws/errors.h"
#include "kws/manifest.h"
#include "kws/synthetic.h"
#include "kws/teacher_store.h"
#include "kws/trainer.h"

namespace fs = std::filesystem;
using namespace kws;

namespace {

// Flags shared by every config-driven subcommand; set values override the
// config file.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> label_fraction;
  std::optional<std::string> data_root, teacher_store, checkpoint, resume, run_dir;
  std::optional<std::size_t> max_epochs, steps_per_epoch, batch;
  bool fresh_init = false;

  void Register(CLI::App* app) {
    app->add_option("--config", config, "JSON training config");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--label-fraction", label_fraction, "Fraction of labeled training clips, (0, 1]");
    app->add_option("--data-root", data_root, "Speech Commands directory");
    app->add_option("--teacher-store", teacher_store, "Teacher embedding store (.w2ve)");
    app->add_option("--checkpoint", checkpoint, "Checkpoint to start from or to load");
  }
  void RegisterTraining(CLI::App* app) {
    app->add_option("--resume", resume, "Continue from a last.ckpt written by an earlier run");
    app->add_option("--run-dir", run_dir, "Directory for checkpoints and metrics");
    app->add_option("--max-epochs", max_epochs, "Epoch budget");
    app->add_option("--steps-per-epoch", steps_per_epoch, "Cap on steps per epoch");
    app->add_option("--batch", batch, "Batch size");
    app->add_flag("--fresh-init", fresh_init, "Start from random weights");
  }

  TrainConfig Load(Stage stage) const {
    TrainConfig c = config.empty() ? TrainConfig{} : LoadTrainConfig(config);
    if (!config.empty() && c.stage != stage) {
      std::cerr << "note: config stage '" << StageName(c.stage) << "' replaced by '" << StageName(stage)
                << "'\n";
    }
    c.stage = stage;
    if (seed) c.seed = *seed;
    if (label_fraction) c.label_fraction = *label_fraction;
    if (data_root) c.data_root = *data_root;
    if (teacher_store) c.teacher_store = *teacher_store;
    if (checkpoint) c.init_checkpoint = *checkpoint;
    if (resume) c.resume_checkpoint = *resume;
    if (run_dir) c.run_dir = *run_dir;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (steps_per_epoch) c.steps_per_epoch = *steps_per_epoch;
    if (batch) c.batch = *batch;
    if (fresh_init) c.fresh_init = true;
    return c;
  }
};

int RunTraining(const Overrides& o, Stage stage) {
  TrainConfig c = o.Load(stage);
  c.Validate();
  const TrainData data = LoadTrainData(c, NeedsTeacher(c));
  MetricsSink sink(&std::cout, c.run_dir.empty() ? "" : (fs::path(c.run_dir) / "metrics.jsonl").string());
  const TrainReport report = Train(c, data, &sink);
  if (c.run_dir.empty()) {
    std::cerr << "note: no --run-dir given, no checkpoint was written\n";
  }
  (void)report;
  return 0;
}

std::unique_ptr<TcaNet> RequireModel(const Overrides& o) {
  if (!o.checkpoint) KWS_FAIL(ConfigError, "--checkpoint is required");
  return LoadModel(*o.checkpoint);
}

int RunEvaluate(const Overrides& o, const std::string& split_name) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : LoadTrainConfig(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.data_root) c.data_root = *o.data_root;
  auto model = RequireModel(o);
  const TrainData data = LoadTrainData(c, false);
  const Split split = ParseSplit(split_name);
  const auto indices = data.manifest->Indices(split);
  const Evaluation ev = Evaluate(*model, *data.manifest, *data.pipeline, indices, c.batch);
  nlohmann::json confusion = ev.confusion;
  std::cout << nlohmann::json{{"type", "evaluation"},
                              {"split", SplitName(split)},
                              {"accuracy", ev.accuracy},
                              {"correct", ev.correct},
                              {"total", ev.total},
                              {"confusion", confusion}}
                   .dump()
            << std::endl;
  return 0;
}

int RunInfer(const Overrides& o, const std::string& wav) {
  auto model = RequireModel(o);
  const AudioClip clip = ReadWav(wav);
  const Inference r = Infer(*model, clip.samples);
  std::cout << r.name << "\n";
  for (std::size_t i = 0; i < r.probabilities.size(); ++i) {
    std::cout << "  " << std::left << std::setw(8) << kClassNames[i] << " " << std::fixed
              << std::setprecision(6) << r.probabilities[i] << "\n";
  }
  return 0;
}

int RunExportManifest(const Overrides& o, const std::string& out) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : LoadTrainConfig(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.data_root) c.data_root = *o.data_root;
  if (c.data_root.empty()) KWS_FAIL(ConfigError, "--data-root is required");
  DatasetOptions opts = c.dataset;
  opts.seed = c.seed;
  const Manifest m = LoadDataset(c.data_root, opts);
  if (out.empty() || out == "-") {
    m.WriteJsonLines(std::cout);
  } else {
    std::ofstream os(out);
    if (!os) KWS_FAIL(IoError, "cannot write ", out);
    m.WriteJsonLines(os);
  }
  if (m.used_hash_split) std::cerr << "note: no list files found, used the hash split\n";
  return 0;
}

int RunDescribe(const Overrides& o) {
  if (o.checkpoint) {
    std::cout << LoadModel(*o.checkpoint)->Describe();
    return 0;
  }
  TrainConfig c = o.config.empty() ? TrainConfig{} : LoadTrainConfig(o.config);
  std::cout << TcaNet(c.model, 0).Describe();
  return 0;
}

int RunVerifyStore(const std::string& path) {
  const StoreReport r = VerifyStore(path);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [frames, count] : r.frame_histogram) hist[std::to_string(frames)] = count;
  std::cout << nlohmann::json{{"ok", r.ok}, {"records", r.records}, {"errors", r.errors},
                              {"frame_histogram", hist}}
                   .dump()
            << std::endl;
  return r.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyword spotting with TCANet: pretraining, fine-tuning and evaluation"};
  app.require_subcommand(1);
  Overrides o;

  auto* wvc = app.add_subcommand("pretrain-wvc", "Distil teacher embeddings into the encoder");
  auto* lgc = app.add_subcommand("pretrain-lgcsiam", "Siamese contrastive pretraining");
  auto* ft = app.add_subcommand("finetune", "Supervised fine-tuning on the 12 classes");
  for (auto* sub : {wvc, lgc, ft}) {
    o.Register(sub);
    o.RegisterTraining(sub);
  }

  std::string split = "test";
  auto* eval = app.add_subcommand("evaluate", "Accuracy of a checkpoint on one split");
  o.Register(eval);
  eval->add_option("--split", split, "train, val or test");

  std::string wav;
  auto* infer = app.add_subcommand("infer", "Classify one WAV file");
  o.Register(infer);
  infer->add_option("wav", wav, "16 kHz mono PCM16 WAV")->required();

  std::string manifest_out;
  auto* manifest = app.add_subcommand("export-manifest", "Write the dataset manifest as JSON lines");
  o.Register(manifest);
  manifest->add_option("--out", manifest_out, "Output path (default stdout)");

  auto* describe = app.add_subcommand("describe", "Print the layer table and parameter counts");
  o.Register(describe);

  std::string store_path;
  auto* verify = app.add_subcommand("verify-store", "Check a teacher embedding store");
  verify->add_option("store", store_path, "Store path")->required();

  std::string synth_root;
  SyntheticOptions synth;
  auto* make_synth = app.add_subcommand("make-synthetic", "Write a small synthetic tone corpus");
  make_synth->add_option("root", synth_root, "Output directory")->required();
  make_synth->add_option("--seed", synth.seed);
  make_synth->add_option("--clips-per-word", synth.clips_per_word);
  make_synth->add_option("--speakers", synth.speakers);
  make_synth->add_flag("--write-lists", synth.write_lists);

  std::string teacher_out;
  std::uint64_t teacher_seed = 0;
  auto* make_teacher = app.add_subcommand("make-synthetic-teacher",
                                          "Write a stand-in teacher store for a corpus");
  make_teacher->add_option("--data-root", synth_root)->required();
  make_teacher->add_option("--out", teacher_out)->required();
  make_teacher->add_option("--seed", teacher_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*wvc) return RunTraining(o, Stage::kWvc);
    if (*lgc) return RunTraining(o, Stage::kLgcsiam);
    if (*ft) return RunTraining(o, Stage::kFinetune);
    if (*eval) return RunEvaluate(o, split);
    if (*infer) return RunInfer(o, wav);
    if (*manifest) return RunExportManifest(o, manifest_out);
    if (*describe) return RunDescribe(o);
    if (*verify) return RunVerifyStore(store_path);
    if (*make_synth) {
      WriteSyntheticCorpus(synth_root, synth);
      return 0;
    }
    if (*make_teacher) {
      WriteSyntheticTeacher(LoadDataset(synth_root, {.seed = teacher_seed}), teacher_out, teacher_seed);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
