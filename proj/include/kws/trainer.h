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

// Staged training: teacher distillation, siamese contrastive pretraining
// and supervised fine-tuning, plus evaluation and single-clip inference.

#ifndef KWS_TRAINER_H_
#define KWS_TRAINER_H_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kws/augment.h"
#include "kws/batch.h"
#include "kws/frontend.h"
#include "kws/losses.h"
#include "kws/manifest.h"
#include "kws/model.h"
#include "kws/optim.h"
#include "kws/teacher_store.h"

namespace kws {

enum class Stage { kWvc, kLgcsiam, kFinetune };

const char* StageName(Stage stage);
Stage ParseStage(const std::string& name);

struct TrainConfig {
  Stage stage = Stage::kFinetune;
  std::size_t batch = 128;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay_factor = 3.0;
  std::size_t patience_epochs = 3;
  double min_lr = 1e-4;
  std::size_t max_epochs = 0;  // 0: 30 for the pretraining stages, 60 for finetune
  // Desk-scale limits; 0 means none.
  std::size_t steps_per_epoch = 0;
  std::size_t max_steps = 0;
  std::size_t max_val_clips = 0;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
  LossWeights weights;
  // Leave out loss terms whose weight is zero instead of computing them
  // and multiplying by zero.
  bool skip_zero_weight_terms = true;
  bool augment = true;
  // Missing teacher record: fail, or drop the clip with a warning.
  bool require_teacher = true;
  // Pretraining and fine-tuning start from `init_checkpoint` when set;
  // `fresh_init` makes its absence explicit.
  bool fresh_init = false;
  std::size_t log_every = 10;
  bool log_augmentation = false;
  bool evaluate_test = true;

  std::string data_root;
  std::string teacher_store;
  std::string init_checkpoint;
  std::string resume_checkpoint;
  std::string run_dir;

  TcaNetConfig model;
  FrontendConfig frontend;
  AugmentConfig augment_config;
  DatasetOptions dataset;

  std::size_t epochs() const;
  // Throws ConfigError.
  void Validate() const;

  static TrainConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
};

TrainConfig LoadTrainConfig(const std::string& path);

// Plateau decay: divide by `factor` when the tracked metric has not beaten
// its best for `patience` consecutive epochs, then restart the count.
// Metrics are compared after rounding to float so a resumed run decides
// exactly as the original did.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr0, double factor, std::size_t patience, bool higher_is_better);

  // Feed one epoch's validation metric; returns the learning rate for the
  // next epoch.
  double Update(double metric);
  double lr() const { return lr_; }
  bool improved_last() const { return improved_last_; }
  float best() const { return best_; }
  std::size_t stale() const { return stale_; }
  std::size_t decays() const { return decays_; }

  // Checkpoint round trip.
  std::vector<float> State() const;
  void Restore(const std::vector<float>& state);

 private:
  double lr0_, factor_;
  std::size_t patience_;
  bool higher_is_better_;
  double lr_;
  float best_;
  bool has_best_ = false;
  bool improved_last_ = false;
  std::size_t stale_ = 0;
  std::size_t decays_ = 0;
};

// Loss components of one step; NaN marks a term that was not computed.
struct LossTerms {
  double total = std::numeric_limits<double>::quiet_NaN();
  double ce = std::numeric_limits<double>::quiet_NaN();
  double lgcsiam = std::numeric_limits<double>::quiet_NaN();
  double global = std::numeric_limits<double>::quiet_NaN();
  double local = std::numeric_limits<double>::quiet_NaN();
  double wvc = std::numeric_limits<double>::quiet_NaN();

  nlohmann::json ToJson() const;
};

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0;
  LossTerms loss;
  std::size_t correct = 0;  // finetune only
  std::size_t batch = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double lr = 0;  // rate used during this epoch
  double seconds = 0;
  bool best = false;
};

struct TrainReport {
  Stage stage = Stage::kFinetune;
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
  std::vector<double> lr_trajectory;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::size_t train_clips = 0;

  nlohmann::json ToJson() const;
};

// Dataset, features and teacher embeddings a run draws from. Index lists
// default to the manifest splits and may be narrowed by the caller.
struct TrainData {
  std::shared_ptr<const Manifest> manifest;
  std::shared_ptr<const FeaturePipeline> pipeline;
  std::shared_ptr<const TeacherStore> teacher;  // null when unused
  std::vector<std::size_t> train, val, test;
};

TrainData LoadTrainData(const TrainConfig& config, bool need_teacher);
// Whether the stage, with its weights, reads teacher embeddings.
bool NeedsTeacher(const TrainConfig& config);

// Streams every step and epoch record as one JSON line.
class MetricsSink {
 public:
  MetricsSink(std::ostream* console, const std::string& path);
  ~MetricsSink();
  void Write(const nlohmann::json& record);

 private:
  std::ostream* console_;
  std::unique_ptr<std::ostream> file_;
};

// Runs one stage. `model_out`, when given, receives the final weights.
TrainReport Train(const TrainConfig& config, const TrainData& data, MetricsSink* sink = nullptr,
                  std::unique_ptr<TcaNet>* model_out = nullptr);

// Checkpoint I/O: model weights, model config and, for training state,
// optimizer velocities and schedule counters.
struct TrainState {
  std::size_t epoch = 0;  // epochs completed
  std::size_t step = 0;
  std::vector<float> schedule;
};

void SaveCheckpoint(const std::string& path, const TcaNet& model, const SgdMomentum* optimizer,
                    const TrainState* state);
std::unique_ptr<TcaNet> LoadModel(const std::string& path);
// Weights only, shapes must agree with `model`; returns the entries loaded.
std::size_t LoadWeights(const std::string& path, TcaNet& model);

struct Evaluation {
  double accuracy = 0;  // percent
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

// Clean features, batch norm in eval mode.
Evaluation Evaluate(TcaNet& model, const Manifest& manifest, const FeaturePipeline& pipeline,
                    const std::vector<std::size_t>& indices, std::size_t batch = 128);

struct Inference {
  int label = 0;
  std::string name;
  std::vector<double> probabilities;
};

Inference Infer(TcaNet& model, const std::vector<float>& wave, const FrontendConfig& frontend = {});

}  // namespace kws

#endif  // KWS_TRAINER_H_
