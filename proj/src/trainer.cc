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

#include "kws/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>

#include "kws/checkpoint.h"
#include "kws/errors.h"
#include "kws/ops.h"

namespace fs = std::filesystem;

namespace kws {
namespace {

// Reads known keys of a JSON object and rejects the rest.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) KWS_FAIL(ConfigError, where_, " must be a JSON object");
  }
  ~JsonReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) KWS_FAIL(ConfigError, "unknown config key '", where_, key, "'");
    }
  }

  template <typename T>
  void operator()(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      KWS_FAIL(ConfigError, "config key '", where_, key, "': ", e.what());
    }
  }

  const nlohmann::json* Child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void ReadWeights(const nlohmann::json& j, LossWeights& w) {
  JsonReader r(j, "weights.");
  r("lambda1", w.lambda1);
  r("lambda2", w.lambda2);
  r("gamma1", w.gamma1);
  r("gamma2", w.gamma2);
  r("gamma3", w.gamma3);
  r("tau", w.tau);
  r("symmetric_local", w.symmetric_local);
}

void ReadModel(const nlohmann::json& j, TcaNetConfig& m) {
  JsonReader r(j, "model.");
  r("input_frames", m.input_frames);
  r("mel_bins", m.mel_bins);
  r("channels", m.channels);
  r("first_kernel", m.first_kernel);
  r("first_stride", m.first_stride);
  r("kernel", m.kernel);
  r("separable_layers", m.separable_layers);
  r("num_heads", m.num_heads);
  r("sqrt_scaling", m.sqrt_scaling);
  r("num_classes", m.num_classes);
  r("wvc_hidden", m.wvc_hidden);
  r("teacher_dim", m.teacher_dim);
  r("siam_hidden", m.siam_hidden);
  r("siam_dim", m.siam_dim);
}

void ReadAugment(const nlohmann::json& j, AugmentConfig& a) {
  JsonReader r(j, "augment.");
  r("coef_min", a.coef_min);
  r("coef_max", a.coef_max);
  r("pitch_min", a.pitch_min);
  r("pitch_max", a.pitch_max);
  r("snr_min_db", a.snr_min_db);
  r("snr_max_db", a.snr_max_db);
  r("eq_center_min_hz", a.eq_center_min_hz);
  r("eq_center_max_hz", a.eq_center_max_hz);
  r("eq_q_min", a.eq_q_min);
  r("eq_q_max", a.eq_q_max);
  r("eq_peak_gain_db", a.eq_peak_gain_db);
  r("max_freq_mask", a.max_freq_mask);
  r("max_cutout_freq", a.max_cutout_freq);
  r("max_cutout_time", a.max_cutout_time);
  r("p_pre_emphasis", a.p_pre_emphasis);
  r("p_de_emphasis", a.p_de_emphasis);
  r("p_pitch", a.p_pitch);
  r("p_eq", a.p_eq);
  r("p_noise", a.p_noise);
  r("p_freq_mask", a.p_freq_mask);
  r("p_cutout", a.p_cutout);
}

void ReadDataset(const nlohmann::json& j, DatasetOptions& d) {
  JsonReader r(j, "dataset.");
  r("silence_fraction", d.silence_fraction);
  r("eval_unknown_fraction", d.eval_unknown_fraction);
  r("val_percent", d.val_percent);
  r("test_percent", d.test_percent);
}

nlohmann::json OrNull(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

std::vector<float> ModelConfigValues(const TcaNetConfig& c) {
  return {float(c.input_frames), float(c.mel_bins),   float(c.channels),     float(c.first_kernel),
          float(c.first_stride), float(c.kernel),     float(c.separable_layers), float(c.num_heads),
          float(c.sqrt_scaling), float(c.num_classes), float(c.wvc_hidden),  float(c.teacher_dim),
          float(c.siam_hidden),  float(c.siam_dim)};
}

TcaNetConfig ModelConfigFrom(const std::vector<float>& v) {
  if (v.size() != 14) KWS_FAIL(IntegrityError, "checkpoint model config has ", v.size(), " fields");
  auto n = [&v](int i) { return static_cast<std::size_t>(v[static_cast<std::size_t>(i)]); };
  TcaNetConfig c;
  c.input_frames = n(0);
  c.mel_bins = n(1);
  c.channels = n(2);
  c.first_kernel = n(3);
  c.first_stride = n(4);
  c.kernel = n(5);
  c.separable_layers = n(6);
  c.num_heads = n(7);
  c.sqrt_scaling = v[8] != 0;
  c.num_classes = n(9);
  c.wvc_hidden = n(10);
  c.teacher_dim = n(11);
  c.siam_hidden = n(12);
  c.siam_dim = n(13);
  c.Validate();
  return c;
}

constexpr const char* kConfigTensor = "meta/model_config";
constexpr const char* kStateTensor = "meta/train_state";
constexpr const char* kScheduleTensor = "meta/schedule";
const std::string kVelocityPrefix = "optim/velocity/";

std::vector<ParamGroup> TrainedGroups(Stage stage) {
  switch (stage) {
    case Stage::kWvc: return {ParamGroup::kEncoder, ParamGroup::kWvcHead};
    case Stage::kLgcsiam:
      return {ParamGroup::kEncoder, ParamGroup::kDecoder, ParamGroup::kSiamHead, ParamGroup::kWvcHead};
    case Stage::kFinetune:
      return {ParamGroup::kEncoder, ParamGroup::kDecoder, ParamGroup::kClassifier,
              ParamGroup::kSiamHead, ParamGroup::kWvcHead};
  }
  return {};
}

struct TermPlan {
  bool ce = false, lgcsiam = false, wvc = false;
};

TermPlan PlanTerms(const TrainConfig& c) {
  const LossWeights& w = c.weights;
  auto use = [&c](double weight) { return weight > 0 || !c.skip_zero_weight_terms; };
  switch (c.stage) {
    case Stage::kWvc: return {false, false, true};
    case Stage::kLgcsiam: return {false, use(w.lambda1), use(w.lambda2)};
    case Stage::kFinetune: return {use(w.gamma1), use(w.gamma2), use(w.gamma3)};
  }
  return {};
}

BatchMode ModeFor(const TermPlan& p) {
  if (p.lgcsiam) return p.wvc ? BatchMode::kJoint : BatchMode::kSiamese;
  if (p.wvc) return p.ce ? BatchMode::kJoint : BatchMode::kWvc;
  return BatchMode::kSupervised;
}

// Batch-norm running statistics follow the first encoder pass of a step;
// later passes (second view, clean view) restore them afterwards.
class BufferSnapshot {
 public:
  explicit BufferSnapshot(ModelParams& params) {
    for (const Parameter& p : params.entries()) {
      if (p.learnable) continue;
      tensors_.push_back(p.tensor);
      values_.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
  }
  void Restore() {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      std::copy(values_[i].begin(), values_[i].end(), tensors_[i].data().begin());
    }
  }

 private:
  std::vector<Tensor> tensors_;
  std::vector<std::vector<Real>> values_;
};

struct StepResult {
  LossTerms terms;
  Tensor total;
  std::size_t correct = 0;
};

std::size_t CountCorrect(const Tensor& probs, const std::vector<int>& labels) {
  const std::size_t classes = probs.shape()[1];
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = probs.data().subspan(b * classes, classes);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    correct += best == labels[b];
  }
  return correct;
}

StepResult Forward(Tape& tape, TcaNet& model, const Batch& batch, const TrainConfig& c,
                   const TermPlan& plan, Mode mode) {
  StepResult r;
  Tensor ce, lgcsiam, wvc;
  bool stats_taken = false;
  auto encode = [&](const Tensor& x) {
    if (mode == Mode::kEval || !stats_taken) {
      stats_taken = true;
      return model.Encode(tape, x, mode);
    }
    BufferSnapshot snapshot(model.params());
    Tensor e = model.Encode(tape, x, mode);
    snapshot.Restore();
    return e;
  };

  Tensor d1;
  if (plan.ce || plan.lgcsiam) d1 = model.Decode(tape, encode(batch.x1));
  if (plan.ce) {
    const Tensor probs = model.Classify(tape, d1);
    ce = CrossEntropy(tape, probs, batch.one_hot);
    r.correct = CountCorrect(probs, batch.labels);
    r.terms.ce = ce.item();
  }
  if (plan.lgcsiam) {
    const Tensor d2 = model.Decode(tape, encode(batch.x2));
    const LgcsiamParts parts =
        LgcsiamLossParts(tape, model.ProjectSiam(tape, d1), model.ProjectSiam(tape, d2),
                         c.weights.tau, c.weights.symmetric_local);
    lgcsiam = parts.total;
    r.terms.lgcsiam = parts.total.item();
    r.terms.global = parts.global.item();
    r.terms.local = parts.local.item();
  }
  if (plan.wvc) {
    const Tensor student = model.ProjectWvc(tape, encode(batch.clean));
    const std::size_t frames = AlignFrames(student.shape()[1], batch.teacher.shape()[1]);
    wvc = WvcLoss(tape, TakeFrames(tape, student, frames), TakeFrames(tape, batch.teacher, frames));
    r.terms.wvc = wvc.item();
  }
  switch (c.stage) {
    case Stage::kWvc: r.total = wvc; break;
    case Stage::kLgcsiam: r.total = PretrainLoss(tape, lgcsiam, wvc, c.weights); break;
    case Stage::kFinetune: r.total = FinetuneLoss(tape, ce, lgcsiam, wvc, c.weights); break;
  }
  r.terms.total = r.total.item();
  return r;
}

std::vector<std::size_t> SeededSubset(std::vector<std::size_t> indices, std::size_t cap,
                                      std::uint64_t seed) {
  if (cap == 0 || indices.size() <= cap) return indices;
  Rng rng(DeriveSeed(seed, "val_subset"));
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(cap);
  std::sort(indices.begin(), indices.end());
  return indices;
}

std::vector<std::size_t> Covered(const std::vector<std::size_t>& indices, const Manifest& m,
                                 const TeacherStore& teacher, bool require, const char* what) {
  std::vector<std::size_t> out;
  for (std::size_t i : indices) {
    if (teacher.Contains(m.entries[i].id)) out.push_back(i);
  }
  const std::size_t missing = indices.size() - out.size();
  if (missing > 0) {
    if (require) {
      KWS_FAIL(NotFoundError, missing, " of ", indices.size(), " ", what,
               " clips have no teacher embedding (first: '",
               m.entries[*std::find_if(indices.begin(), indices.end(),
                                       [&](std::size_t i) { return !teacher.Contains(m.entries[i].id); })]
                   .id,
               "')");
    }
    std::cerr << "warning: dropping " << missing << " " << what << " clips without teacher embeddings\n";
  }
  return out;
}

using ParamValues = std::vector<std::vector<Real>>;

ParamValues CopyValues(const ModelParams& params) {
  ParamValues out;
  for (const Parameter& p : params.entries()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void SetValues(ModelParams& params, const ParamValues& values) {
  std::size_t i = 0;
  for (const Parameter& p : params.entries()) {
    Tensor t = p.tensor;
    std::copy(values[i].begin(), values[i].end(), t.data().begin());
    ++i;
  }
}

}  // namespace

const char* StageName(Stage stage) {
  switch (stage) {
    case Stage::kWvc: return "wvc";
    case Stage::kLgcsiam: return "lgcsiam";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

Stage ParseStage(const std::string& name) {
  if (name == "wvc") return Stage::kWvc;
  if (name == "lgcsiam") return Stage::kLgcsiam;
  if (name == "finetune") return Stage::kFinetune;
  KWS_FAIL(ConfigError, "unknown stage '", name, "' (expected wvc, lgcsiam or finetune)");
}

std::size_t TrainConfig::epochs() const {
  if (max_epochs > 0) return max_epochs;
  return stage == Stage::kFinetune ? 60 : 30;
}

void TrainConfig::Validate() const {
  if (!(lr0 > 0)) KWS_FAIL(ConfigError, "lr0 must be positive");
  if (!(lr_decay_factor > 1)) KWS_FAIL(ConfigError, "lr_decay_factor must exceed 1");
  if (patience_epochs < 1) KWS_FAIL(ConfigError, "patience_epochs must be at least 1");
  if (!(min_lr >= 0)) KWS_FAIL(ConfigError, "min_lr must be non-negative");
  if (batch < 1) KWS_FAIL(ConfigError, "batch must be at least 1");
  if (!(momentum >= 0 && momentum < 1)) KWS_FAIL(ConfigError, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) KWS_FAIL(ConfigError, "weight_decay must be non-negative");
  if (!(label_fraction > 0 && label_fraction <= 1)) {
    KWS_FAIL(ConfigError, "label_fraction ", label_fraction, " outside (0, 1]");
  }
  weights.Validate();
  model.Validate();
  frontend.Validate();
  augment_config.Validate();
  if (model.input_frames != frontend.frames || model.mel_bins != frontend.n_mels) {
    KWS_FAIL(ConfigError, "model input [", model.input_frames, ", ", model.mel_bins,
             "] does not match the frontend [", frontend.frames, ", ", frontend.n_mels, "]");
  }
  if (model.num_classes != kNumClasses) KWS_FAIL(ConfigError, "model must have 12 classes");
  if (model.teacher_dim != kTeacherDim) KWS_FAIL(ConfigError, "teacher_dim must be 768");
  if (stage != Stage::kWvc && init_checkpoint.empty() && resume_checkpoint.empty() && !fresh_init) {
    KWS_FAIL(ConfigError, StageName(stage),
             " needs an init checkpoint; set fresh_init to train from random weights");
  }
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  JsonReader r(j, "");
  std::string stage = StageName(c.stage);
  r("stage", stage);
  c.stage = ParseStage(stage);
  r("batch", c.batch);
  r("lr0", c.lr0);
  r("momentum", c.momentum);
  r("weight_decay", c.weight_decay);
  r("lr_decay_factor", c.lr_decay_factor);
  r("patience_epochs", c.patience_epochs);
  r("min_lr", c.min_lr);
  r("max_epochs", c.max_epochs);
  r("steps_per_epoch", c.steps_per_epoch);
  r("max_steps", c.max_steps);
  r("max_val_clips", c.max_val_clips);
  r("seed", c.seed);
  r("label_fraction", c.label_fraction);
  r("skip_zero_weight_terms", c.skip_zero_weight_terms);
  r("augment", c.augment);
  r("require_teacher", c.require_teacher);
  r("fresh_init", c.fresh_init);
  r("log_every", c.log_every);
  r("log_augmentation", c.log_augmentation);
  r("evaluate_test", c.evaluate_test);
  r("data_root", c.data_root);
  r("teacher_store", c.teacher_store);
  r("init_checkpoint", c.init_checkpoint);
  r("resume_checkpoint", c.resume_checkpoint);
  r("run_dir", c.run_dir);
  if (const auto* w = r.Child("weights")) ReadWeights(*w, c.weights);
  if (const auto* m = r.Child("model")) ReadModel(*m, c.model);
  if (const auto* a = r.Child("augment_config")) ReadAugment(*a, c.augment_config);
  if (const auto* d = r.Child("dataset")) ReadDataset(*d, c.dataset);
  return c;
}

nlohmann::json TrainConfig::ToJson() const {
  const LossWeights& w = weights;
  const TcaNetConfig& m = model;
  const AugmentConfig& a = augment_config;
  return {
      {"stage", StageName(stage)},
      {"batch", batch},
      {"lr0", lr0},
      {"momentum", momentum},
      {"weight_decay", weight_decay},
      {"lr_decay_factor", lr_decay_factor},
      {"patience_epochs", patience_epochs},
      {"min_lr", min_lr},
      {"max_epochs", max_epochs},
      {"steps_per_epoch", steps_per_epoch},
      {"max_steps", max_steps},
      {"max_val_clips", max_val_clips},
      {"seed", seed},
      {"label_fraction", label_fraction},
      {"skip_zero_weight_terms", skip_zero_weight_terms},
      {"augment", augment},
      {"require_teacher", require_teacher},
      {"fresh_init", fresh_init},
      {"log_every", log_every},
      {"log_augmentation", log_augmentation},
      {"evaluate_test", evaluate_test},
      {"data_root", data_root},
      {"teacher_store", teacher_store},
      {"init_checkpoint", init_checkpoint},
      {"resume_checkpoint", resume_checkpoint},
      {"run_dir", run_dir},
      {"weights",
       {{"lambda1", w.lambda1}, {"lambda2", w.lambda2}, {"gamma1", w.gamma1}, {"gamma2", w.gamma2},
        {"gamma3", w.gamma3}, {"tau", w.tau}, {"symmetric_local", w.symmetric_local}}},
      {"model",
       {{"input_frames", m.input_frames}, {"mel_bins", m.mel_bins}, {"channels", m.channels},
        {"first_kernel", m.first_kernel}, {"first_stride", m.first_stride}, {"kernel", m.kernel},
        {"separable_layers", m.separable_layers}, {"num_heads", m.num_heads},
        {"sqrt_scaling", m.sqrt_scaling}, {"num_classes", m.num_classes},
        {"wvc_hidden", m.wvc_hidden}, {"teacher_dim", m.teacher_dim},
        {"siam_hidden", m.siam_hidden}, {"siam_dim", m.siam_dim}}},
      {"augment_config",
       {{"coef_min", a.coef_min}, {"coef_max", a.coef_max}, {"pitch_min", a.pitch_min},
        {"pitch_max", a.pitch_max}, {"snr_min_db", a.snr_min_db}, {"snr_max_db", a.snr_max_db},
        {"eq_center_min_hz", a.eq_center_min_hz}, {"eq_center_max_hz", a.eq_center_max_hz},
        {"eq_q_min", a.eq_q_min}, {"eq_q_max", a.eq_q_max}, {"eq_peak_gain_db", a.eq_peak_gain_db},
        {"max_freq_mask", a.max_freq_mask}, {"max_cutout_freq", a.max_cutout_freq},
        {"max_cutout_time", a.max_cutout_time}, {"p_pre_emphasis", a.p_pre_emphasis},
        {"p_de_emphasis", a.p_de_emphasis}, {"p_pitch", a.p_pitch}, {"p_eq", a.p_eq},
        {"p_noise", a.p_noise}, {"p_freq_mask", a.p_freq_mask}, {"p_cutout", a.p_cutout}}},
      {"dataset",
       {{"silence_fraction", dataset.silence_fraction},
        {"eval_unknown_fraction", dataset.eval_unknown_fraction},
        {"val_percent", dataset.val_percent},
        {"test_percent", dataset.test_percent}}},
  };
}

TrainConfig LoadTrainConfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) KWS_FAIL(IoError, "cannot read config ", path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    KWS_FAIL(ConfigError, path, ": ", e.what());
  }
  return TrainConfig::FromJson(j);
}

PlateauSchedule::PlateauSchedule(double lr0, double factor, std::size_t patience,
                                 bool higher_is_better)
    : lr0_(lr0), factor_(factor), patience_(patience), higher_is_better_(higher_is_better),
      lr_(lr0), best_(0) {
  KWS_CHECK(lr0 > 0 && factor > 1 && patience >= 1, "bad schedule parameters");
}

double PlateauSchedule::Update(double metric) {
  const auto m = static_cast<float>(metric);
  improved_last_ = !has_best_ || (higher_is_better_ ? m > best_ : m < best_);
  if (improved_last_) {
    best_ = m;
    has_best_ = true;
    stale_ = 0;
  } else if (++stale_ >= patience_) {
    lr_ /= factor_;
    ++decays_;
    stale_ = 0;
  }
  return lr_;
}

std::vector<float> PlateauSchedule::State() const {
  return {best_, float(has_best_), float(stale_), float(decays_), float(improved_last_)};
}

void PlateauSchedule::Restore(const std::vector<float>& s) {
  if (s.size() != 5) KWS_FAIL(IntegrityError, "schedule state has ", s.size(), " fields");
  best_ = s[0];
  has_best_ = s[1] != 0;
  stale_ = static_cast<std::size_t>(s[2]);
  decays_ = static_cast<std::size_t>(s[3]);
  improved_last_ = s[4] != 0;
  lr_ = lr0_;
  for (std::size_t i = 0; i < decays_; ++i) lr_ /= factor_;
}

nlohmann::json LossTerms::ToJson() const {
  return {{"total", OrNull(total)}, {"ce", OrNull(ce)},       {"lgcsiam", OrNull(lgcsiam)},
          {"global", OrNull(global)}, {"local", OrNull(local)}, {"wvc", OrNull(wvc)}};
}

nlohmann::json TrainReport::ToJson() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const EpochLog& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", OrNull(e.train_accuracy)},
                           {"val_loss", OrNull(e.val_loss)},
                           {"val_accuracy", OrNull(e.val_accuracy)},
                           {"lr", e.lr},
                           {"seconds", e.seconds},
                           {"best", e.best}});
  }
  return {{"stage", StageName(stage)},
          {"epochs", epochs_json},
          {"lr_trajectory", lr_trajectory},
          {"test_accuracy", OrNull(test_accuracy)},
          {"train_clips", train_clips},
          {"best_checkpoint", best_checkpoint},
          {"last_checkpoint", last_checkpoint}};
}

bool NeedsTeacher(const TrainConfig& config) { return PlanTerms(config).wvc; }

TrainData LoadTrainData(const TrainConfig& config, bool need_teacher) {
  if (config.data_root.empty()) KWS_FAIL(ConfigError, "data_root is not set");
  DatasetOptions opts = config.dataset;
  opts.seed = config.seed;
  TrainData data;
  auto manifest = std::make_shared<Manifest>(LoadDataset(config.data_root, opts));
  data.train = manifest->Indices(Split::kTrain);
  data.val = manifest->Indices(Split::kVal);
  data.test = manifest->Indices(Split::kTest);
  data.pipeline = std::make_shared<FeaturePipeline>(*manifest, config.frontend, config.augment_config);
  data.manifest = std::move(manifest);
  if (need_teacher) {
    if (config.teacher_store.empty()) KWS_FAIL(ConfigError, "teacher_store is not set");
    data.teacher = std::make_shared<TeacherStore>(TeacherStore::Open(config.teacher_store));
  }
  return data;
}

MetricsSink::MetricsSink(std::ostream* console, const std::string& path) : console_(console) {
  if (!path.empty()) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    file_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*file_) KWS_FAIL(IoError, "cannot write metrics to ", path);
  }
}

MetricsSink::~MetricsSink() = default;

void MetricsSink::Write(const nlohmann::json& record) {
  const std::string line = record.dump();
  if (console_) *console_ << line << std::endl;
  if (file_) *file_ << line << std::endl;
}

void SaveCheckpoint(const std::string& path, const TcaNet& model, const SgdMomentum* optimizer,
                    const TrainState* state) {
  std::vector<NamedTensor> tensors = model.params().Export();
  const std::vector<float> config = ModelConfigValues(model.config());
  tensors.push_back({kConfigTensor, {config.size()}, config});
  if (optimizer) {
    for (const auto& slot : optimizer->slots()) {
      tensors.push_back({kVelocityPrefix + slot.name, slot.param.shape(),
                         std::vector<float>(slot.velocity.begin(), slot.velocity.end())});
    }
  }
  if (state) {
    tensors.push_back({kStateTensor, {2}, {float(state->epoch), float(state->step)}});
    tensors.push_back({kScheduleTensor, {state->schedule.size()}, state->schedule});
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  WriteCheckpoint(tmp, tensors);
  fs::rename(tmp, path);
}

std::unique_ptr<TcaNet> LoadModel(const std::string& path) {
  const std::vector<NamedTensor> tensors = ReadCheckpoint(path);
  const NamedTensor* config = FindTensor(tensors, kConfigTensor);
  const TcaNetConfig c = config ? ModelConfigFrom(config->values) : TcaNetConfig{};
  auto model = std::make_unique<TcaNet>(c, 0);
  model->params().Import(tensors);
  return model;
}

std::size_t LoadWeights(const std::string& path, TcaNet& model) {
  const std::vector<NamedTensor> tensors = ReadCheckpoint(path);
  if (const NamedTensor* config = FindTensor(tensors, kConfigTensor)) {
    if (config->values != ModelConfigValues(model.config())) {
      KWS_FAIL(ConfigError, path, " was written for a different model configuration");
    }
  }
  // Heads a previous stage never trained may be absent.
  return model.params().Import(tensors, /*allow_missing=*/true);
}

Evaluation Evaluate(TcaNet& model, const Manifest& manifest, const FeaturePipeline& pipeline,
                    const std::vector<std::size_t>& indices, std::size_t batch) {
  KWS_CHECK(!indices.empty(), "evaluation split is empty");
  KWS_CHECK(batch >= 1, "batch must be positive");
  Evaluation ev;
  ev.confusion.assign(kNumClasses, std::vector<std::size_t>(kNumClasses, 0));
  BatchOptions opts;
  opts.mode = BatchMode::kSupervised;
  opts.augment = false;
  for (std::size_t i = 0; i < indices.size(); i += batch) {
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<long>(i),
                                         indices.begin() + static_cast<long>(std::min(indices.size(), i + batch)));
    const Batch b = MakeBatch(manifest, pipeline, nullptr, chunk, opts);
    Tape tape(false);
    const Tensor probs = model.Classify(tape, model.Decode(tape, model.Encode(tape, b.x1, Mode::kEval)));
    for (std::size_t k = 0; k < b.size(); ++k) {
      const auto row = probs.data().subspan(k * kNumClasses, kNumClasses);
      const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      ++ev.confusion[static_cast<std::size_t>(b.labels[k])][pred];
      ev.correct += pred == static_cast<std::size_t>(b.labels[k]);
    }
    ev.total += b.size();
  }
  ev.accuracy = 100.0 * double(ev.correct) / double(ev.total);
  return ev;
}

Inference Infer(TcaNet& model, const std::vector<float>& wave, const FrontendConfig& frontend) {
  const LogMelExtractor extractor(frontend);
  Spectrogram spec = extractor.Compute({FitLength(wave, frontend.clip_samples), frontend.sample_rate});
  NormalizeUtterance(spec);
  Tensor x({1, spec.frames, spec.bins});
  std::copy(spec.values.begin(), spec.values.end(), x.data().begin());
  Tape tape(false);
  const Tensor probs = model.Classify(tape, model.Decode(tape, model.Encode(tape, x, Mode::kEval)));
  Inference out;
  out.probabilities.assign(probs.data().begin(), probs.data().end());
  out.label = static_cast<int>(std::max_element(out.probabilities.begin(), out.probabilities.end()) -
                               out.probabilities.begin());
  out.name = kClassNames[static_cast<std::size_t>(out.label)];
  return out;
}

TrainReport Train(const TrainConfig& c, const TrainData& data, MetricsSink* sink,
                  std::unique_ptr<TcaNet>* model_out) {
  c.Validate();
  KWS_CHECK(data.manifest && data.pipeline, "training data is not loaded");
  const Manifest& manifest = *data.manifest;
  const FeaturePipeline& pipeline = *data.pipeline;
  const TermPlan plan = PlanTerms(c);
  const BatchMode batch_mode = ModeFor(plan);
  if (plan.wvc && !data.teacher) KWS_FAIL(ConfigError, "this stage needs a teacher store");
  auto emit = [sink](const nlohmann::json& j) {
    if (sink) sink->Write(j);
  };

  // Model and optimizer.
  std::unique_ptr<TcaNet> model;
  if (!c.resume_checkpoint.empty()) {
    model = LoadModel(c.resume_checkpoint);
    if (ModelConfigValues(model->config()) != ModelConfigValues(c.model)) {
      KWS_FAIL(ConfigError, c.resume_checkpoint, " was written for a different model configuration");
    }
  } else {
    model = std::make_unique<TcaNet>(c.model, DeriveSeed(c.seed, "init"));
    if (!c.init_checkpoint.empty()) LoadWeights(c.init_checkpoint, *model);
  }
  SgdMomentum optimizer(model->params().Learnable(TrainedGroups(c.stage)),
                        {c.lr0, c.momentum, c.weight_decay});
  PlateauSchedule schedule(c.lr0, c.lr_decay_factor, c.patience_epochs, c.stage == Stage::kFinetune);
  std::size_t start_epoch = 0, step = 0;
  if (!c.resume_checkpoint.empty()) {
    const std::vector<NamedTensor> tensors = ReadCheckpoint(c.resume_checkpoint);
    const NamedTensor* state = FindTensor(tensors, kStateTensor);
    const NamedTensor* sched = FindTensor(tensors, kScheduleTensor);
    if (!state || !sched) KWS_FAIL(IntegrityError, c.resume_checkpoint, " holds no training state");
    start_epoch = static_cast<std::size_t>(state->values[0]);
    step = static_cast<std::size_t>(state->values[1]);
    schedule.Restore(sched->values);
    for (auto& slot : optimizer.slots()) {
      const NamedTensor* v = FindTensor(tensors, kVelocityPrefix + slot.name);
      if (!v) KWS_FAIL(IntegrityError, c.resume_checkpoint, " has no optimizer state for ", slot.name);
      if (v->values.size() != slot.velocity.size()) {
        KWS_FAIL(IntegrityError, c.resume_checkpoint, " optimizer state for ", slot.name, " has the wrong size");
      }
      std::copy(v->values.begin(), v->values.end(), slot.velocity.begin());
    }
  }

  // Clip sets.
  std::vector<std::size_t> train = data.train;
  if (c.stage == Stage::kFinetune) train = LabelSubset(manifest, train, c.label_fraction, c.seed);
  std::vector<std::size_t> val = SeededSubset(data.val, c.max_val_clips, c.seed);
  if (plan.wvc) {
    train = Covered(train, manifest, *data.teacher, c.require_teacher, "training");
    val = Covered(val, manifest, *data.teacher, c.require_teacher, "validation");
    if (train.empty()) KWS_FAIL(NotFoundError, "the teacher store covers none of the training clips");
  }
  KWS_CHECK(!train.empty(), "no training clips");

  TrainReport report;
  report.stage = c.stage;
  report.train_clips = train.size();
  const fs::path run_dir = c.run_dir;
  if (!c.run_dir.empty()) {
    fs::create_directories(run_dir);
    std::ofstream(run_dir / "config.json") << c.ToJson().dump(2) << "\n";
    report.best_checkpoint = (run_dir / "best.ckpt").string();
    report.last_checkpoint = (run_dir / "last.ckpt").string();
  }
  std::unique_ptr<std::ofstream> augment_log;
  if (c.log_augmentation && !c.run_dir.empty()) {
    augment_log = std::make_unique<std::ofstream>(run_dir / "augment.jsonl", std::ios::app);
  }
  emit({{"type", "start"}, {"stage", StageName(c.stage)}, {"train_clips", train.size()},
        {"val_clips", val.size()}, {"start_epoch", start_epoch}, {"lr", schedule.lr()}});

  ParamValues best_values = CopyValues(model->params());
  bool have_best = false;
  const SupervisedSampler* sampler = nullptr;
  std::optional<SupervisedSampler> sampler_storage;
  if (c.stage == Stage::kFinetune) sampler = &sampler_storage.emplace(manifest, train);

  bool stop = false;
  for (std::size_t epoch = start_epoch; epoch < c.epochs() && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = schedule.lr();
    optimizer.set_lr(lr);

    std::vector<std::vector<std::size_t>> batches;
    if (sampler) {
      Rng rng(DeriveSeed(c.seed, "sample", epoch));
      const std::size_t n = c.steps_per_epoch ? c.steps_per_epoch : sampler->BatchesPerEpoch(c.batch);
      for (std::size_t i = 0; i < n; ++i) batches.push_back(sampler->Draw(c.batch, rng));
    } else {
      Rng rng(DeriveSeed(c.seed, "order", epoch));
      batches = EpochBatches(train, c.batch, rng);
      if (c.steps_per_epoch && batches.size() > c.steps_per_epoch) batches.resize(c.steps_per_epoch);
    }

    BatchOptions bopts;
    bopts.mode = batch_mode;
    bopts.augment = c.augment;
    bopts.seed = c.seed;
    bopts.epoch = epoch;
    bopts.keep_records = augment_log != nullptr;
    auto make = [&](std::size_t i) {
      return MakeBatch(manifest, pipeline, data.teacher.get(), batches[i], bopts);
    };

    double loss_sum = 0;
    std::size_t loss_count = 0, correct = 0, seen = 0;
    std::future<Batch> next;
    if (!batches.empty()) next = std::async(std::launch::async, make, 0);
    for (std::size_t i = 0; i < batches.size(); ++i) {
      if (c.max_steps && step >= c.max_steps) {
        stop = true;
        break;
      }
      const Batch batch = next.get();
      if (i + 1 < batches.size()) next = std::async(std::launch::async, make, i + 1);
      if (augment_log) {
        for (const auto& rec : batch.records) *augment_log << rec.dump() << "\n";
      }

      model->params().ZeroGrad();
      Tape tape;
      const StepResult r = Forward(tape, *model, batch, c, plan, Mode::kTrain);
      if (!std::isfinite(r.terms.total)) {
        KWS_FAIL(NumericError, "non-finite loss at epoch ", epoch, " step ", step);
      }
      tape.Backward(r.total);
      optimizer.Step();
      ++step;

      StepLog log{epoch, step, lr, r.terms, r.correct, batch.size()};
      report.steps.push_back(log);
      loss_sum += r.terms.total;
      ++loss_count;
      correct += r.correct;
      seen += batch.size();
      if (c.log_every && (step % c.log_every == 0 || step == 1)) {
        nlohmann::json j = {{"type", "step"}, {"stage", StageName(c.stage)}, {"epoch", epoch},
                            {"step", step},   {"lr", lr},                    {"loss", r.terms.ToJson()}};
        if (plan.ce) j["batch_accuracy"] = 100.0 * double(r.correct) / double(batch.size());
        emit(j);
      }
    }
    if (next.valid()) next.wait();
    if (loss_count == 0) break;

    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.train_loss = loss_sum / double(loss_count);
    if (plan.ce) e.train_accuracy = 100.0 * double(correct) / double(seen);

    double metric = 0;
    if (c.stage == Stage::kFinetune) {
      e.val_accuracy = val.empty() ? e.train_accuracy
                                   : Evaluate(*model, manifest, pipeline, val, c.batch).accuracy;
      metric = e.val_accuracy;
    } else if (val.empty()) {
      metric = e.train_loss;
    } else {
      BatchOptions vopts = bopts;
      vopts.seed = DeriveSeed(c.seed, "val");
      vopts.epoch = 0;
      vopts.keep_records = false;
      double sum = 0;
      for (std::size_t i = 0; i < val.size(); i += c.batch) {
        const std::vector<std::size_t> chunk(val.begin() + static_cast<long>(i),
                                             val.begin() + static_cast<long>(std::min(val.size(), i + c.batch)));
        const Batch vb = MakeBatch(manifest, pipeline, data.teacher.get(), chunk, vopts);
        Tape tape(false);
        sum += Forward(tape, *model, vb, c, plan, Mode::kEval).terms.total * double(vb.size());
      }
      e.val_loss = sum / double(val.size());
      metric = e.val_loss;
    }
    schedule.Update(metric);
    e.best = schedule.improved_last();
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.best) {
      best_values = CopyValues(model->params());
      have_best = true;
      if (!c.run_dir.empty()) SaveCheckpoint(report.best_checkpoint, *model, nullptr, nullptr);
    }
    if (!c.run_dir.empty()) {
      const TrainState state{epoch + 1, step, schedule.State()};
      SaveCheckpoint(report.last_checkpoint, *model, &optimizer, &state);
    }
    report.epochs.push_back(e);
    report.lr_trajectory.push_back(lr);
    emit({{"type", "epoch"},
          {"stage", StageName(c.stage)},
          {"epoch", epoch},
          {"train_loss", e.train_loss},
          {"train_accuracy", OrNull(e.train_accuracy)},
          {"val_loss", OrNull(e.val_loss)},
          {"val_accuracy", OrNull(e.val_accuracy)},
          {"lr", lr},
          {"next_lr", schedule.lr()},
          {"best", e.best},
          {"seconds", e.seconds}});
    if (schedule.lr() < c.min_lr) {
      emit({{"type", "stop"}, {"reason", "lr below min_lr"}, {"lr", schedule.lr()}});
      break;
    }
  }

  if (have_best) SetValues(model->params(), best_values);
  if (c.stage == Stage::kFinetune && c.evaluate_test && !data.test.empty()) {
    report.test_accuracy = Evaluate(*model, manifest, pipeline, data.test, c.batch).accuracy;
  }
  emit({{"type", "done"},
        {"stage", StageName(c.stage)},
        {"steps", step},
        {"epochs", report.epochs.size()},
        {"test_accuracy", OrNull(report.test_accuracy)},
        {"best_checkpoint", report.best_checkpoint}});
  if (!c.run_dir.empty()) std::ofstream(run_dir / "report.json") << report.ToJson().dump(2) << "\n";
  if (model_out) *model_out = std::move(model);
  return report;
}

}  // namespace kws
