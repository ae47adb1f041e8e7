// Acceptance suite. One line per criterion:
//   PASS|FAIL|SKIP  <name>  <measurements>
// Usage: acceptance [criterion ...]   (default: all)
// Exit status: 0 all selected passed, 1 any failed, 77 all selected skipped.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "criteria.h"
#include "dsp_oracles.h"
#include "kws/augment.h"
#include "kws/frontend.h"
#include "kws/losses.h"
#include "kws/model.h"
#include "kws/synthetic.h"
#include "kws/trainer.h"

namespace fs = std::filesystem;
using namespace kws;
using namespace kws::acceptance;

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Checks {
  bool ok = true;
  std::ostringstream notes;

  void Expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes << "[failed: " << what << "] ";
    }
  }
  template <typename T>
  void Note(const std::string& key, const T& value) {
    notes << key << "=" << value << " ";
  }
  Outcome Result() const { return {ok ? Status::kPass : Status::kFail, notes.str()}; }
};

class ScratchDir {
 public:
  ScratchDir() {
    path_ = fs::temp_directory_path() / ("kws_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

const fs::path& Scratch() {
  static ScratchDir dir;
  return dir.path();
}

// Synthetic corpus and stand-in teacher shared by the training criteria.
const std::string& SyntheticRoot() {
  static const std::string root = [] {
    const std::string r = (Scratch() / "sc").string();
    SyntheticOptions opts;
    opts.seed = 21;
    opts.clips_per_word = 24;
    opts.speakers = 24;
    WriteSyntheticCorpus(r, opts);
    WriteSyntheticTeacher(LoadDataset(r, {.seed = 1}), (Scratch() / "teacher.w2ve").string());
    return r;
  }();
  return root;
}

Tensor RandomTensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Real& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

// ---------------------------------------------------------------------------

Outcome LossOracles() {
  Checks c;
  Tape tape(false);
  std::mt19937_64 rng(5);
  const std::size_t B = 2, F = 3, D = 5;
  const double tau = 0.5;
  const Tensor z1 = RandomTensor({B, F, D}, rng), z2 = RandomTensor({B, F, D}, rng);

  // Exhaustive double loop over anchors and candidates.
  auto row = [&](const Tensor& t, std::size_t b, std::size_t f) {
    std::vector<double> v(D);
    double n = 0;
    for (std::size_t d = 0; d < D; ++d) v[d] = t[(b * F + f) * D + d], n += v[d] * v[d];
    n = std::sqrt(n) + kNormEpsilon;
    for (double& x : v) x /= n;
    return v;
  };
  double oracle = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto a = row(z1, b, f);
      double denom = 0, pos = 0;
      for (std::size_t b2 = 0; b2 < B; ++b2) {
        for (std::size_t f2 = 0; f2 < F; ++f2) {
          const auto k = row(z2, b2, f2);
          const double s = std::inner_product(a.begin(), a.end(), k.begin(), 0.0) / tau;
          denom += std::exp(s);
          if (b2 == b && f2 == f) pos = s;
        }
      }
      oracle += -(pos - std::log(denom));
    }
  }
  oracle /= double(B * F);
  const double local = LocalLoss(tape, z1, z2, tau).item();
  c.Note("local_vs_oracle", std::abs(local - oracle));
  c.Expect(std::abs(local - oracle) <= 1e-6, "local loss vs double-loop oracle");

  Tensor same = Tensor::Full({B, F, D}, 0.7f);
  const double identical = LocalLoss(tape, same, same, tau).item();
  c.Note("identical_minus_logBF", identical - std::log(double(B * F)));
  c.Expect(std::abs(identical - std::log(double(B * F))) <= 1e-6, "identical vectors give log(B*F)");

  const Tensor zeros({4, 7, 128});
  const Tensor ones = Tensor::Full({4, 7, 128}, 1);
  const double global = GlobalLoss(tape, zeros, ones).item();
  c.Note("global", global);
  c.Expect(global == 128.0, "global loss on 0-vs-1 is 128");

  const Tensor uniform = Tensor::Full({3, 12}, Real(1.0 / 12));
  Tensor y({3, 12});
  y[0] = y[12 + 5] = y[24 + 11] = 1;
  const double ce = CrossEntropy(tape, uniform, y).item();
  c.Note("ce_minus_ln12", ce - std::log(12.0));
  c.Expect(std::abs(ce - std::log(12.0)) <= 1e-6, "cross entropy of uniform is ln 12");
  return c.Result();
}

Outcome Architecture() {
  Checks c;
  TcaNet net({}, 1);
  const std::string table = net.Describe();
  const std::string key = "TCANet parameters";
  const auto at = table.find(key);
  std::size_t reported = 0;
  if (at != std::string::npos) reported = std::stoul(table.substr(at + key.size()));
  c.Note("describe_count", reported);
  c.Expect(reported == net.InferenceParameterCount(), "describe matches the counted parameters");
  c.Expect(reported >= 55000 && reported <= 80000, "parameter count within [55K, 80K]");
  for (std::size_t B : {1, 3, 128}) {
    Tape tape(false);
    std::mt19937_64 rng(B);
    const Tensor x = RandomTensor({B, 100, 40}, rng);
    const Tensor e = net.Encode(tape, x, Mode::kEval);
    const Tensor d = net.Decode(tape, e);
    const Tensor p = net.Classify(tape, d);
    const bool ok = e.shape() == Shape{B, 50, 64} && d.shape() == Shape{B, 50, 64} &&
                    p.shape() == Shape{B, 12};
    c.Expect(ok, "shape chain at B=" + std::to_string(B));
  }
  c.Note("shape_chain", "[B,100,40]->[B,50,64]->[B,50,64]->[B,12] for B=1,3,128");
  return c.Result();
}

Outcome DspProperties() {
  using kws::testing::DftPeakHz;
  using kws::testing::Sine;
  Checks c;
  const auto t0 = Clock::now();

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<float> wave(16000);
  for (float& v : wave) v = static_cast<float>(u(rng));
  double emph = 0;
  for (double coef : {0.95, 0.97, 0.99}) {
    const auto back = DeEmphasize(PreEmphasize(wave, coef), coef);
    for (std::size_t i = 0; i < wave.size(); ++i) emph = std::max(emph, double(std::abs(back[i] - wave[i])));
  }
  c.Note("emphasis_roundtrip", emph);
  c.Expect(emph < 1e-6, "pre/de-emphasis round trip");

  const auto sine = Sine(440.0, 16000, 0.5);
  for (int steps : {-5, 5}) {
    const double expected = 440.0 * std::pow(2.0, steps / 12.0);
    const double peak = DftPeakHz(PitchShift(sine, steps), 200, 800);
    c.Note("pitch" + std::to_string(steps) + "_peak_hz", peak);
    c.Expect(std::abs(peak - expected) <= 1.0, "pitch shift " + std::to_string(steps) + " within one bin");
  }

  const LogMelExtractor fe{FrontendConfig{}};
  Spectrogram spec = fe.Compute({Sine(1000.0, 16000, 0.3), kSampleRate});
  const Spectrogram before = spec;
  ApplyMask(spec, {MaskSpec::Kind::kFreq, 7, 0, 0, 0});
  ApplyMask(spec, {MaskSpec::Kind::kCutout, 3, 0, 10, 0});
  c.Expect(spec.values == before.values, "zero-width masks are the identity");

  const Spectrogram silent = fe.Compute({std::vector<float>(16000, 0.0f), kSampleRate});
  const float floor = static_cast<float>(std::log(1e-10));
  bool floored = silent.frames == 100 && silent.bins == 40;
  for (float v : silent.values) floored = floored && v == floor;
  c.Expect(floored, "silence sits on the log floor, shape [100, 40]");

  const Spectrogram tone = fe.Compute({Sine(440.0, 16000, 1.0), kSampleRate});
  std::vector<double> mean(tone.bins, 0.0);
  for (std::size_t t = 0; t < tone.frames; ++t) {
    for (std::size_t m = 0; m < tone.bins; ++m) mean[m] += tone.at(t, m);
  }
  const auto peak_bin = std::max_element(mean.begin(), mean.end()) - mean.begin();
  const auto& centers = fe.center_frequencies();
  std::size_t nearest = 0;
  for (std::size_t m = 1; m < centers.size(); ++m) {
    if (std::abs(centers[m] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = m;
  }
  c.Note("peak_bin", peak_bin);
  c.Note("nearest_center_bin", nearest);
  c.Expect(static_cast<std::size_t>(peak_bin) == nearest, "440 Hz peak on the nearest filter");

  const double seconds = Since(t0);
  c.Note("seconds", seconds);
  c.Expect(seconds < 60, "runtime under one minute");
  return c.Result();
}

TrainConfig MechanicsConfig(Stage stage, std::uint64_t seed) {
  TrainConfig c;
  c.stage = stage;
  c.seed = seed;
  c.data_root = SyntheticRoot();
  c.teacher_store = (Scratch() / "teacher.w2ve").string();
  c.log_every = 0;
  c.fresh_init = true;
  return c;
}

TrainData MechanicsData(const TrainConfig& c) {
  TrainConfig load = c;
  load.seed = 1;
  return LoadTrainData(load, true);
}

// 64 training clips, as even across the 12 classes as the split allows.
std::vector<std::size_t> SixtyFour(const Manifest& m, const std::vector<std::size_t>& train) {
  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  for (std::size_t i : train) by_class[static_cast<std::size_t>(m.entries[i].label)].push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t round = 0; out.size() < 64; ++round) {
    bool any = false;
    for (auto& pool : by_class) {
      if (round < pool.size() && out.size() < 64) out.push_back(pool[round]), any = true;
    }
    if (!any) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome TrainingMechanics() {
  Checks c;
  const auto t0 = Clock::now();

  // Scripted validation accuracies.
  PlateauSchedule s(0.1, 3, 3, true);
  std::vector<double> lrs;
  for (double acc : {80, 79, 78, 77}) lrs.push_back(s.Update(acc));
  const bool first = lrs[0] == 0.1 && lrs[1] == 0.1 && lrs[2] == 0.1 && lrs[3] == 0.1 / 3;
  for (double acc : {76, 75, 74}) s.Update(acc);
  const bool second = s.lr() == 0.1 / 3 / 3;
  PlateauSchedule rising(0.1, 3, 3, true);
  bool flat = true;
  for (double acc : {10, 20, 30, 40, 50, 60}) flat = flat && rising.Update(acc) == 0.1;
  c.Note("lr_after_80_79_78_77", lrs[3]);
  c.Note("lr_after_two_plateaus", s.lr());
  c.Expect(first && second && flat, "plateau schedule trajectory");

  // Overfit: 64 clean clips, plain cross-entropy.
  TrainConfig o = MechanicsConfig(Stage::kFinetune, 3);
  TrainData data = MechanicsData(o);
  data.train = SixtyFour(*data.manifest, data.train);
  data.val = data.train;
  o.augment = false;
  o.weights.gamma2 = 0;
  o.weights.gamma3 = 0;
  o.batch = 32;
  o.steps_per_epoch = 20;
  o.max_epochs = 15;
  o.max_steps = 300;
  o.evaluate_test = false;
  std::unique_ptr<TcaNet> model;
  const TrainReport r = Train(o, data, nullptr, &model);
  const double train_acc = Evaluate(*model, *data.manifest, *data.pipeline, data.train).accuracy;
  std::size_t steps_to_95 = 0;
  for (const EpochLog& e : r.epochs) {
    if (e.val_accuracy >= 95.0) {
      steps_to_95 = (e.epoch + 1) * o.steps_per_epoch;
      break;
    }
  }
  c.Note("overfit_clips", data.train.size());
  c.Note("overfit_steps", r.steps.size());
  c.Note("overfit_train_acc", train_acc);
  c.Note("steps_to_95", steps_to_95);
  c.Expect(data.train.size() == 64, "64 clips");
  c.Expect(r.steps.size() <= 300 && train_acc >= 95.0, "overfit to >= 95% within 300 steps");

  // Full staged run twice under one seed.
  auto pipeline_run = [&](const std::string& tag, std::vector<double>& losses) {
    const fs::path dir = Scratch() / ("det_" + tag);
    TrainConfig w = MechanicsConfig(Stage::kWvc, 17);
    w.batch = 16;
    w.max_epochs = 2;
    w.steps_per_epoch = 2;
    w.max_val_clips = 16;
    w.run_dir = (dir / "wvc").string();
    const TrainData d = MechanicsData(w);
    const TrainReport a = Train(w, d);
    TrainConfig l = w;
    l.stage = Stage::kLgcsiam;
    l.fresh_init = false;
    l.init_checkpoint = a.best_checkpoint;
    l.run_dir = (dir / "lgc").string();
    const TrainReport b = Train(l, d);
    TrainConfig f = l;
    f.stage = Stage::kFinetune;
    f.init_checkpoint = b.best_checkpoint;
    f.run_dir = (dir / "ft").string();
    const TrainReport t = Train(f, d);
    for (const TrainReport* rep : {&a, &b, &t}) {
      for (const StepLog& st : rep->steps) losses.push_back(st.loss.total);
      for (const EpochLog& e : rep->epochs) {
        losses.push_back(std::isnan(e.val_loss) ? e.val_accuracy : e.val_loss);
      }
    }
    losses.push_back(t.test_accuracy);
    std::ifstream is(t.best_checkpoint, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  std::vector<double> la, lb;
  const std::string ca = pipeline_run("a", la);
  const std::string cb = pipeline_run("b", lb);
  c.Note("determinism_values", la.size());
  c.Expect(!la.empty() && la == lb, "identical losses, metrics and test accuracy");
  c.Expect(!ca.empty() && ca == cb, "identical final checkpoint bytes");

  c.Note("seconds", Since(t0));
  return c.Result();
}

double EnvNumber(const char* name, double fallback) {
  const char* v = std::getenv(name);
  return v ? std::atof(v) : fallback;
}

Outcome LgcsiamTrend() {
  const char* root = std::getenv("KWS_SPEECH_COMMANDS");
  if (!root || !*root) {
    return {Status::kSkip, "set KWS_SPEECH_COMMANDS to a Speech Commands directory to run"};
  }
  Checks c;
  const auto pretrain_steps = static_cast<std::size_t>(EnvNumber("KWS_TREND_PRETRAIN_STEPS", 300));
  const auto finetune_epochs = static_cast<std::size_t>(EnvNumber("KWS_TREND_FINETUNE_EPOCHS", 30));
  const auto batch = static_cast<std::size_t>(EnvNumber("KWS_TREND_BATCH", 64));
  TrainConfig base;
  base.data_root = root;
  base.batch = batch;
  base.log_every = 0;
  base.max_val_clips = 1000;
  const TrainData data = LoadTrainData(base, false);

  double sum_base = 0, sum_pre = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig pre = base;
    pre.stage = Stage::kLgcsiam;
    pre.seed = seed;
    pre.fresh_init = true;
    pre.weights.lambda2 = 0;
    pre.max_steps = pretrain_steps;
    pre.run_dir = (Scratch() / ("trend_pre_" + std::to_string(seed))).string();
    const TrainReport p = Train(pre, data);

    TrainConfig ft = base;
    ft.stage = Stage::kFinetune;
    ft.seed = seed;
    ft.label_fraction = 0.05;
    ft.max_epochs = finetune_epochs;
    ft.weights.gamma3 = 0;
    TrainConfig plain = ft;
    plain.weights.gamma2 = 0;
    plain.fresh_init = true;
    const double baseline = Train(plain, data).test_accuracy;
    ft.fresh_init = false;
    ft.init_checkpoint = p.best_checkpoint;
    const double pretrained = Train(ft, data).test_accuracy;
    c.Note("seed" + std::to_string(seed) + "_baseline", baseline);
    c.Note("seed" + std::to_string(seed) + "_lgcsiam", pretrained);
    sum_base += baseline;
    sum_pre += pretrained;
  }
  const double gain = (sum_pre - sum_base) / 3.0;
  c.Note("mean_gain_points", gain);
  c.Expect(gain >= 0.5, "pretrained mean exceeds baseline by 0.5 points");
  return c.Result();
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"gradients", GradientIntegrity}, {"losses", LossOracles},
      {"architecture", Architecture},   {"dsp", DspProperties},
      {"training", TrainingMechanics},  {"lgcsiam_trend", LgcsiamTrend},
  };
  std::vector<const Criterion*> selected;
  for (int i = 1; i < argc; ++i) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return c.name == std::string(argv[i]); });
    if (it == all.end()) {
      std::cerr << "unknown criterion '" << argv[i] << "'; known:";
      for (const auto& c : all) std::cerr << " " << c.name;
      std::cerr << "\n";
      return 2;
    }
    selected.push_back(&*it);
  }
  if (selected.empty()) {
    for (const auto& c : all) selected.push_back(&c);
  }

  std::size_t failed = 0, skipped = 0;
  for (const Criterion* c : selected) {
    Outcome out;
    try {
      out = c->run();
    } catch (const std::exception& e) {
      out = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = out.status == Status::kPass ? "PASS" : out.status == Status::kSkip ? "SKIP" : "FAIL";
    std::cout << tag << "  " << c->name << "  " << out.detail << std::endl;
    failed += out.status == Status::kFail;
    skipped += out.status == Status::kSkip;
  }
  if (failed) return 1;
  if (skipped == selected.size()) return 77;
  return 0;
}
