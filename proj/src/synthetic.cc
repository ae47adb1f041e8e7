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

#include "kws/synthetic.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "kws/audio.h"
#include "kws/augment.h"
#include "kws/batch.h"
#include "kws/errors.h"
#include "kws/teacher_store.h"

namespace fs = std::filesystem;

namespace kws {
namespace {

constexpr double kTones[4] = {400.0, 1000.0, 2200.0, 4000.0};

// Ordered tone pairs; the first ten go to the target words.
constexpr int kPairs[16][2] = {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}, {1, 2}, {2, 1},
                               {1, 3}, {3, 1}, {2, 3}, {3, 2}, {0, 0}, {1, 1}, {2, 2}, {3, 3}};

int WordIndex(const std::string& word) {
  const int c = WordClass(word);
  if (c < kUnknownClass) return c;
  if (word.size() == 4 && word.rfind("unk", 0) == 0 && word[3] >= '0' && word[3] <= '5') {
    return kUnknownClass + (word[3] - '0');
  }
  KWS_FAIL(ConfigError, "'", word, "' is not a synthetic word");
}

std::string SpeakerId(std::uint64_t seed, std::size_t speaker) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x",
                static_cast<unsigned>(DeriveSeed(seed, "speaker", speaker) & 0xffffffffu));
  return buf;
}

}  // namespace

std::vector<std::string> SyntheticWords(std::size_t unknown_words) {
  KWS_CHECK(unknown_words <= 6, "at most 6 synthetic unknown words");
  std::vector<std::string> words(kClassNames.begin(), kClassNames.begin() + kUnknownClass);
  for (std::size_t i = 0; i < unknown_words; ++i) words.push_back("unk" + std::to_string(i));
  return words;
}

std::pair<double, double> SyntheticTones(const std::string& word) {
  const int i = WordIndex(word);
  return {kTones[kPairs[i][0]], kTones[kPairs[i][1]]};
}

std::vector<float> SynthesizeWord(const std::string& word, std::uint64_t seed, double noise_level) {
  const auto [f1, f2] = SyntheticTones(word);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double amp = 0.2 + 0.4 * u(rng);
  const double detune = 1.0 + 0.03 * (2 * u(rng) - 1);
  const std::size_t onset = static_cast<std::size_t>(1600 + 3200 * u(rng));
  const std::size_t tone_len = static_cast<std::size_t>(3200 + 1600 * u(rng));
  const std::size_t ramp = 160;

  std::vector<float> wave(kClipSamples);
  for (std::size_t n = 0; n < kClipSamples; ++n) {
    double s = noise_level * gauss(rng);
    if (n >= onset && n < onset + 2 * tone_len) {
      const std::size_t k = n - onset;
      const bool first = k < tone_len;
      const std::size_t pos = first ? k : k - tone_len;
      const double env = std::min({1.0, double(pos) / ramp, double(tone_len - pos) / ramp});
      const double f = (first ? f1 : f2) * detune;
      s += amp * env * std::sin(2 * std::numbers::pi * f * double(n) / kSampleRate);
    }
    wave[n] = static_cast<float>(std::clamp(s, -1.0, 1.0));
  }
  return wave;
}

void WriteSyntheticCorpus(const std::string& root, const SyntheticOptions& options) {
  KWS_CHECK(options.speakers >= 1 && options.clips_per_word >= 1, "empty synthetic corpus");
  fs::create_directories(root);
  std::vector<std::string> val_list, test_list;
  for (const std::string& word : SyntheticWords(options.unknown_words)) {
    fs::create_directories(fs::path(root) / word);
    for (std::size_t i = 0; i < options.clips_per_word; ++i) {
      const std::size_t speaker = i % options.speakers;
      const std::size_t take = i / options.speakers;
      const std::string file = SpeakerId(options.seed, speaker) + "_nohash_" + std::to_string(take) + ".wav";
      const std::uint64_t clip_seed = DeriveSeed(options.seed, word, i);
      WriteWav((fs::path(root) / word / file).string(),
               {SynthesizeWord(word, clip_seed, options.noise_level), kSampleRate});
      const Split split = HashSplit(file);
      if (split == Split::kVal) val_list.push_back(word + "/" + file);
      if (split == Split::kTest) test_list.push_back(word + "/" + file);
    }
  }

  fs::create_directories(fs::path(root) / "_background_noise_");
  for (std::size_t k = 0; k < options.noise_files; ++k) {
    Rng rng(DeriveSeed(options.seed, "noise", k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<float> noise(options.noise_seconds * kSampleRate);
    // Alternate white and brown-ish noise.
    double state = 0;
    for (float& v : noise) {
      const double w = gauss(rng);
      state = k % 2 ? 0.98 * state + 0.2 * w : w;
      v = static_cast<float>(std::clamp(0.1 * state, -1.0, 1.0));
    }
    WriteWav((fs::path(root) / "_background_noise_" / ("noise_" + std::to_string(k) + ".wav")).string(),
             {noise, kSampleRate});
  }

  if (options.write_lists) {
    std::ofstream val(fs::path(root) / "validation_list.txt");
    for (const auto& id : val_list) val << id << "\n";
    std::ofstream test(fs::path(root) / "testing_list.txt");
    for (const auto& id : test_list) test << id << "\n";
  }
}

void WriteSyntheticTeacher(const Manifest& manifest, const std::string& path, std::uint64_t seed,
                           std::size_t frames) {
  KWS_CHECK(frames >= 1, "teacher needs at least one frame");
  FeaturePipeline pipeline(manifest);
  const std::size_t bins = pipeline.frontend().config().n_mels;
  Rng rng(DeriveSeed(seed, "teacher_projection"));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(bins)));
  std::vector<double> proj(bins * kTeacherDim);
  for (double& w : proj) w = gauss(rng);

  TeacherStoreWriter writer(path);
  std::vector<float> out(frames * kTeacherDim);
  std::vector<double> row(bins);
  for (const Entry& e : manifest.entries) {
    const Spectrogram spec = pipeline.Features(pipeline.LoadWave(e));
    for (std::size_t t = 0; t < frames; ++t) {
      // Linear interpolation, endpoints aligned.
      const double pos = frames == 1 ? 0.0 : double(t) * double(spec.frames - 1) / double(frames - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, spec.frames - 1);
      const double a = pos - double(lo);
      for (std::size_t m = 0; m < bins; ++m) row[m] = (1 - a) * spec.at(lo, m) + a * spec.at(hi, m);
      for (std::size_t d = 0; d < kTeacherDim; ++d) {
        double acc = 0;
        for (std::size_t m = 0; m < bins; ++m) acc += row[m] * proj[m * kTeacherDim + d];
        out[t * kTeacherDim + d] = static_cast<float>(std::tanh(acc));
      }
    }
    writer.Add(e.id, frames, out);
  }
  writer.Finish();
}

}  // namespace kws
