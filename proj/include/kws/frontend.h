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

// Log-mel features: centered STFT with reflect padding, Hann window, power
// spectrum, triangular mel filters (HTK mel scale, area-normalized), natural
// log with a floor.

#ifndef KWS_FRONTEND_H_
#define KWS_FRONTEND_H_

#include <vector>

#include "kws/audio.h"

namespace kws {

struct FrontendConfig {
  int sample_rate = kSampleRate;
  std::size_t clip_samples = kClipSamples;
  std::size_t n_fft = 512;
  std::size_t win_length = 400;  // 25 ms
  std::size_t hop_length = 160;  // 10 ms
  std::size_t n_mels = 40;
  double f_min = 20.0;
  double f_max = 7600.0;
  double log_floor = 1e-10;
  std::size_t frames = 100;

  void Validate() const;
};

// Row-major [frames, bins].
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> values;

  float& at(std::size_t t, std::size_t m) { return values[t * bins + m]; }
  float at(std::size_t t, std::size_t m) const { return values[t * bins + m]; }
};

double HzToMel(double hz);
double MelToHz(double mel);

class LogMelExtractor {
 public:
  explicit LogMelExtractor(FrontendConfig config = {});

  // The clip is fitted to clip_samples first. Safe to call concurrently.
  Spectrogram Compute(const AudioClip& clip) const;

  const FrontendConfig& config() const { return config_; }
  // Peak frequency of each filter, Hz.
  const std::vector<double>& center_frequencies() const { return centers_; }
  // [n_mels, n_fft/2+1]
  const std::vector<double>& filterbank() const { return filters_; }

 private:
  FrontendConfig config_;
  std::vector<double> window_;  // n_fft long, win_length Hann centered
  std::vector<double> filters_;
  std::vector<double> centers_;
};

// Mean 0 / variance 1 over all cells. A constant input becomes all zeros.
void NormalizeUtterance(Spectrogram& spec);

}  // namespace kws

#endif  // KWS_FRONTEND_H_
