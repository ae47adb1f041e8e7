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

#include "kws/frontend.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "fft.h"
#include "kws/errors.h"

namespace kws {

void FrontendConfig::Validate() const {
  if (sample_rate != kSampleRate) KWS_FAIL(ConfigError, "sample rate must be ", kSampleRate);
  if (win_length == 0 || win_length > n_fft) KWS_FAIL(ConfigError, "window longer than the FFT");
  if (hop_length == 0 || n_mels == 0 || frames == 0) KWS_FAIL(ConfigError, "empty frontend geometry");
  if (!(f_min >= 0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    KWS_FAIL(ConfigError, "mel range [", f_min, ", ", f_max, "] outside [0, Nyquist]");
  }
  if (!(log_floor > 0)) KWS_FAIL(ConfigError, "log floor must be positive");
  if (clip_samples <= n_fft / 2) KWS_FAIL(ConfigError, "clip too short for reflect padding");
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

LogMelExtractor::LogMelExtractor(FrontendConfig config) : config_(config) {
  config_.Validate();
  const std::size_t n_fft = config_.n_fft, bins = n_fft / 2 + 1;

  // Periodic Hann of win_length, zero-padded symmetrically to n_fft.
  window_.assign(n_fft, 0.0);
  const std::size_t offset = (n_fft - config_.win_length) / 2;
  for (std::size_t i = 0; i < config_.win_length; ++i) {
    window_[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / config_.win_length);
  }

  const std::size_t m = config_.n_mels;
  const double mel_lo = HzToMel(config_.f_min), mel_hi = HzToMel(config_.f_max);
  std::vector<double> edges(m + 2);
  for (std::size_t i = 0; i < m + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (m + 1));
  }
  filters_.assign(m * bins, 0.0);
  centers_.resize(m);
  for (std::size_t f = 0; f < m; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    centers_[f] = mid;
    const double norm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * config_.sample_rate / n_fft;
      const double rise = (hz - lo) / (mid - lo), fall = (hi - hz) / (hi - mid);
      filters_[f * bins + k] = norm * std::max(0.0, std::min(rise, fall));
    }
  }
}

Spectrogram LogMelExtractor::Compute(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate) {
    KWS_FAIL(ContractViolation, "clip sampled at ", clip.sample_rate, " Hz, expected ",
             config_.sample_rate, " (no implicit resampling)");
  }
  const std::size_t n = config_.clip_samples, n_fft = config_.n_fft, bins = n_fft / 2 + 1;
  const std::size_t pad = n_fft / 2;

  // Reflect padding without repeating the edge sample.
  std::vector<double> padded(n + 2 * pad);
  auto sample = [&](std::size_t i) {
    return i < clip.samples.size() ? static_cast<double>(clip.samples[i]) : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) padded[pad + i] = sample(i);
  for (std::size_t i = 1; i <= pad; ++i) {
    padded[pad - i] = sample(i);
    padded[pad + n - 1 + i] = sample(n - 1 - i);
  }

  const std::size_t available = 1 + n / config_.hop_length;
  Spectrogram spec;
  spec.frames = config_.frames;
  spec.bins = config_.n_mels;
  spec.values.assign(spec.frames * spec.bins, static_cast<float>(std::log(config_.log_floor)));

  internal::RealFft fft(n_fft);
  std::vector<double> in(n_fft), power(bins);
  std::vector<std::complex<double>> out(bins);
  for (std::size_t t = 0; t < std::min(available, spec.frames); ++t) {
    const double* frame = padded.data() + t * config_.hop_length;
    for (std::size_t i = 0; i < n_fft; ++i) in[i] = frame[i] * window_[i];
    fft.Forward(in.data(), out.data());
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(out[k]);
    for (std::size_t m = 0; m < spec.bins; ++m) {
      const double* w = filters_.data() + m * bins;
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
      spec.at(t, m) = static_cast<float>(std::log(std::max(e, config_.log_floor)));
    }
  }
  return spec;
}

void NormalizeUtterance(Spectrogram& spec) {
  if (spec.values.empty()) return;
  double s = 0.0;
  for (float v : spec.values) s += v;
  const double mean = s / spec.values.size();
  double ss = 0.0;
  for (float v : spec.values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / spec.values.size());
  const double inv = sd > 1e-8 ? 1.0 / sd : 0.0;
  for (float& v : spec.values) v = static_cast<float>((v - mean) * inv);
}

}  // namespace kws
