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

// Waveform and spectrogram augmentations. Every random choice is drawn up
// front into an AugmentRecord so a run can be replayed from its log.

#ifndef KWS_AUGMENT_H_
#define KWS_AUGMENT_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "kws/audio.h"
#include "kws/frontend.h"

namespace kws {

using Rng = std::mt19937_64;

// Mixes the inputs into one well-spread 64-bit seed.
std::uint64_t DeriveSeed(std::uint64_t seed, const std::string& key, std::uint64_t a = 0,
                         std::uint64_t b = 0);

struct AugmentConfig {
  double coef_min = 0.95, coef_max = 0.99;
  int pitch_min = -5, pitch_max = 5;
  double snr_min_db = -5.0, snr_max_db = 15.0;
  double eq_center_min_hz = 100.0, eq_center_max_hz = 7000.0;
  double eq_q_min = 1.0, eq_q_max = 5.0;
  double eq_peak_gain_db = 6.0;
  std::size_t max_freq_mask = 10;
  std::size_t max_cutout_freq = 10;
  std::size_t max_cutout_time = 10;
  // Independent application probability of each operation.
  double p_pre_emphasis = 0.5;
  double p_de_emphasis = 0.5;
  double p_pitch = 0.5;
  double p_eq = 0.5;
  double p_noise = 0.5;
  double p_freq_mask = 0.5;
  double p_cutout = 0.5;

  void Validate() const;
  // Copy with pitch shift disabled, for views that must keep frame timing.
  AugmentConfig TimePreserving() const;
};

std::vector<float> PreEmphasize(const std::vector<float>& wave, double coef);
std::vector<float> DeEmphasize(const std::vector<float>& wave, double coef);

// Phase-vocoder time stretch followed by band-limited resampling back to the
// input length. Scales every frequency by 2^(n_steps/12).
std::vector<float> PitchShift(const std::vector<float>& wave, int n_steps,
                              int sample_rate = kSampleRate);

enum class EqMode { kNotch, kPeak };

// RBJ biquad. Rejects center_hz outside (0, Nyquist).
std::vector<float> EqFilter(const std::vector<float>& wave, EqMode mode, double center_hz,
                            double q, double gain_db = 6.0, int sample_rate = kSampleRate);

// Gain that puts `noise_power` at `snr_db` below `wave_power`.
double NoiseGain(double wave_power, double noise_power, double snr_db);

// wave + g * noise[0 .. wave.size()), clipped to [-1, 1]. A silent noise
// segment returns the wave; a silent wave returns the noise scaled to unit
// RMS (then clipped).
std::vector<float> MixNoise(const std::vector<float>& wave, const std::vector<float>& noise,
                            double snr_db);

struct MaskSpec {
  enum class Kind { kFreq, kCutout };
  Kind kind = Kind::kFreq;
  std::size_t bin_start = 0, bin_width = 0;
  std::size_t frame_start = 0, frame_width = 0;  // kFreq spans every frame
};

MaskSpec DrawFreqMask(std::size_t bins, std::size_t max_width, Rng& rng);
MaskSpec DrawCutout(std::size_t frames, std::size_t bins, std::size_t max_bins,
                    std::size_t max_frames, Rng& rng);
// Zeroes the masked cells; leaves every other cell untouched.
void ApplyMask(Spectrogram& spec, const MaskSpec& mask);

struct AugmentRecord {
  bool pre_emphasis = false;
  double pre_coef = 0;
  bool de_emphasis = false;
  double de_coef = 0;
  bool pitch = false;
  int pitch_steps = 0;
  bool eq = false;
  EqMode eq_mode = EqMode::kNotch;
  double eq_center_hz = 0, eq_q = 0, eq_gain_db = 0;
  bool noise = false;
  std::size_t noise_source = 0, noise_offset = 0;
  double snr_db = 0;
  std::vector<MaskSpec> masks;

  bool identity() const;
  nlohmann::json ToJson() const;
};

// Draws every decision for one utterance. `noise_lengths` lists the sample
// counts of the available noise sources; with none, noise mixing is never
// chosen.
AugmentRecord PlanAugmentation(const AugmentConfig& config,
                               const std::vector<std::size_t>& noise_lengths,
                               std::size_t wave_length, std::size_t frames, std::size_t bins,
                               Rng& rng);

// Waveform part of a plan, in the order pre, de, pitch, eq, noise.
std::vector<float> ApplyWaveAugment(const std::vector<float>& wave, const AugmentRecord& record,
                                    const std::vector<std::vector<float>>& noise_bank,
                                    int sample_rate = kSampleRate);

void ApplyMasks(Spectrogram& spec, const AugmentRecord& record);

}  // namespace kws

#endif  // KWS_AUGMENT_H_
