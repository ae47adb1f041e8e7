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

#ifndef KWS_AUDIO_H_
#define KWS_AUDIO_H_

#include <string>
#include <vector>

namespace kws {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;

struct AudioClip {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = kSampleRate;
};

// 16 kHz mono 16-bit PCM only. Anything else raises IoError; no resampling.
AudioClip ReadWav(const std::string& path);

// Writes 16-bit PCM, clipping samples to [-1, 1].
void WriteWav(const std::string& path, const AudioClip& clip);

// Zero-pads on the right or truncates to exactly `length` samples.
std::vector<float> FitLength(std::vector<float> samples, std::size_t length = kClipSamples);

double MeanPower(const std::vector<float>& samples);

}  // namespace kws

#endif  // KWS_AUDIO_H_
