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

// A small Speech Commands look-alike for tests and smoke runs. Each word is
// an ordered pair of tones; the ten target words and six unknown words
// cover all pairs drawn from four carrier frequencies.

#ifndef KWS_SYNTHETIC_H_
#define KWS_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include "kws/manifest.h"

namespace kws {

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t clips_per_word = 20;
  std::size_t unknown_words = 6;  // at most 6
  std::size_t speakers = 8;
  std::size_t noise_files = 2;
  std::size_t noise_seconds = 4;
  double noise_level = 0.02;  // additive floor in every spoken clip
  bool write_lists = false;   // validation_list.txt / testing_list.txt
};

// Word names in corpus order: targets first, then "unk0".."unk5".
std::vector<std::string> SyntheticWords(std::size_t unknown_words = 6);

// The two tone frequencies of a word.
std::pair<double, double> SyntheticTones(const std::string& word);

// One clip of `word`, kClipSamples long.
std::vector<float> SynthesizeWord(const std::string& word, std::uint64_t seed,
                                  double noise_level = 0.02);

void WriteSyntheticCorpus(const std::string& root, const SyntheticOptions& options);

// Stand-in teacher: clean normalized log-mel resampled to `frames` frames
// and pushed through a fixed seeded 40 -> 768 tanh projection.
void WriteSyntheticTeacher(const Manifest& manifest, const std::string& path,
                           std::uint64_t seed = 0, std::size_t frames = 49);

}  // namespace kws

#endif  // KWS_SYNTHETIC_H_
