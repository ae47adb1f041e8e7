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

// Speech Commands ingestion: 12-way labels, train/val/test splits and
// synthesized silence clips.

#ifndef KWS_MANIFEST_H_
#define KWS_MANIFEST_H_

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace kws {

inline constexpr std::size_t kNumClasses = 12;
inline constexpr int kUnknownClass = 10;
inline constexpr int kSilenceClass = 11;
inline const std::array<std::string, kNumClasses> kClassNames = {
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go", "unknown", "silence"};

// Class index of a word directory: 0-9 for the targets, unknown otherwise.
int WordClass(const std::string& word);

enum class Split { kTrain, kVal, kTest };
const char* SplitName(Split split);
Split ParseSplit(const std::string& name);

// The dataset's published assignment: SHA-1 of the file name with its
// "_nohash_" suffix removed, reduced to a percentage.
Split HashSplit(const std::string& filename, double val_percent = 10.0, double test_percent = 10.0);

struct Entry {
  std::string id;    // path relative to the root, e.g. "yes/abc_nohash_0.wav"
  std::string path;  // absolute path; for silence, the background noise file
  int label = 0;
  Split split = Split::kTrain;
  bool silence = false;
  std::size_t offset = 0;  // silence crop start, samples
};

struct DatasetOptions {
  std::uint64_t seed = 0;
  // Silence clips per split, as a fraction of that split's target-word count.
  double silence_fraction = 0.1;
  // Unknown-word clips kept in val/test, as a fraction of target count.
  // Training keeps every unknown clip; the sampler rebalances.
  double eval_unknown_fraction = 0.1;
  double val_percent = 10.0;
  double test_percent = 10.0;
};

struct Manifest {
  std::string root;
  std::vector<Entry> entries;
  std::vector<std::string> noise_files;
  bool used_hash_split = false;

  std::vector<std::size_t> Indices(Split split) const;
  std::vector<std::size_t> Indices(Split split, int label) const;
  const Entry* Find(const std::string& id) const;
  // One JSON object per line.
  void WriteJsonLines(std::ostream& os) const;
};

// Walks `root`. Uses validation_list.txt / testing_list.txt when both exist,
// else falls back to HashSplit. A missing root raises IoError.
Manifest LoadDataset(const std::string& root, const DatasetOptions& options = {});

}  // namespace kws

#endif  // KWS_MANIFEST_H_
