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

// Batch assembly: waveform loading, augmentation, features, labels and
// teacher embeddings, plus the samplers that choose what goes in a batch.

#ifndef KWS_BATCH_H_
#define KWS_BATCH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "kws/augment.h"
#include "kws/frontend.h"
#include "kws/manifest.h"
#include "kws/teacher_store.h"
#include "kws/tensor.h"

namespace kws {

// Loads clips for manifest entries and turns them into normalized log-mel
// features. Holds the background-noise bank used for both silence crops
// and noise augmentation. Read-only after construction.
class FeaturePipeline {
 public:
  FeaturePipeline(const Manifest& manifest, FrontendConfig frontend = {},
                  AugmentConfig augment = {});

  // Exactly kClipSamples long.
  std::vector<float> LoadWave(const Entry& entry) const;

  // log-mel -> per-utterance normalization -> masks from `record`, if any.
  Spectrogram Features(const std::vector<float>& wave, const AugmentRecord* record = nullptr) const;

  AugmentRecord Plan(Rng& rng, const AugmentConfig& config) const;
  std::vector<float> Augment(const std::vector<float>& wave, const AugmentRecord& record) const;

  const AugmentConfig& augment_config() const { return augment_; }
  const LogMelExtractor& frontend() const { return frontend_; }
  const std::vector<std::vector<float>>& noise_bank() const { return noise_bank_; }

 private:
  LogMelExtractor frontend_;
  AugmentConfig augment_;
  std::vector<std::string> noise_files_;
  std::vector<std::vector<float>> noise_bank_;
  std::vector<std::size_t> noise_lengths_;
};

enum class BatchMode {
  kSupervised,  // x1 (augmented) + labels
  kSiamese,     // x1, x2 (independent augmentations)
  kWvc,         // clean + teacher
  kJoint,       // x1, x2, clean + teacher, labels when known
};

struct BatchOptions {
  BatchMode mode = BatchMode::kSupervised;
  bool augment = true;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  // Missing teacher embedding: NotFoundError if set, else the clip is
  // dropped from the batch with a warning.
  bool require_teacher = true;
  bool keep_records = false;
};

struct Batch {
  std::vector<std::size_t> indices;  // manifest rows, aligned with every member
  std::vector<std::string> ids;
  Tensor x1, x2, clean;  // [B, frames, bins]
  std::vector<int> labels;
  Tensor one_hot;  // [B, 12]
  Tensor teacher;  // [B, F_t, 768], F_t = shortest record in the batch
  std::vector<nlohmann::json> records;

  std::size_t size() const { return indices.size(); }
};

Batch MakeBatch(const Manifest& manifest, const FeaturePipeline& pipeline,
                const TeacherStore* teacher, const std::vector<std::size_t>& indices,
                const BatchOptions& options);

// Stratified per class: round(fraction * class count) clips of each class,
// chosen by a seeded shuffle. Warns on classes that end up empty.
std::vector<std::size_t> LabelSubset(const Manifest& manifest,
                                     const std::vector<std::size_t>& indices, double fraction,
                                     std::uint64_t seed);

// Draws supervised batches with fixed proportions of unknown and silence
// clips; target words fill the rest. Pools that are empty hand their share
// to the targets.
class SupervisedSampler {
 public:
  SupervisedSampler(const Manifest& manifest, const std::vector<std::size_t>& indices,
                    double unknown_fraction = 0.1, double silence_fraction = 0.1);

  std::vector<std::size_t> Draw(std::size_t batch_size, Rng& rng) const;
  // Batches that cover the target pool about once.
  std::size_t BatchesPerEpoch(std::size_t batch_size) const;
  std::size_t pool_size() const { return targets_.size() + unknown_.size() + silence_.size(); }

 private:
  std::vector<std::size_t> targets_, unknown_, silence_;
  double unknown_fraction_, silence_fraction_;
};

// Seeded shuffle of `indices` cut into consecutive batches; the last
// partial batch is kept when it has at least `min_last` items.
std::vector<std::vector<std::size_t>> EpochBatches(std::vector<std::size_t> indices,
                                                   std::size_t batch_size, Rng& rng,
                                                   std::size_t min_last = 2);

}  // namespace kws

#endif  // KWS_BATCH_H_
