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

#include "kws/batch.h"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "kws/errors.h"

namespace kws {
namespace {

void CopyInto(Tensor& dst, std::size_t row, const Spectrogram& spec) {
  const std::size_t n = spec.values.size();
  std::copy(spec.values.begin(), spec.values.end(), dst.data().begin() + static_cast<long>(row * n));
}

}  // namespace

FeaturePipeline::FeaturePipeline(const Manifest& manifest, FrontendConfig frontend,
                                 AugmentConfig augment)
    : frontend_(frontend), augment_(augment), noise_files_(manifest.noise_files) {
  augment_.Validate();
  for (const std::string& f : noise_files_) {
    noise_bank_.push_back(ReadWav(f).samples);
    noise_lengths_.push_back(noise_bank_.back().size());
  }
}

std::vector<float> FeaturePipeline::LoadWave(const Entry& entry) const {
  if (entry.silence) {
    const auto it = std::find(noise_files_.begin(), noise_files_.end(), entry.path);
    KWS_CHECK(it != noise_files_.end(), "silence source ", entry.path, " is not in the noise bank");
    const auto& source = noise_bank_[static_cast<std::size_t>(it - noise_files_.begin())];
    KWS_CHECK(entry.offset + kClipSamples <= source.size(), "silence crop out of range");
    return {source.begin() + static_cast<long>(entry.offset),
            source.begin() + static_cast<long>(entry.offset + kClipSamples)};
  }
  return FitLength(ReadWav(entry.path).samples);
}

Spectrogram FeaturePipeline::Features(const std::vector<float>& wave,
                                      const AugmentRecord* record) const {
  AudioClip clip{wave, kSampleRate};
  Spectrogram spec = frontend_.Compute(clip);
  NormalizeUtterance(spec);
  if (record) ApplyMasks(spec, *record);
  return spec;
}

AugmentRecord FeaturePipeline::Plan(Rng& rng, const AugmentConfig& config) const {
  const auto& fc = frontend_.config();
  return PlanAugmentation(config, noise_lengths_, fc.clip_samples, fc.frames, fc.n_mels, rng);
}

std::vector<float> FeaturePipeline::Augment(const std::vector<float>& wave,
                                            const AugmentRecord& record) const {
  return ApplyWaveAugment(wave, record, noise_bank_);
}

Batch MakeBatch(const Manifest& manifest, const FeaturePipeline& pipeline,
                const TeacherStore* teacher, const std::vector<std::size_t>& indices,
                const BatchOptions& options) {
  const bool wants_teacher = options.mode == BatchMode::kWvc || options.mode == BatchMode::kJoint;
  const bool wants_views = options.mode != BatchMode::kWvc;
  const bool wants_pair = options.mode == BatchMode::kSiamese || options.mode == BatchMode::kJoint;
  const bool wants_clean = wants_teacher;
  if (wants_teacher && !teacher) KWS_FAIL(ConfigError, "this batch mode needs a teacher store");

  Batch batch;
  std::vector<TeacherEmbedding> embeddings;
  for (std::size_t idx : indices) {
    KWS_CHECK(idx < manifest.entries.size(), "manifest index ", idx, " out of range");
    const Entry& e = manifest.entries[idx];
    if (wants_teacher && !teacher->Contains(e.id)) {
      if (options.require_teacher) KWS_FAIL(NotFoundError, "no teacher embedding for '", e.id, "'");
      std::cerr << "warning: skipping '" << e.id << "' (no teacher embedding)\n";
      continue;
    }
    batch.indices.push_back(idx);
    batch.ids.push_back(e.id);
    batch.labels.push_back(e.label);
    if (wants_teacher) embeddings.push_back(teacher->Read(e.id));
  }
  const std::size_t B = batch.size();
  KWS_CHECK(B >= 1, "empty batch");
  const auto& fc = pipeline.frontend().config();
  const Shape feature_shape = {B, fc.frames, fc.n_mels};

  if (wants_views) batch.x1 = Tensor(feature_shape);
  if (wants_pair) batch.x2 = Tensor(feature_shape);
  if (wants_clean) batch.clean = Tensor(feature_shape);
  batch.one_hot = Tensor({B, kNumClasses});

  for (std::size_t b = 0; b < B; ++b) {
    const Entry& e = manifest.entries[batch.indices[b]];
    batch.one_hot[b * kNumClasses + static_cast<std::size_t>(e.label)] = 1;
    const std::vector<float> wave = pipeline.LoadWave(e);
    if (wants_clean) CopyInto(batch.clean, b, pipeline.Features(wave));
    const int views = wants_pair ? 2 : wants_views ? 1 : 0;
    nlohmann::json item_records = nlohmann::json::array();
    for (int v = 0; v < views; ++v) {
      Tensor& dst = v == 0 ? batch.x1 : batch.x2;
      if (!options.augment) {
        CopyInto(dst, b, pipeline.Features(wave));
        continue;
      }
      Rng rng(DeriveSeed(options.seed, e.id, options.epoch, static_cast<std::uint64_t>(v)));
      const AugmentRecord record = pipeline.Plan(rng, pipeline.augment_config());
      CopyInto(dst, b, pipeline.Features(pipeline.Augment(wave, record), &record));
      if (options.keep_records) item_records.push_back(record.ToJson());
    }
    if (options.keep_records) batch.records.push_back({{"id", e.id}, {"views", item_records}});
  }

  if (wants_teacher) {
    std::size_t frames = embeddings[0].frames;
    for (const auto& t : embeddings) frames = std::min(frames, t.frames);
    batch.teacher = Tensor({B, frames, kTeacherDim});
    const std::size_t per_item = frames * kTeacherDim;
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(embeddings[b].values.begin(), embeddings[b].values.begin() + static_cast<long>(per_item),
                batch.teacher.data().begin() + static_cast<long>(b * per_item));
    }
  }
  return batch;
}

std::vector<std::size_t> LabelSubset(const Manifest& manifest,
                                     const std::vector<std::size_t>& indices, double fraction,
                                     std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) KWS_FAIL(ConfigError, "label fraction ", fraction, " outside (0, 1]");
  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  for (std::size_t i : indices) by_class[static_cast<std::size_t>(manifest.entries[i].label)].push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& pool = by_class[c];
    if (pool.empty()) continue;
    Rng rng(DeriveSeed(seed, "label_subset", c));
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    if (keep == 0) {
      std::cerr << "warning: label fraction " << fraction << " selects no '" << kClassNames[c]
                << "' clips (" << pool.size() << " available)\n";
    }
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<long>(keep));
  }
  if (out.empty()) KWS_FAIL(ConfigError, "label fraction ", fraction, " selects no training clips");
  std::sort(out.begin(), out.end());
  return out;
}

SupervisedSampler::SupervisedSampler(const Manifest& manifest,
                                     const std::vector<std::size_t>& indices,
                                     double unknown_fraction, double silence_fraction)
    : unknown_fraction_(unknown_fraction), silence_fraction_(silence_fraction) {
  KWS_CHECK(unknown_fraction >= 0 && silence_fraction >= 0 && unknown_fraction + silence_fraction <= 1,
            "bad sampler fractions");
  for (std::size_t i : indices) {
    const int label = manifest.entries[i].label;
    (label == kSilenceClass ? silence_ : label == kUnknownClass ? unknown_ : targets_).push_back(i);
  }
  KWS_CHECK(pool_size() > 0, "sampler has no clips");
}

std::vector<std::size_t> SupervisedSampler::Draw(std::size_t batch_size, Rng& rng) const {
  const double p_unknown = unknown_.empty() ? 0.0 : unknown_fraction_;
  const double p_silence = silence_.empty() ? 0.0 : silence_fraction_;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  auto pick = [&rng](const std::vector<std::size_t>& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };
  for (std::size_t i = 0; i < batch_size; ++i) {
    const double u = coin(rng);
    if (u < p_unknown) out.push_back(pick(unknown_));
    else if (u < p_unknown + p_silence) out.push_back(pick(silence_));
    else if (!targets_.empty()) out.push_back(pick(targets_));
    else out.push_back(pick(unknown_.empty() ? silence_ : unknown_));
  }
  return out;
}

std::size_t SupervisedSampler::BatchesPerEpoch(std::size_t batch_size) const {
  const double share = std::max(1e-9, 1.0 - unknown_fraction_ - silence_fraction_);
  const double items = targets_.empty() ? static_cast<double>(pool_size()) : targets_.size() / share;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(items / batch_size)));
}

std::vector<std::vector<std::size_t>> EpochBatches(std::vector<std::size_t> indices,
                                                   std::size_t batch_size, Rng& rng,
                                                   std::size_t min_last) {
  KWS_CHECK(batch_size >= 1, "batch size must be positive");
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t end = std::min(indices.size(), i + batch_size);
    if (end - i < min_last && !out.empty()) break;
    out.emplace_back(indices.begin() + static_cast<long>(i), indices.begin() + static_cast<long>(end));
  }
  return out;
}

}  // namespace kws
