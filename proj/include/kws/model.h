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

// TCANet: a temporal-convolution encoder with a multi-head self-attention
// decoder, plus the classifier and the two training-only projection heads.
//
//   x [B,100,40] -> encoder -> e [B,50,64] -> decoder -> d [B,50,64]
//   d -> mean over time -> dense -> softmax -> p [B,12]
//   e -> wvc head  (64 -> 128 -> 768, ReLU between, no bias)
//   d -> siam head (64 -> 128 -> 128, ReLU between, no bias)

#ifndef KWS_MODEL_H_
#define KWS_MODEL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "kws/checkpoint.h"
#include "kws/tensor.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

struct TcaNetConfig {
  std::size_t input_frames = 100;
  std::size_t mel_bins = 40;
  std::size_t channels = 64;
  std::size_t first_kernel = 3;
  std::size_t first_stride = 2;
  std::size_t kernel = 9;
  std::size_t separable_layers = 6;
  std::size_t num_heads = 4;
  // Divide attention logits by sqrt(channels / heads) instead of
  // channels / heads.
  bool sqrt_scaling = false;
  std::size_t num_classes = 12;
  std::size_t wvc_hidden = 128;
  std::size_t teacher_dim = 768;
  std::size_t siam_hidden = 128;
  std::size_t siam_dim = 128;

  // Throws ConfigError on inconsistent sizes (e.g. heads not dividing width).
  void Validate() const;
  std::size_t encoder_frames() const;
  double attention_divisor() const;
};

enum class ParamGroup { kEncoder, kDecoder, kClassifier, kWvcHead, kSiamHead };

const char* ParamGroupName(ParamGroup group);

enum class Mode { kTrain, kEval };

struct Parameter {
  std::string name;
  ParamGroup group;
  Tensor tensor;
  // Batch-norm running statistics are stored here too, with learnable=false.
  bool learnable = true;
};

class ModelParams {
 public:
  void Add(std::string name, ParamGroup group, Tensor tensor, bool learnable = true);

  const Tensor& Get(const std::string& name) const;
  Tensor& Get(const std::string& name);
  bool Contains(const std::string& name) const;

  const std::vector<Parameter>& entries() const { return entries_; }

  std::vector<std::pair<std::string, Tensor>> Learnable(
      const std::vector<ParamGroup>& groups) const;
  std::size_t CountLearnable(const std::vector<ParamGroup>& groups) const;
  std::size_t CountBuffers() const;

  void ZeroGrad();

  std::vector<NamedTensor> Export() const;
  // Copies values by name. Every entry must be present with a matching shape
  // unless `allow_missing` is set, in which case absent entries keep their
  // current values. Returns the number of entries loaded.
  std::size_t Import(const std::vector<NamedTensor>& tensors, bool allow_missing = false);

 private:
  const Parameter* Find(const std::string& name) const;
  std::vector<Parameter> entries_;
};

// Conv weights: Kaiming-uniform (fan-in, ReLU gain). Dense/projection weights:
// Xavier-uniform. BN gamma=1, beta=0, running mean 0, var 1. Biases 0.
ModelParams InitParams(const TcaNetConfig& config, std::uint64_t seed);

class TcaNet {
 public:
  TcaNet(TcaNetConfig config, std::uint64_t seed);
  TcaNet(TcaNetConfig config, ModelParams params);

  const TcaNetConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // x [B, input_frames, mel_bins] -> e [B, encoder_frames, channels].
  // Training mode updates the batch-norm running statistics.
  Tensor Encode(Tape& tape, const Tensor& x, Mode mode);

  // e [B,T,C] -> d [B,T,C]. `attention` (optional) receives [B,heads,T,T].
  Tensor Decode(Tape& tape, const Tensor& e,
                std::vector<Real>* attention = nullptr) const;

  // d [B,T,C] -> class probabilities [B, num_classes].
  Tensor Classify(Tape& tape, const Tensor& d) const;

  Tensor ProjectWvc(Tape& tape, const Tensor& e) const;
  Tensor ProjectSiam(Tape& tape, const Tensor& d) const;

  // Layer table with parameter counts.
  std::string Describe() const;

  // Learnable parameters of the deployable classifier (encoder, decoder,
  // classifier head).
  std::size_t InferenceParameterCount() const;

 private:
  TcaNetConfig config_;
  ModelParams params_;
};

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_MODEL_H_
