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

#include "kws/model.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <utility>

#include "kws/ops.h"

namespace kws {
inline namespace KWS_PRECISION_NS {
namespace {

std::string Layer(std::size_t i) { return "encoder.layer" + std::to_string(i); }

Tensor Uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape), true);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

Tensor KaimingUniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  // gain sqrt(2) for ReLU; bound = gain * sqrt(3 / fan_in)
  return Uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

Tensor XavierUniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return Uniform({fan_in, fan_out},
                 std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

void AddBatchNorm(ModelParams& p, const std::string& prefix, std::size_t channels) {
  p.Add(prefix + ".bn.gamma", ParamGroup::kEncoder, Tensor::Full({channels}, Real(1)));
  p.Add(prefix + ".bn.beta", ParamGroup::kEncoder, Tensor({channels}));
  p.Add(prefix + ".bn.running_mean", ParamGroup::kEncoder, Tensor({channels}), false);
  p.Add(prefix + ".bn.running_var", ParamGroup::kEncoder, Tensor::Full({channels}, Real(1)),
        false);
}

}  // namespace

void TcaNetConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(input_frames >= 1 && mel_bins >= 1 && channels >= 1, "sizes must be positive");
  require(first_kernel % 2 == 1 && kernel % 2 == 1, "kernel sizes must be odd");
  require(first_stride >= 1, "stride must be positive");
  require(num_heads >= 1 && channels % num_heads == 0,
          std::to_string(num_heads) + " heads do not divide " + std::to_string(channels) +
              " channels");
  require(num_classes >= 2, "need at least two classes");
  require(wvc_hidden >= 1 && teacher_dim >= 1 && siam_hidden >= 1 && siam_dim >= 1,
          "projection sizes must be positive");
}

std::size_t TcaNetConfig::encoder_frames() const {
  return (input_frames + first_stride - 1) / first_stride;
}

double TcaNetConfig::attention_divisor() const {
  const double head_width = static_cast<double>(channels / num_heads);
  return sqrt_scaling ? std::sqrt(head_width) : head_width;
}

const char* ParamGroupName(ParamGroup group) {
  switch (group) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kDecoder: return "decoder";
    case ParamGroup::kClassifier: return "classifier";
    case ParamGroup::kWvcHead: return "wvc_head";
    case ParamGroup::kSiamHead: return "siam_head";
  }
  return "?";
}

void ModelParams::Add(std::string name, ParamGroup group, Tensor tensor, bool learnable) {
  KWS_CHECK(!Contains(name), "duplicate parameter ", name);
  tensor.set_requires_grad(learnable);
  entries_.push_back(Parameter{std::move(name), group, std::move(tensor), learnable});
}

const Parameter* ModelParams::Find(const std::string& name) const {
  for (const Parameter& p : entries_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool ModelParams::Contains(const std::string& name) const { return Find(name) != nullptr; }

const Tensor& ModelParams::Get(const std::string& name) const {
  const Parameter* p = Find(name);
  if (p == nullptr) KWS_FAIL(NotFoundError, "no parameter named ", name);
  return p->tensor;
}

Tensor& ModelParams::Get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).Get(name));
}

std::vector<std::pair<std::string, Tensor>> ModelParams::Learnable(
    const std::vector<ParamGroup>& groups) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const Parameter& p : entries_) {
    if (!p.learnable) continue;
    if (std::find(groups.begin(), groups.end(), p.group) == groups.end()) continue;
    out.emplace_back(p.name, p.tensor);
  }
  return out;
}

std::size_t ModelParams::CountLearnable(const std::vector<ParamGroup>& groups) const {
  std::size_t n = 0;
  for (const auto& [name, t] : Learnable(groups)) n += t.numel();
  return n;
}

std::size_t ModelParams::CountBuffers() const {
  std::size_t n = 0;
  for (const Parameter& p : entries_) {
    if (!p.learnable) n += p.tensor.numel();
  }
  return n;
}

void ModelParams::ZeroGrad() {
  for (Parameter& p : entries_) p.tensor.zero_grad();
}

std::vector<NamedTensor> ModelParams::Export() const {
  std::vector<NamedTensor> out;
  out.reserve(entries_.size());
  for (const Parameter& p : entries_) out.push_back(NamedTensor::From(p.name, p.tensor));
  return out;
}

std::size_t ModelParams::Import(const std::vector<NamedTensor>& tensors, bool allow_missing) {
  std::size_t loaded = 0;
  for (Parameter& p : entries_) {
    const NamedTensor* src = FindTensor(tensors, p.name);
    if (src == nullptr) {
      if (allow_missing) continue;
      KWS_FAIL(NotFoundError, "checkpoint has no tensor ", p.name);
    }
    if (src->shape != p.tensor.shape()) {
      KWS_FAIL(ContractViolation, "checkpoint tensor ", p.name, " has shape ",
               ShapeString(src->shape), ", model expects ", ShapeString(p.tensor.shape()));
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(src->values[i]);
    ++loaded;
  }
  return loaded;
}

ModelParams InitParams(const TcaNetConfig& config, std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = config.channels;
  ModelParams p;

  p.Add(Layer(0) + ".conv.weight", ParamGroup::kEncoder,
        KaimingUniform({config.first_kernel, config.mel_bins, c},
                       config.first_kernel * config.mel_bins, rng));
  AddBatchNorm(p, Layer(0), c);
  for (std::size_t i = 1; i <= config.separable_layers; ++i) {
    p.Add(Layer(i) + ".depthwise", ParamGroup::kEncoder,
          KaimingUniform({config.kernel, c}, config.kernel, rng));
    p.Add(Layer(i) + ".pointwise", ParamGroup::kEncoder, KaimingUniform({c, c}, c, rng));
    AddBatchNorm(p, Layer(i), c);
  }

  for (const char* name : {"w_q", "w_k", "w_v", "w_o"}) {
    p.Add(std::string("decoder.") + name, ParamGroup::kDecoder, XavierUniform(c, c, rng));
  }

  p.Add("classifier.weight", ParamGroup::kClassifier, XavierUniform(c, config.num_classes, rng));
  p.Add("classifier.bias", ParamGroup::kClassifier, Tensor({config.num_classes}));

  p.Add("wvc_head.w1", ParamGroup::kWvcHead, XavierUniform(c, config.wvc_hidden, rng));
  p.Add("wvc_head.w2", ParamGroup::kWvcHead,
        XavierUniform(config.wvc_hidden, config.teacher_dim, rng));
  p.Add("siam_head.w3", ParamGroup::kSiamHead, XavierUniform(c, config.siam_hidden, rng));
  p.Add("siam_head.w4", ParamGroup::kSiamHead,
        XavierUniform(config.siam_hidden, config.siam_dim, rng));
  return p;
}

TcaNet::TcaNet(TcaNetConfig config, std::uint64_t seed)
    : config_(config), params_(InitParams(config, seed)) {}

TcaNet::TcaNet(TcaNetConfig config, ModelParams params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
}

Tensor TcaNet::Encode(Tape& tape, const Tensor& x, Mode mode) {
  KWS_CHECK(x.defined() && x.rank() == 3 && x.dim(1) == config_.input_frames &&
                x.dim(2) == config_.mel_bins,
            "encoder expects [B,", config_.input_frames, ",", config_.mel_bins, "], got ",
            x.defined() ? ShapeString(x.shape()) : std::string("<none>"));
  const bool training = mode == Mode::kTrain;
  auto bn_relu = [&](const Tensor& h, std::size_t layer) {
    const std::string prefix = Layer(layer) + ".bn.";
    return BatchNormRelu(tape, h, params_.Get(prefix + "gamma"), params_.Get(prefix + "beta"),
                         params_.Get(prefix + "running_mean"),
                         params_.Get(prefix + "running_var"), training);
  };
  Tensor h = Conv1d(tape, x, params_.Get(Layer(0) + ".conv.weight"), Tensor(),
                    config_.first_stride);
  h = bn_relu(h, 0);
  for (std::size_t i = 1; i <= config_.separable_layers; ++i) {
    h = SeparableConv1d(tape, h, params_.Get(Layer(i) + ".depthwise"), Tensor(),
                        params_.Get(Layer(i) + ".pointwise"), Tensor());
    h = bn_relu(h, i);
  }
  return h;
}

Tensor TcaNet::Decode(Tape& tape, const Tensor& e, std::vector<Real>* attention) const {
  KWS_CHECK(e.defined() && e.rank() == 3 && e.dim(2) == config_.channels,
            "decoder expects [B,T,", config_.channels, "]");
  Tensor q = Linear(tape, e, params_.Get("decoder.w_q"), Tensor());
  Tensor k = Linear(tape, e, params_.Get("decoder.w_k"), Tensor());
  Tensor v = Linear(tape, e, params_.Get("decoder.w_v"), Tensor());
  Tensor heads = MultiHeadAttention(tape, q, k, v, config_.num_heads,
                                    config_.attention_divisor(), attention);
  return Linear(tape, heads, params_.Get("decoder.w_o"), Tensor());
}

Tensor TcaNet::Classify(Tape& tape, const Tensor& d) const {
  Tensor pooled = MeanOverTime(tape, d);
  Tensor logits = Linear(tape, pooled, params_.Get("classifier.weight"),
                         params_.Get("classifier.bias"));
  return Softmax(tape, logits);
}

Tensor TcaNet::ProjectWvc(Tape& tape, const Tensor& e) const {
  Tensor hidden = Relu(tape, Linear(tape, e, params_.Get("wvc_head.w1"), Tensor()));
  return Linear(tape, hidden, params_.Get("wvc_head.w2"), Tensor());
}

Tensor TcaNet::ProjectSiam(Tape& tape, const Tensor& d) const {
  Tensor hidden = Relu(tape, Linear(tape, d, params_.Get("siam_head.w3"), Tensor()));
  return Linear(tape, hidden, params_.Get("siam_head.w4"), Tensor());
}

std::size_t TcaNet::InferenceParameterCount() const {
  return params_.CountLearnable(
      {ParamGroup::kEncoder, ParamGroup::kDecoder, ParamGroup::kClassifier});
}

std::string TcaNet::Describe() const {
  std::ostringstream os;
  auto row = [&os](const std::string& layer, const std::string& shape, std::size_t n) {
    os << std::left << std::setw(34) << layer << std::setw(16) << shape << std::right
       << std::setw(9) << n << "\n";
  };
  os << std::left << std::setw(34) << "parameter" << std::setw(16) << "shape" << std::right
     << std::setw(9) << "count" << "\n";
  os << std::string(59, '-') << "\n";
  for (const Parameter& p : params_.entries()) {
    if (!p.learnable) continue;
    row(p.name, ShapeString(p.tensor.shape()), p.tensor.numel());
  }
  os << std::string(59, '-') << "\n";
  const std::size_t encoder = params_.CountLearnable({ParamGroup::kEncoder});
  const std::size_t decoder = params_.CountLearnable({ParamGroup::kDecoder});
  const std::size_t classifier = params_.CountLearnable({ParamGroup::kClassifier});
  os << "encoder              " << encoder << "\n";
  os << "decoder              " << decoder << "  (" << config_.num_heads
     << " heads, logits / " << config_.attention_divisor() << ")\n";
  os << "classifier           " << classifier << "\n";
  os << "TCANet parameters    " << InferenceParameterCount() << "\n";
  os << "training heads       wvc_head " << params_.CountLearnable({ParamGroup::kWvcHead})
     << ", siam_head " << params_.CountLearnable({ParamGroup::kSiamHead}) << "\n";
  os << "bn running stats     " << params_.CountBuffers() << " (not learnable)\n";
  return os.str();
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
