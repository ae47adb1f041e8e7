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

// Differentiable kernels over [batch, time, channel] tensors.
//
// Every op takes the tape first. A disabled tape (or inputs that do not
// require gradients) runs the forward pass only. Reductions accumulate in
// double regardless of the storage type.

#ifndef KWS_OPS_H_
#define KWS_OPS_H_

#include <utility>
#include <vector>

#include "kws/tensor.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

// Output length of a "same"-padded convolution: ceil(length / stride).
std::size_t ConvOutputLength(std::size_t length, std::size_t stride);

// x[B,T,Cin] * w[K,Cin,Cout] (+ bias[Cout]) -> [B,ceil(T/stride),Cout].
// K must be odd; (K-1)/2 zeros pad both ends. Pass an undefined bias for none.
Tensor Conv1d(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias, std::size_t stride = 1);

// Per-channel K-tap filter: x[B,T,C] * w[K,C] (+ bias[C]), stride 1.
Tensor DepthwiseConv1d(Tape& tape, const Tensor& x, const Tensor& weight,
                       const Tensor& bias);

// x[..., In] * w[In, Out] (+ bias[Out]).
Tensor Linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias);

// Depthwise K-tap convolution followed by 1x1 channel mixing.
Tensor SeparableConv1d(Tape& tape, const Tensor& x, const Tensor& depthwise,
                       const Tensor& depthwise_bias, const Tensor& pointwise,
                       const Tensor& pointwise_bias);

struct BatchNormOptions {
  Real eps = Real(1e-5);
  Real momentum = Real(0.1);
};

// Normalizes x[B,T,C] per channel. Training mode uses the (B,T) batch
// statistics and folds them into the running estimates (unbiased variance);
// eval mode uses the running estimates.
Tensor BatchNorm(Tape& tape, const Tensor& x, const Tensor& gamma,
                 const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training,
                 const BatchNormOptions& options = {});

Tensor Relu(Tape& tape, const Tensor& x);

Tensor BatchNormRelu(Tape& tape, const Tensor& x, const Tensor& gamma,
                     const Tensor& beta, Tensor& running_mean,
                     Tensor& running_var, bool training,
                     const BatchNormOptions& options = {});

// Scaled dot-product attention over q,k,v[B,T,D] split into num_heads
// contiguous channel groups; logits are divided by `divisor`. Returns the
// concatenated head outputs [B,T,D]. When `weights` is non-null it receives
// the softmax rows laid out [B, heads, T, T].
Tensor MultiHeadAttention(Tape& tape, const Tensor& q, const Tensor& k,
                          const Tensor& v, std::size_t num_heads,
                          double divisor, std::vector<Real>* weights = nullptr);

// [B,T,C] -> [B,C], average over time.
Tensor MeanOverTime(Tape& tape, const Tensor& x);

// Keeps the first `frames` steps of x[B,T,C].
Tensor TakeFrames(Tape& tape, const Tensor& x, std::size_t frames);

// Row-wise softmax over the last axis of a rank-2 tensor.
Tensor Softmax(Tape& tape, const Tensor& logits);

Tensor Add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor Mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor Scale(Tape& tape, const Tensor& a, Real factor);
Tensor Sum(Tape& tape, const Tensor& a);

// Sum of weight * term over scalar terms.
Tensor WeightedSum(Tape& tape,
                   const std::vector<std::pair<Real, Tensor>>& terms);

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_OPS_H_
