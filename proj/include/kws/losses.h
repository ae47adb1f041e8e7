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

// Training objectives. All return scalar tensors recorded on the tape.

#ifndef KWS_LOSSES_H_
#define KWS_LOSSES_H_

#include "kws/tensor.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

struct LossWeights {
  // Unsupervised stage: lambda1 * siamese + lambda2 * distillation.
  double lambda1 = 0.1;
  double lambda2 = 0.9;
  // Fine-tuning: gamma1 * CE + gamma2 * siamese + gamma3 * distillation.
  double gamma1 = 0.9;
  double gamma2 = 0.05;
  double gamma3 = 0.05;
  // Temperature of the frame-level contrastive term.
  double tau = 0.5;
  // Also anchor the contrastive term on the second view and average.
  bool symmetric_local = false;

  void Validate() const;
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kNormEpsilon = 1e-8;

// -(1/B) sum_b sum_c y log(max(p, 1e-12)). p: [B,C] probabilities,
// y: [B,C] one-hot (ContractViolation otherwise).
Tensor CrossEntropy(Tape& tape, const Tensor& probs, const Tensor& one_hot);

// Mean squared difference over every element; shapes must match.
Tensor WvcLoss(Tape& tape, const Tensor& student, const Tensor& teacher);

// Per utterance, squared Euclidean distance between the time averages of
// the two views, summed over features; averaged over the batch.
Tensor GlobalLoss(Tape& tape, const Tensor& view1, const Tensor& view2);

// Frame-level InfoNCE over [B,F,D] projections. Anchor (b,t) of view 1 is
// paired with (b,t) of view 2; the denominator runs over every frame of
// view 2, the positive included. Cosine similarity uses |x| + 1e-8 norms.
// Averaged over all B*F anchors (and over both directions if symmetric).
Tensor LocalLoss(Tape& tape, const Tensor& view1, const Tensor& view2, double tau,
                 bool symmetric = false);

struct LgcsiamParts {
  Tensor global;
  Tensor local;
  Tensor total;
};

LgcsiamParts LgcsiamLossParts(Tape& tape, const Tensor& view1, const Tensor& view2,
                              double tau, bool symmetric = false);
Tensor LgcsiamLoss(Tape& tape, const Tensor& view1, const Tensor& view2, double tau,
                   bool symmetric = false);

// lambda1 * lgcsiam + lambda2 * wvc. Undefined terms are omitted.
Tensor PretrainLoss(Tape& tape, const Tensor& lgcsiam, const Tensor& wvc,
                    const LossWeights& weights);

// gamma1 * ce + gamma2 * lgcsiam + gamma3 * wvc. Undefined terms are omitted.
Tensor FinetuneLoss(Tape& tape, const Tensor& ce, const Tensor& lgcsiam,
                    const Tensor& wvc, const LossWeights& weights);

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_LOSSES_H_
