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

#include "kws/losses.h"

#include <cmath>
#include <memory>
#include <vector>

#include "kws/ops.h"

namespace kws {
inline namespace KWS_PRECISION_NS {
namespace {

void CheckSameShape(const Tensor& a, const Tensor& b, const char* what) {
  KWS_CHECK(a.defined() && b.defined(), what, ": undefined input");
  KWS_CHECK(a.shape() == b.shape(), what, ": shapes differ ", ShapeString(a.shape()), " vs ",
            ShapeString(b.shape()));
}

// Unit-normalized rows (norm + eps) in double, with the raw norms.
struct NormalizedRows {
  std::vector<double> unit;
  std::vector<double> norm;
};

NormalizedRows Normalize(const Tensor& x, std::size_t rows, std::size_t dim) {
  NormalizedRows out{std::vector<double>(rows * dim), std::vector<double>(rows)};
  const Real* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) sq += static_cast<double>(xd[r * dim + d]) * xd[r * dim + d];
    const double n = std::sqrt(sq);
    out.norm[r] = n;
    const double inv = 1.0 / (n + kNormEpsilon);
    for (std::size_t d = 0; d < dim; ++d) out.unit[r * dim + d] = xd[r * dim + d] * inv;
  }
  return out;
}

// Pulls a gradient w.r.t. unit rows back through u = x / (|x| + eps).
void NormalizeBackward(const Tensor& x, const NormalizedRows& n, const std::vector<double>& du,
                       std::size_t rows, std::size_t dim) {
  Real* dx = x.mutable_grad().data();
  const Real* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double denom = n.norm[r] + kNormEpsilon;
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += static_cast<double>(xd[r * dim + d]) * du[r * dim + d];
    const double radial = n.norm[r] > 0.0 ? dot / (n.norm[r] * denom * denom) : 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      dx[r * dim + d] += static_cast<Real>(du[r * dim + d] / denom - xd[r * dim + d] * radial);
    }
  }
}

}  // namespace

void LossWeights::Validate() const {
  for (double w : {lambda1, lambda2, gamma1, gamma2, gamma3}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
}

Tensor CrossEntropy(Tape& tape, const Tensor& probs, const Tensor& one_hot) {
  CheckSameShape(probs, one_hot, "cross entropy");
  KWS_CHECK(probs.rank() == 2, "cross entropy expects [B,C]");
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  KWS_CHECK(batch >= 1, "cross entropy on an empty batch");
  for (std::size_t b = 0; b < batch; ++b) {
    int ones = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const Real y = one_hot[b * classes + c];
      KWS_CHECK(y == Real(0) || y == Real(1), "target row ", b, " is not one-hot");
      ones += y == Real(1);
    }
    KWS_CHECK(ones == 1, "target row ", b, " is not one-hot");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    if (one_hot[i] == Real(1)) {
      total -= std::log(std::max(static_cast<double>(probs[i]), kProbabilityFloor));
    }
  }
  const bool tracked = tape.ShouldRecord({&probs});
  Tensor out({}, tracked);
  out[0] = static_cast<Real>(total / static_cast<double>(batch));
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const double g = out.grad()[0];
    auto dp = probs.mutable_grad();
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (one_hot[i] == Real(1) && static_cast<double>(probs[i]) >= kProbabilityFloor) {
        dp[i] += static_cast<Real>(-g / (static_cast<double>(batch) * probs[i]));
      }
    }
  });
  return out;
}

Tensor WvcLoss(Tape& tape, const Tensor& student, const Tensor& teacher) {
  CheckSameShape(student, teacher, "distillation loss");
  const std::size_t n = student.numel();
  KWS_CHECK(n >= 1, "distillation loss on empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(student[i]) - teacher[i];
    total += d * d;
  }
  const bool tracked = tape.ShouldRecord({&student, &teacher});
  Tensor out({}, tracked);
  out[0] = static_cast<Real>(total / static_cast<double>(n));
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const double scale = 2.0 * out.grad()[0] / static_cast<double>(n);
    if (student.requires_grad()) {
      auto ds = student.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        ds[i] += static_cast<Real>(scale * (static_cast<double>(student[i]) - teacher[i]));
      }
    }
    if (teacher.requires_grad()) {
      auto dt = teacher.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        dt[i] -= static_cast<Real>(scale * (static_cast<double>(student[i]) - teacher[i]));
      }
    }
  });
  return out;
}

Tensor GlobalLoss(Tape& tape, const Tensor& view1, const Tensor& view2) {
  CheckSameShape(view1, view2, "global loss");
  KWS_CHECK(view1.rank() == 3, "global loss expects [B,F,D]");
  const std::size_t batch = view1.dim(0), frames = view1.dim(1), dim = view1.dim(2);
  KWS_CHECK(batch >= 1 && frames >= 1, "global loss on empty input");
  // diff[b,d] = mean_t view1 - mean_t view2
  auto diff = std::make_shared<std::vector<double>>(batch * dim, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t row = (b * frames + t) * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        (*diff)[b * dim + d] += static_cast<double>(view1[row + d]) - view2[row + d];
      }
    }
  }
  double total = 0.0;
  for (double& v : *diff) {
    v /= static_cast<double>(frames);
    total += v * v;
  }
  const bool tracked = tape.ShouldRecord({&view1, &view2});
  Tensor out({}, tracked);
  out[0] = static_cast<Real>(total / static_cast<double>(batch));
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const double scale =
        2.0 * out.grad()[0] / (static_cast<double>(batch) * static_cast<double>(frames));
    for (int side = 0; side < 2; ++side) {
      const Tensor& v = side == 0 ? view1 : view2;
      if (!v.requires_grad()) continue;
      const double sign = side == 0 ? 1.0 : -1.0;
      auto dv = v.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < frames; ++t) {
          const std::size_t row = (b * frames + t) * dim;
          for (std::size_t d = 0; d < dim; ++d) {
            dv[row + d] += static_cast<Real>(sign * scale * (*diff)[b * dim + d]);
          }
        }
      }
    }
  });
  return out;
}

Tensor LocalLoss(Tape& tape, const Tensor& view1, const Tensor& view2, double tau,
                 bool symmetric) {
  CheckSameShape(view1, view2, "local loss");
  KWS_CHECK(view1.rank() == 3, "local loss expects [B,F,D]");
  KWS_CHECK(tau > 0.0, "temperature must be positive");
  const std::size_t n = view1.dim(0) * view1.dim(1), dim = view1.dim(2);
  KWS_CHECK(n >= 1, "local loss on empty input");

  auto u1 = std::make_shared<NormalizedRows>(Normalize(view1, n, dim));
  auto u2 = std::make_shared<NormalizedRows>(Normalize(view2, n, dim));
  // |cos| <= 1, so z = cos / tau lies in [-1/tau, 1/tau]; shifting every
  // exponent by 1/tau keeps the sums finite without a running max.
  const double shift = 1.0 / tau;
  auto row_sum = std::make_shared<std::vector<double>>(n, 0.0);
  auto col_sum = std::make_shared<std::vector<double>>(n, 0.0);
  std::vector<double> positive(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = u1->unit.data() + i * dim;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = u2->unit.data() + j * dim;
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += a[d] * b[d];
      const double z = s / tau;
      const double e = std::exp(z - shift);
      (*row_sum)[i] += e;
      (*col_sum)[j] += e;
      if (i == j) positive[i] = z;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += shift + std::log((*row_sum)[i]) - positive[i];
  }
  double loss = total / static_cast<double>(n);
  if (symmetric) {
    double other = 0.0;
    for (std::size_t j = 0; j < n; ++j) other += shift + std::log((*col_sum)[j]) - positive[j];
    loss = 0.5 * (loss + other / static_cast<double>(n));
  }

  const bool tracked = tape.ShouldRecord({&view1, &view2});
  Tensor out({}, tracked);
  out[0] = static_cast<Real>(loss);
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const double g = out.grad()[0];
    const double row_w = (symmetric ? 0.5 : 1.0) / static_cast<double>(n);
    const double col_w = symmetric ? 0.5 / static_cast<double>(n) : 0.0;
    std::vector<double> du1(n * dim, 0.0), du2(n * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = u1->unit.data() + i * dim;
      double* da = du1.data() + i * dim;
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = u2->unit.data() + j * dim;
        double s = 0.0;
        for (std::size_t d = 0; d < dim; ++d) s += a[d] * b[d];
        const double e = std::exp(s / tau - shift);
        double dz = row_w * (e / (*row_sum)[i]);
        if (symmetric) dz += col_w * (e / (*col_sum)[j]);
        if (i == j) dz -= row_w + col_w;
        const double ds = g * dz / tau;
        double* db = du2.data() + j * dim;
        for (std::size_t d = 0; d < dim; ++d) {
          da[d] += ds * b[d];
          db[d] += ds * a[d];
        }
      }
    }
    if (view1.requires_grad()) NormalizeBackward(view1, *u1, du1, n, dim);
    if (view2.requires_grad()) NormalizeBackward(view2, *u2, du2, n, dim);
  });
  return out;
}

LgcsiamParts LgcsiamLossParts(Tape& tape, const Tensor& view1, const Tensor& view2,
                              double tau, bool symmetric) {
  LgcsiamParts parts;
  parts.global = GlobalLoss(tape, view1, view2);
  parts.local = LocalLoss(tape, view1, view2, tau, symmetric);
  parts.total = Add(tape, parts.global, parts.local);
  return parts;
}

Tensor LgcsiamLoss(Tape& tape, const Tensor& view1, const Tensor& view2, double tau,
                   bool symmetric) {
  return LgcsiamLossParts(tape, view1, view2, tau, symmetric).total;
}

Tensor PretrainLoss(Tape& tape, const Tensor& lgcsiam, const Tensor& wvc,
                    const LossWeights& weights) {
  std::vector<std::pair<Real, Tensor>> terms;
  if (lgcsiam.defined()) terms.emplace_back(static_cast<Real>(weights.lambda1), lgcsiam);
  if (wvc.defined()) terms.emplace_back(static_cast<Real>(weights.lambda2), wvc);
  KWS_CHECK(!terms.empty(), "pretraining loss needs at least one term");
  return WeightedSum(tape, terms);
}

Tensor FinetuneLoss(Tape& tape, const Tensor& ce, const Tensor& lgcsiam, const Tensor& wvc,
                    const LossWeights& weights) {
  std::vector<std::pair<Real, Tensor>> terms;
  if (ce.defined()) terms.emplace_back(static_cast<Real>(weights.gamma1), ce);
  if (lgcsiam.defined()) terms.emplace_back(static_cast<Real>(weights.gamma2), lgcsiam);
  if (wvc.defined()) terms.emplace_back(static_cast<Real>(weights.gamma3), wvc);
  KWS_CHECK(!terms.empty(), "fine-tuning loss needs at least one term");
  return WeightedSum(tape, terms);
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
