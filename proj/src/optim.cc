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

#include "kws/optim.h"

#include <cmath>

namespace kws {
inline namespace KWS_PRECISION_NS {

SgdMomentum::SgdMomentum(std::vector<std::pair<std::string, Tensor>> params,
                         SgdOptions options)
    : options_(options) {
  set_lr(options.lr);
  slots_.reserve(params.size());
  for (auto& [name, tensor] : params) {
    KWS_CHECK(tensor.defined(), "optimizer parameter ", name, " is undefined");
    slots_.push_back(Slot{name, tensor, std::vector<Real>(tensor.numel(), Real(0))});
  }
}

void SgdMomentum::set_lr(double lr) {
  KWS_CHECK(lr >= 0.0 && std::isfinite(lr), "learning rate must be finite and >= 0, got ", lr);
  options_.lr = lr;
}

SgdMomentum::Slot* SgdMomentum::FindSlot(const std::string& name) {
  for (Slot& s : slots_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void SgdMomentum::Step() {
  for (const Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    for (Real g : s.param.grad()) {
      if (!std::isfinite(g)) {
        KWS_FAIL(NumericError, "non-finite gradient in ", s.name,
                 "; optimizer step aborted");
      }
    }
  }
  const Real lr = static_cast<Real>(options_.lr);
  const Real momentum = static_cast<Real>(options_.momentum);
  const Real decay = static_cast<Real>(options_.weight_decay);
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    auto p = s.param.data();
    auto g = s.param.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.velocity[i] = momentum * s.velocity[i] + g[i] + decay * p[i];
      p[i] -= lr * s.velocity[i];
    }
  }
}

void SgdMomentum::ZeroGrad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
