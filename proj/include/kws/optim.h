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

#ifndef KWS_OPTIM_H_
#define KWS_OPTIM_H_

#include <string>
#include <vector>

#include "kws/tensor.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// SGD with heavy-ball momentum and L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Parameters without a gradient are skipped for that step.
class SgdMomentum {
 public:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<Real> velocity;
  };

  SgdMomentum(std::vector<std::pair<std::string, Tensor>> params,
              SgdOptions options);

  // Throws NumericError, leaving every parameter untouched, if any gradient
  // holds a NaN or Inf.
  void Step();
  void ZeroGrad();

  double lr() const { return options_.lr; }
  void set_lr(double lr);
  const SgdOptions& options() const { return options_; }

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  Slot* FindSlot(const std::string& name);

 private:
  std::vector<Slot> slots_;
  SgdOptions options_;
};

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_OPTIM_H_
