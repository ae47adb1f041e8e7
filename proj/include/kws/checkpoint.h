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

// Checkpoint container: an ordered list of named f32 tensors.
//
//   "KWSC" | u32 version | u32 count |
//   count x { u16 name_len | name | u8 rank | rank x u32 dim | f32 data }
//
// All integers and floats are little-endian, data row-major.

#ifndef KWS_CHECKPOINT_H_
#define KWS_CHECKPOINT_H_

#include <string>
#include <vector>

#include "kws/tensor.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

inline constexpr char kCheckpointMagic[4] = {'K', 'W', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  static NamedTensor From(const std::string& name, const Tensor& t);
  Tensor ToTensor() const;
};

void WriteCheckpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> ReadCheckpoint(const std::string& path);

const NamedTensor* FindTensor(const std::vector<NamedTensor>& tensors,
                              const std::string& name);

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_CHECKPOINT_H_
