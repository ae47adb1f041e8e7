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

#include "kws/checkpoint.h"

#include <filesystem>
#include <fstream>

#include "kws/binary_io.h"

namespace kws {
inline namespace KWS_PRECISION_NS {

NamedTensor NamedTensor::From(const std::string& name, const Tensor& t) {
  NamedTensor nt{name, t.shape(), {}};
  nt.values.assign(t.data().begin(), t.data().end());
  return nt;
}

Tensor NamedTensor::ToTensor() const {
  return Tensor(shape, std::vector<Real>(values.begin(), values.end()));
}

void WriteCheckpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) KWS_FAIL(IoError, "cannot open ", tmp, " for writing");
    os.write(kCheckpointMagic, 4);
    binary::Put<std::uint32_t>(os, kCheckpointVersion);
    binary::Put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
      KWS_CHECK(t.shape.size() <= 255, "rank too large for ", t.name);
      KWS_CHECK(t.values.size() == NumElements(t.shape), "size mismatch for ", t.name);
      binary::PutString16(os, t.name);
      binary::Put<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
      for (std::size_t d : t.shape) binary::Put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      binary::PutFloats(os, t.values);
    }
    if (!os) KWS_FAIL(IoError, "write failed for ", tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> ReadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) KWS_FAIL(IoError, "cannot open checkpoint ", path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    KWS_FAIL(IoError, path, " is not a checkpoint (bad magic)");
  }
  const auto version = binary::Get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    KWS_FAIL(IoError, path, ": unsupported checkpoint version ", version);
  }
  const auto count = binary::Get<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = binary::GetString16(is);
    const auto rank = binary::Get<std::uint8_t>(is);
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(binary::Get<std::uint32_t>(is));
    t.values.resize(NumElements(t.shape));
    binary::GetFloats(is, t.values);
    out.push_back(std::move(t));
  }
  return out;
}

const NamedTensor* FindTensor(const std::vector<NamedTensor>& tensors,
                              const std::string& name) {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
