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

#include "kws/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "kws/binary_io.h"
#include "kws/errors.h"

namespace kws {
namespace {

std::string ReadTag(std::istream& is) {
  char tag[4];
  is.read(tag, 4);
  if (!is) throw IoError("unexpected end of file");
  return std::string(tag, 4);
}

}  // namespace

AudioClip ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) KWS_FAIL(IoError, "cannot open ", path);
  try {
    if (ReadTag(is) != "RIFF") KWS_FAIL(IoError, path, ": not a RIFF file");
    binary::Get<std::uint32_t>(is);
    if (ReadTag(is) != "WAVE") KWS_FAIL(IoError, path, ": not a WAVE file");

    bool have_format = false;
    while (true) {
      const std::string id = ReadTag(is);
      const std::uint32_t size = binary::Get<std::uint32_t>(is);
      if (id == "fmt ") {
        KWS_CHECK(size >= 16, "short fmt chunk");
        const auto format = binary::Get<std::uint16_t>(is);
        const auto channels = binary::Get<std::uint16_t>(is);
        const auto rate = binary::Get<std::uint32_t>(is);
        binary::Get<std::uint32_t>(is);
        binary::Get<std::uint16_t>(is);
        const auto bits = binary::Get<std::uint16_t>(is);
        if (format != 1 || bits != 16) {
          KWS_FAIL(IoError, path, ": only 16-bit PCM is supported (format ", format, ", ",
                   bits, " bits)");
        }
        if (channels != 1) KWS_FAIL(IoError, path, ": expected mono, got ", channels, " channels");
        if (rate != static_cast<std::uint32_t>(kSampleRate)) {
          KWS_FAIL(IoError, path, ": sample rate ", rate, " Hz, expected ", kSampleRate);
        }
        is.seekg(size - 16 + (size & 1), std::ios::cur);
        have_format = true;
      } else if (id == "data") {
        if (!have_format) KWS_FAIL(IoError, path, ": data chunk before fmt chunk");
        AudioClip clip;
        clip.samples.resize(size / 2);
        for (float& s : clip.samples) s = binary::Get<std::int16_t>(is) / 32768.0f;
        return clip;
      } else {
        is.seekg(size + (size & 1), std::ios::cur);
      }
    }
  } catch (const IoError& e) {
    if (std::string(e.what()).find(path) != std::string::npos) throw;
    KWS_FAIL(IoError, path, ": ", e.what());
  } catch (const ContractViolation& e) {
    KWS_FAIL(IoError, path, ": ", e.what());
  }
}

void WriteWav(const std::string& path, const AudioClip& clip) {
  KWS_CHECK(clip.sample_rate == kSampleRate, "only ", kSampleRate, " Hz is supported");
  std::ofstream os(path, std::ios::binary);
  if (!os) KWS_FAIL(IoError, "cannot write ", path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  os.write("RIFF", 4);
  binary::Put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  binary::Put<std::uint32_t>(os, 16);
  binary::Put<std::uint16_t>(os, 1);
  binary::Put<std::uint16_t>(os, 1);
  binary::Put<std::uint32_t>(os, kSampleRate);
  binary::Put<std::uint32_t>(os, kSampleRate * 2);
  binary::Put<std::uint16_t>(os, 2);
  binary::Put<std::uint16_t>(os, 16);
  os.write("data", 4);
  binary::Put<std::uint32_t>(os, data_bytes);
  for (float s : clip.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    binary::Put<std::int16_t>(os, static_cast<std::int16_t>(std::lround(std::min(c * 32768.0f, 32767.0f))));
  }
  if (!os) KWS_FAIL(IoError, "failed writing ", path);
}

std::vector<float> FitLength(std::vector<float> samples, std::size_t length) {
  samples.resize(length, 0.0f);
  return samples;
}

double MeanPower(const std::vector<float>& samples) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (float v : samples) s += double(v) * v;
  return s / samples.size();
}

}  // namespace kws
