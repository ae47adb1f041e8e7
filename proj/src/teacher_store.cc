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

#include "kws/teacher_store.h"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "kws/binary_io.h"
#include "kws/errors.h"

namespace kws {
namespace {

std::uint32_t Crc32(std::span<const float> values) {
  // Checksummed as stored: little-endian f32 bytes.
  uLong crc = crc32(0L, Z_NULL, 0);
  if constexpr (std::endian::native == std::endian::little) {
    const auto* bytes = reinterpret_cast<const Bytef*>(values.data());
    std::size_t left = values.size() * sizeof(float);
    while (left > 0) {
      const uInt chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
      crc = crc32(crc, bytes, chunk);
      bytes += chunk;
      left -= chunk;
    }
  } else {
    for (float v : values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                             static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      crc = crc32(crc, le, 4);
    }
  }
  return static_cast<std::uint32_t>(crc);
}

struct RecordHeader {
  std::string id;
  std::uint32_t frames = 0, dim = 0, crc = 0;
};

RecordHeader ReadRecordHeader(std::istream& is) {
  RecordHeader h;
  h.id = binary::GetString16(is);
  h.frames = binary::Get<std::uint32_t>(is);
  h.dim = binary::Get<std::uint32_t>(is);
  h.crc = binary::Get<std::uint32_t>(is);
  return h;
}

struct Layout {
  std::uint32_t count = 0;
  std::uint64_t index_offset = 0;
  std::vector<std::pair<std::string, std::uint64_t>> index;
};

Layout ReadLayout(const std::string& path, std::ifstream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is) KWS_FAIL(IoError, path, ": file too short for a teacher store header");
  if (!std::equal(magic, magic + 4, kTeacherMagic)) KWS_FAIL(IntegrityError, path, ": bad magic");
  const auto version = binary::Get<std::uint32_t>(is);
  if (version != kTeacherVersion) KWS_FAIL(IntegrityError, path, ": unsupported version ", version);
  Layout layout;
  layout.count = binary::Get<std::uint32_t>(is);

  is.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(is.tellg());
  if (file_size < 12 + 8) KWS_FAIL(IntegrityError, path, ": truncated (no index offset)");
  is.seekg(static_cast<std::streamoff>(file_size - 8));
  layout.index_offset = binary::Get<std::uint64_t>(is);
  if (layout.index_offset < 12 || layout.index_offset > file_size - 8) {
    KWS_FAIL(IntegrityError, path, ": index offset ", layout.index_offset, " outside the file");
  }
  is.seekg(static_cast<std::streamoff>(layout.index_offset));
  std::uint64_t previous = 0;
  for (std::uint32_t i = 0; i < layout.count; ++i) {
    std::string id;
    std::uint64_t offset = 0;
    try {
      id = binary::GetString16(is);
      offset = binary::Get<std::uint64_t>(is);
    } catch (const IoError&) {
      KWS_FAIL(IntegrityError, path, ": index truncated at entry ", i);
    }
    if (offset < 12 || offset >= layout.index_offset || (i > 0 && offset <= previous)) {
      KWS_FAIL(IntegrityError, path, ": index offsets not strictly increasing inside the record area");
    }
    previous = offset;
    layout.index.emplace_back(std::move(id), offset);
  }
  if (static_cast<std::uint64_t>(is.tellg()) != file_size - 8) {
    KWS_FAIL(IntegrityError, path, ": index size does not match the record count");
  }
  return layout;
}

}  // namespace

TeacherStoreWriter::TeacherStoreWriter(std::string path) : path_(std::move(path)) {
  os_.open(path_ + ".tmp", std::ios::binary | std::ios::trunc);
  if (!os_) KWS_FAIL(IoError, "cannot write ", path_, ".tmp");
  os_.write(kTeacherMagic, 4);
  binary::Put<std::uint32_t>(os_, kTeacherVersion);
  binary::Put<std::uint32_t>(os_, 0);  // patched in Finish
}

TeacherStoreWriter::~TeacherStoreWriter() {
  if (!finished_) {
    os_.close();
    std::error_code ec;
    std::filesystem::remove(path_ + ".tmp", ec);
  }
}

void TeacherStoreWriter::Add(const std::string& id, std::size_t frames,
                             std::span<const float> values) {
  KWS_CHECK(!finished_, "store already finished");
  KWS_CHECK(!id.empty() && id.size() < 65536, "bad id length");
  KWS_CHECK(!seen_.count(id), "duplicate teacher id '", id, "'");
  KWS_CHECK(frames >= 1, "teacher record needs at least one frame");
  KWS_CHECK(values.size() == frames * kTeacherDim, "record '", id, "' has ", values.size(),
            " values, expected ", frames, " x ", kTeacherDim);
  seen_[id] = index_.size();
  index_.emplace_back(id, static_cast<std::uint64_t>(os_.tellp()));
  binary::PutString16(os_, id);
  binary::Put<std::uint32_t>(os_, static_cast<std::uint32_t>(frames));
  binary::Put<std::uint32_t>(os_, kTeacherDim);
  binary::Put<std::uint32_t>(os_, Crc32(values));
  binary::PutFloats(os_, values);
  if (!os_) KWS_FAIL(IoError, "failed writing ", path_, ".tmp");
}

void TeacherStoreWriter::Finish() {
  if (finished_) return;
  const auto index_offset = static_cast<std::uint64_t>(os_.tellp());
  for (const auto& [id, offset] : index_) {
    binary::PutString16(os_, id);
    binary::Put<std::uint64_t>(os_, offset);
  }
  binary::Put<std::uint64_t>(os_, index_offset);
  os_.seekp(8);
  binary::Put<std::uint32_t>(os_, static_cast<std::uint32_t>(index_.size()));
  os_.close();
  if (!os_) KWS_FAIL(IoError, "failed writing ", path_, ".tmp");
  std::filesystem::rename(path_ + ".tmp", path_);
  finished_ = true;
}

TeacherStore TeacherStore::Open(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) KWS_FAIL(IoError, "cannot open teacher store ", path);
  Layout layout = ReadLayout(path, is);
  TeacherStore store;
  store.path_ = path;
  for (auto& [id, offset] : layout.index) {
    if (!store.offsets_.emplace(id, offset).second) {
      KWS_FAIL(IntegrityError, path, ": duplicate id '", id, "' in index");
    }
  }
  return store;
}

std::vector<std::string> TeacherStore::ids() const {
  std::vector<std::string> out;
  out.reserve(offsets_.size());
  for (const auto& [id, offset] : offsets_) out.push_back(id);
  return out;
}

TeacherEmbedding TeacherStore::Read(const std::string& id) const {
  const auto it = offsets_.find(id);
  if (it == offsets_.end()) KWS_FAIL(NotFoundError, "no teacher embedding for '", id, "'");
  std::ifstream is(path_, std::ios::binary);
  if (!is) KWS_FAIL(IoError, "cannot open teacher store ", path_);
  is.seekg(static_cast<std::streamoff>(it->second));
  RecordHeader h;
  TeacherEmbedding out;
  try {
    h = ReadRecordHeader(is);
    if (h.id != id) KWS_FAIL(IntegrityError, path_, ": index points '", id, "' at record '", h.id, "'");
    if (h.dim != kTeacherDim) KWS_FAIL(IntegrityError, path_, ": record '", id, "' has dim ", h.dim);
    out.frames = h.frames;
    out.dim = h.dim;
    out.values.resize(static_cast<std::size_t>(h.frames) * h.dim);
    binary::GetFloats(is, out.values);
  } catch (const IoError&) {
    KWS_FAIL(IntegrityError, path_, ": record '", id, "' is truncated");
  }
  if (Crc32(out.values) != h.crc) KWS_FAIL(IntegrityError, path_, ": CRC mismatch for '", id, "'");
  return out;
}

StoreReport VerifyStore(const std::string& path) {
  StoreReport report;
  auto fail = [&report](const std::string& message) {
    report.ok = false;
    report.errors.push_back(message);
  };
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    fail("cannot open " + path);
    return report;
  }
  Layout layout;
  try {
    layout = ReadLayout(path, is);
  } catch (const Error& e) {
    fail(e.what());
    return report;
  }
  report.records = layout.count;
  for (std::size_t i = 0; i < layout.index.size(); ++i) {
    const auto& [id, offset] = layout.index[i];
    const std::uint64_t end = i + 1 < layout.index.size() ? layout.index[i + 1].second : layout.index_offset;
    is.clear();
    is.seekg(static_cast<std::streamoff>(offset));
    try {
      const RecordHeader h = ReadRecordHeader(is);
      std::string problem;
      if (h.id != id) problem = "index id does not match record id '" + h.id + "'";
      else if (h.dim != kTeacherDim) problem = "dim " + std::to_string(h.dim) + " != 768";
      else {
        const std::uint64_t expected_end = offset + 2 + id.size() + 12 + std::uint64_t(h.frames) * h.dim * 4;
        if (expected_end != end) {
          problem = "record length disagrees with the index";
        } else {
          std::vector<float> values(static_cast<std::size_t>(h.frames) * h.dim);
          binary::GetFloats(is, values);
          if (Crc32(values) != h.crc) problem = "CRC mismatch";
        }
      }
      if (!problem.empty()) {
        fail(id + ": " + problem);
        report.bad_ids.push_back(id);
      } else {
        ++report.frame_histogram[h.frames];
      }
    } catch (const IoError&) {
      fail(id + ": truncated record");
      report.bad_ids.push_back(id);
    }
  }
  return report;
}

std::size_t AlignFrames(std::size_t student_frames, std::size_t teacher_frames) {
  KWS_CHECK(student_frames >= 1 && teacher_frames >= 1, "frame counts must be positive");
  return std::min(student_frames, teacher_frames);
}

}  // namespace kws
