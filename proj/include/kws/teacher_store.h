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

// Precomputed teacher frame embeddings.
//
// Layout (little-endian):
//   "W2VE" | u32 version=1 | u32 record count
//   record*: u16 id length | id bytes | u32 frames | u32 dim=768 |
//            u32 CRC-32 of payload | f32 payload [frames, dim]
//   index*:  u16 id length | id bytes | u64 record offset
//   u64 index offset (last 8 bytes)

#ifndef KWS_TEACHER_STORE_H_
#define KWS_TEACHER_STORE_H_

#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kws {

inline constexpr char kTeacherMagic[4] = {'W', '2', 'V', 'E'};
inline constexpr std::uint32_t kTeacherVersion = 1;
inline constexpr std::uint32_t kTeacherDim = 768;

struct TeacherEmbedding {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // [frames, dim]
};

class TeacherStoreWriter {
 public:
  // Writes to `path`.tmp and renames on Finish.
  explicit TeacherStoreWriter(std::string path);
  ~TeacherStoreWriter();
  TeacherStoreWriter(const TeacherStoreWriter&) = delete;
  TeacherStoreWriter& operator=(const TeacherStoreWriter&) = delete;

  // `values` is [frames, 768]. Duplicate ids are rejected.
  void Add(const std::string& id, std::size_t frames, std::span<const float> values);
  void Finish();

 private:
  std::string path_;
  std::ofstream os_;
  std::vector<std::pair<std::string, std::uint64_t>> index_;
  std::unordered_map<std::string, std::size_t> seen_;
  bool finished_ = false;
};

class TeacherStore {
 public:
  // Reads the header and index. Raises IoError / IntegrityError on a
  // malformed file.
  static TeacherStore Open(const std::string& path);

  std::size_t size() const { return offsets_.size(); }
  bool Contains(const std::string& id) const { return offsets_.count(id) > 0; }
  std::vector<std::string> ids() const;

  // NotFoundError for unknown ids, IntegrityError on a checksum or header
  // mismatch. Safe to call concurrently.
  TeacherEmbedding Read(const std::string& id) const;

 private:
  std::string path_;
  std::map<std::string, std::uint64_t> offsets_;
};

struct StoreReport {
  bool ok = true;
  std::size_t records = 0;
  std::vector<std::string> errors;
  std::vector<std::string> bad_ids;
  std::map<std::size_t, std::size_t> frame_histogram;
};

// Checks magic, version, index consistency, every CRC and dim.
StoreReport VerifyStore(const std::string& path);

// Student/teacher frame alignment: both truncated to the shorter length.
std::size_t AlignFrames(std::size_t student_frames, std::size_t teacher_frames);

}  // namespace kws

#endif  // KWS_TEACHER_STORE_H_
