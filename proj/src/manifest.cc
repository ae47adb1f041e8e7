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

#include "kws/manifest.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "json.hpp"
#include "kws/audio.h"
#include "kws/augment.h"
#include "kws/errors.h"

namespace fs = std::filesystem;

namespace kws {
namespace {

std::set<std::string> ReadList(const fs::path& path) {
  std::set<std::string> ids;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

std::size_t CountOf(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

}  // namespace

int WordClass(const std::string& word) {
  for (int i = 0; i < kUnknownClass; ++i) {
    if (kClassNames[i] == word) return i;
  }
  return kUnknownClass;
}

const char* SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test" || name == "testing") return Split::kTest;
  KWS_FAIL(ConfigError, "unknown split '", name, "'");
}

Split HashSplit(const std::string& filename, double val_percent, double test_percent) {
  std::string base = fs::path(filename).filename().string();
  const auto cut = base.find("_nohash_");
  if (cut != std::string::npos) base.resize(cut);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(base.data(), base.size(), digest, &len, EVP_sha1(), nullptr) != 1 || len != 20) {
    KWS_FAIL(Error, "SHA-1 failed");
  }
  // int(hexdigest, 16) % (2^27) keeps the low 27 bits of the digest.
  std::uint32_t low = 0;
  for (int i = 16; i < 20; ++i) low = (low << 8) | digest[i];
  constexpr std::uint32_t kMaxPerClass = (1u << 27) - 1;
  const double percent = (low & kMaxPerClass) * (100.0 / kMaxPerClass);
  if (percent < val_percent) return Split::kVal;
  if (percent < val_percent + test_percent) return Split::kTest;
  return Split::kTrain;
}

std::vector<std::size_t> Manifest::Indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Manifest::Indices(Split split, int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split && entries[i].label == label) out.push_back(i);
  }
  return out;
}

const Entry* Manifest::Find(const std::string& id) const {
  for (const Entry& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void Manifest::WriteJsonLines(std::ostream& os) const {
  for (const Entry& e : entries) {
    nlohmann::json j = {{"id", e.id},
                        {"path", e.path},
                        {"label", e.label},
                        {"class", kClassNames[e.label]},
                        {"split", SplitName(e.split)}};
    if (e.silence) j["offset"] = e.offset;
    os << j.dump() << "\n";
  }
}

Manifest LoadDataset(const std::string& root, const DatasetOptions& options) {
  if (!fs::is_directory(root)) KWS_FAIL(IoError, "dataset root '", root, "' is not a directory");
  Manifest m;
  m.root = fs::absolute(root).lexically_normal().string();

  const fs::path val_list = fs::path(root) / "validation_list.txt";
  const fs::path test_list = fs::path(root) / "testing_list.txt";
  const bool have_lists = fs::exists(val_list) && fs::exists(test_list);
  std::set<std::string> val_ids, test_ids;
  if (have_lists) {
    val_ids = ReadList(val_list);
    test_ids = ReadList(test_list);
  } else {
    m.used_hash_split = true;
  }

  std::vector<std::string> words;
  for (const auto& dir : fs::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    const std::string name = dir.path().filename().string();
    if (!name.empty() && name[0] != '_' && name[0] != '.') words.push_back(name);
  }
  std::sort(words.begin(), words.end());

  std::vector<Entry> spoken;
  for (const std::string& word : words) {
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(fs::path(root) / word)) {
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& file : files) {
      Entry e;
      e.id = word + "/" + file;
      e.path = (fs::path(m.root) / word / file).string();
      e.label = WordClass(word);
      if (have_lists) {
        e.split = val_ids.count(e.id) ? Split::kVal : test_ids.count(e.id) ? Split::kTest : Split::kTrain;
      } else {
        e.split = HashSplit(file, options.val_percent, options.test_percent);
      }
      spoken.push_back(std::move(e));
    }
  }

  // Per split: every target clip, a seeded subset of unknowns for val/test.
  std::size_t targets[3] = {0, 0, 0};
  for (const Entry& e : spoken) targets[static_cast<int>(e.split)] += e.label < kUnknownClass;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::vector<std::size_t> unknown;
    for (std::size_t i = 0; i < spoken.size(); ++i) {
      if (spoken[i].split != split) continue;
      if (spoken[i].label < kUnknownClass) m.entries.push_back(spoken[i]);
      else unknown.push_back(i);
    }
    if (split != Split::kTrain) {
      Rng rng(DeriveSeed(options.seed, "unknown", static_cast<std::uint64_t>(split)));
      std::shuffle(unknown.begin(), unknown.end(), rng);
      unknown.resize(std::min(unknown.size(), CountOf(options.eval_unknown_fraction, targets[static_cast<int>(split)])));
      std::sort(unknown.begin(), unknown.end());
    }
    for (std::size_t i : unknown) m.entries.push_back(spoken[i]);
  }

  const fs::path noise_dir = fs::path(root) / "_background_noise_";
  std::vector<std::size_t> noise_lengths;
  if (fs::is_directory(noise_dir)) {
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(noise_dir)) {
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) {
      try {
        const AudioClip clip = ReadWav(f);
        if (clip.samples.size() < kClipSamples) continue;
        m.noise_files.push_back(fs::absolute(f).lexically_normal().string());
        noise_lengths.push_back(clip.samples.size());
      } catch (const IoError& e) {
        std::cerr << "warning: skipping background noise file: " << e.what() << "\n";
      }
    }
  }
  if (m.noise_files.empty()) {
    std::cerr << "warning: no usable _background_noise_ files under " << root
              << "; the silence class will be empty\n";
  } else {
    for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
      const std::size_t count = CountOf(options.silence_fraction, targets[static_cast<int>(split)]);
      Rng rng(DeriveSeed(options.seed, "silence", static_cast<std::uint64_t>(split)));
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t source = rng() % m.noise_files.size();
        Entry e;
        e.silence = true;
        e.label = kSilenceClass;
        e.split = split;
        e.path = m.noise_files[source];
        e.offset = rng() % (noise_lengths[source] - kClipSamples + 1);
        e.id = std::string("_silence_/") + SplitName(split) + "_" + std::to_string(k);
        m.entries.push_back(std::move(e));
      }
    }
  }
  return m;
}

}  // namespace kws
