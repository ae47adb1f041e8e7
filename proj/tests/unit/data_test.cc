#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.h"
#include "kws/audio.h"
#include "kws/batch.h"
#include "kws/errors.h"
#include "kws/manifest.h"
#include "kws/synthetic.h"
#include "kws/teacher_store.h"

namespace fs = std::filesystem;
using namespace kws;
using kws::testing::Corpus;
using kws::testing::TempDir;

namespace {

std::string SpeakerOf(const std::string& id) {
  const std::string file = fs::path(id).filename().string();
  return file.substr(0, file.find("_nohash_"));
}

std::vector<float> Payload(std::size_t frames, float base) {
  std::vector<float> v(frames * kTeacherDim);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = base + 0.001f * static_cast<float>(i % 997);
  return v;
}

}  // namespace

TEST_CASE("word directories map to the twelve classes") {
  CHECK(WordClass("yes") == 0);
  CHECK(WordClass("no") == 1);
  CHECK(WordClass("stop") == 8);
  CHECK(WordClass("go") == 9);
  CHECK(WordClass("bed") == kUnknownClass);
  CHECK(WordClass("marvin") == kUnknownClass);
  CHECK(kClassNames[kSilenceClass] == "silence");
  CHECK(kClassNames[kUnknownClass] == "unknown");
  CHECK(ParseSplit("validation") == Split::kVal);
  CHECK_THROWS_AS(ParseSplit("dev"), ConfigError);
}

TEST_CASE("hash split matches the reference hashing scheme") {
  // Values from hashlib.sha1 over the name without its _nohash_ suffix.
  CHECK(HashSplit("0a7c2a8d_nohash_0.wav") == Split::kTrain);
  CHECK(HashSplit("00176480_nohash_0.wav") == Split::kTrain);
  CHECK(HashSplit("deadbeef_nohash_0.wav") == Split::kTrain);
  CHECK(HashSplit("a1b2c3d4_nohash_2.wav") == Split::kVal);
  CHECK(HashSplit("12345678_nohash_0.wav") == Split::kVal);
  CHECK(HashSplit("be1e0823_nohash_0.wav") == Split::kTest);
  CHECK(HashSplit("c6ef3620_nohash_5.wav") == Split::kTest);
  CHECK(HashSplit("6526afd1_nohash_1.wav") == Split::kTest);
  // Speaker prefix decides; take number and directory do not.
  CHECK(HashSplit("yes/12345678_nohash_9.wav") == HashSplit("12345678_nohash_0.wav"));
  // 12345678 sits at 4.86%.
  CHECK(HashSplit("12345678_nohash_0.wav", 4.8, 10) == Split::kTest);
  CHECK(HashSplit("12345678_nohash_0.wav", 4.9, 10) == Split::kVal);
}

TEST_CASE("synthetic corpus loads with hash splits and no speaker leakage") {
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  CHECK(m.used_hash_split);
  CHECK(m.noise_files.size() == 2);
  std::map<std::string, std::set<Split>> speaker_splits;
  std::set<std::string> ids;
  std::size_t targets[3] = {}, unknown[3] = {}, silence[3] = {};
  for (const Entry& e : m.entries) {
    CHECK(ids.insert(e.id).second);
    const int s = static_cast<int>(e.split);
    if (e.label == kSilenceClass) {
      ++silence[s];
      continue;
    }
    speaker_splits[SpeakerOf(e.id)].insert(e.split);
    CHECK(e.split == HashSplit(e.id));
    (e.label == kUnknownClass ? unknown : targets)[s]++;
  }
  for (const auto& [speaker, splits] : speaker_splits) CHECK(splits.size() == 1);
  CHECK(targets[0] + targets[1] + targets[2] == 240);
  // Every unknown clip stays in train; val/test keep ceil(10% of targets).
  for (int s = 0; s < 3; ++s) {
    const auto cap = static_cast<std::size_t>(std::ceil(0.1 * double(targets[s])));
    CHECK(silence[s] == cap);
    if (s != 0) CHECK(unknown[s] <= cap);
  }
  CHECK(unknown[0] == 144 * targets[0] / 240);
}

TEST_CASE("manifest is deterministic in the seed") {
  const Manifest a = LoadDataset(Corpus(), {.seed = 7});
  const Manifest b = LoadDataset(Corpus(), {.seed = 7});
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].id == b.entries[i].id);
    CHECK(a.entries[i].offset == b.entries[i].offset);
  }
  const Manifest c = LoadDataset(Corpus(), {.seed = 8});
  bool any_offset_differs = false;
  for (std::size_t i = 0; i < std::min(a.entries.size(), c.entries.size()); ++i) {
    if (a.entries[i].silence && c.entries[i].silence && a.entries[i].offset != c.entries[i].offset) {
      any_offset_differs = true;
    }
  }
  CHECK(any_offset_differs);
}

TEST_CASE("list files override the hash split") {
  TempDir dir("lists");
  SyntheticOptions opts;
  opts.clips_per_word = 4;
  opts.speakers = 4;
  opts.unknown_words = 1;
  WriteSyntheticCorpus(dir.str(), opts);
  const Manifest hashed = LoadDataset(dir.str());
  std::string moved;
  for (const Entry& e : hashed.entries) {
    if (e.split == Split::kTrain && e.label == 0) {
      moved = e.id;
      break;
    }
  }
  REQUIRE(!moved.empty());
  std::ofstream(dir.path / "validation_list.txt") << moved << "\n";
  std::ofstream(dir.path / "testing_list.txt") << "";
  const Manifest listed = LoadDataset(dir.str());
  CHECK_FALSE(listed.used_hash_split);
  for (const Entry& e : listed.entries) {
    if (e.silence) continue;
    if (e.id == moved) CHECK(e.split == Split::kVal);
    else if (e.label != kUnknownClass) CHECK(e.split == Split::kTrain);
  }
}

TEST_CASE("missing root and unusable noise") {
  CHECK_THROWS_AS(LoadDataset("/nonexistent/kws"), IoError);
  TempDir dir("nonoise");
  fs::create_directories(dir.path / "yes");
  WriteWav(dir.str("yes/aaaaaaaa_nohash_0.wav"), {SynthesizeWord("yes", 1), kSampleRate});
  const Manifest m = LoadDataset(dir.str());
  CHECK(m.entries.size() == 1);
  CHECK(m.noise_files.empty());
}

TEST_CASE("silence clips are 16000-sample crops of background noise") {
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  const FeaturePipeline pipeline(m);
  std::size_t seen = 0;
  for (const Entry& e : m.entries) {
    if (!e.silence) continue;
    ++seen;
    CHECK(e.label == kSilenceClass);
    CHECK(e.id.rfind("_silence_/", 0) == 0);
    const std::vector<float> wave = pipeline.LoadWave(e);
    REQUIRE(wave.size() == 16000);
    const AudioClip source = ReadWav(e.path);
    CHECK(std::equal(wave.begin(), wave.end(), source.samples.begin() + static_cast<long>(e.offset)));
  }
  CHECK(seen > 0);
}

TEST_CASE("sampler keeps the unknown share near ten percent") {
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  const SupervisedSampler sampler(m, m.Indices(Split::kTrain));
  Rng rng(11);
  std::size_t unknown = 0, silence = 0, total = 0;
  for (int b = 0; b < 100; ++b) {
    for (std::size_t i : sampler.Draw(128, rng)) {
      unknown += m.entries[i].label == kUnknownClass;
      silence += m.entries[i].label == kSilenceClass;
      ++total;
    }
  }
  const double fu = double(unknown) / double(total);
  const double fs_ = double(silence) / double(total);
  CHECK(fu >= 0.07);
  CHECK(fu <= 0.13);
  CHECK(fs_ >= 0.07);
  CHECK(fs_ <= 0.13);
}

TEST_CASE("label subset is stratified and seeded") {
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  const auto train = m.Indices(Split::kTrain);
  const auto half = LabelSubset(m, train, 0.5, 4);
  CHECK(half == LabelSubset(m, train, 0.5, 4));
  CHECK(half != LabelSubset(m, train, 0.5, 5));
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    const auto n = static_cast<double>(m.Indices(Split::kTrain, c).size());
    const auto k = std::count_if(half.begin(), half.end(), [&](std::size_t i) { return m.entries[i].label == c; });
    CHECK(k == std::llround(0.5 * n));
  }
  CHECK(LabelSubset(m, train, 1.0, 0) == train);
  CHECK_THROWS_AS(LabelSubset(m, train, 0.0, 0), ConfigError);
  CHECK_THROWS_AS(LabelSubset(m, train, 1.5, 0), ConfigError);
}

TEST_CASE("teacher store round trip and layout") {
  TempDir dir("store");
  const std::string path = dir.str("t.w2ve");
  {
    TeacherStoreWriter w(path);
    w.Add("yes/a_nohash_0.wav", 49, Payload(49, 0.5f));
    w.Add("no/b_nohash_1.wav", 50, Payload(50, -1.0f));
    CHECK_THROWS_AS(w.Add("yes/a_nohash_0.wav", 49, Payload(49, 0)), ContractViolation);
    CHECK_THROWS_AS(w.Add("x", 49, Payload(48, 0)), ContractViolation);
    w.Finish();
  }
  CHECK_FALSE(fs::exists(path + ".tmp"));
  // 49 x 768 x 4 = 150528 payload bytes.
  const std::size_t id1 = 18, id2 = 17;
  const std::size_t expected = 12 + (2 + id1 + 12 + 150528) + (2 + id2 + 12 + 50 * 768 * 4) +
                               (2 + id1 + 8) + (2 + id2 + 8) + 8;
  CHECK(fs::file_size(path) == expected);

  const TeacherStore store = TeacherStore::Open(path);
  CHECK(store.size() == 2);
  const TeacherEmbedding e = store.Read("yes/a_nohash_0.wav");
  CHECK(e.frames == 49);
  CHECK(e.dim == 768);
  CHECK(e.values == Payload(49, 0.5f));
  CHECK(store.Read("no/b_nohash_1.wav").frames == 50);
  CHECK_THROWS_AS(store.Read("left/c_nohash_0.wav"), NotFoundError);
  const StoreReport r = VerifyStore(path);
  CHECK(r.ok);
  CHECK(r.records == 2);
  CHECK(r.frame_histogram.at(49) == 1);
}

TEST_CASE("empty teacher store") {
  TempDir dir("empty");
  const std::string path = dir.str("e.w2ve");
  TeacherStoreWriter(path).Finish();
  CHECK(fs::file_size(path) == 20);
  CHECK(TeacherStore::Open(path).size() == 0);
  CHECK(VerifyStore(path).ok);
}

TEST_CASE("unfinished writer leaves nothing behind") {
  TempDir dir("unfinished");
  const std::string path = dir.str("u.w2ve");
  {
    TeacherStoreWriter w(path);
    w.Add("a", 1, Payload(1, 0));
  }
  CHECK_FALSE(fs::exists(path));
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("flipped payload byte is caught for exactly one record") {
  TempDir dir("crc");
  const std::string path = dir.str("c.w2ve");
  {
    TeacherStoreWriter w(path);
    w.Add("r0", 49, Payload(49, 0));
    w.Add("r1", 49, Payload(49, 1));
    w.Add("r2", 49, Payload(49, 2));
    w.Finish();
  }
  const std::size_t record = 4 + 12 + 150528;
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(12 + record + 4 + 12 + 1000));
    char c;
    f.seekg(f.tellp());
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x10);
    f.seekp(static_cast<std::streamoff>(12 + record + 4 + 12 + 1000));
    f.write(&c, 1);
  }
  const StoreReport r = VerifyStore(path);
  CHECK_FALSE(r.ok);
  CHECK(r.bad_ids == std::vector<std::string>{"r1"});
  const TeacherStore store = TeacherStore::Open(path);
  CHECK_THROWS_AS(store.Read("r1"), IntegrityError);
  CHECK(store.Read("r0").values == Payload(49, 0));
  CHECK(store.Read("r2").values == Payload(49, 2));
}

TEST_CASE("truncated and corrupt stores are rejected") {
  TempDir dir("trunc");
  const std::string path = dir.str("t.w2ve");
  {
    TeacherStoreWriter w(path);
    w.Add("r0", 49, Payload(49, 0));
    w.Add("r1", 49, Payload(49, 1));
    w.Finish();
  }
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(TeacherStore::Open(path), IntegrityError);
  CHECK_FALSE(VerifyStore(path).ok);
  fs::resize_file(path, 6);
  CHECK_THROWS_AS(TeacherStore::Open(path), Error);
  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFFxxxxxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(TeacherStore::Open(path), IntegrityError);
}

TEST_CASE("frame alignment truncates to the shorter sequence") {
  CHECK(AlignFrames(50, 49) == 49);
  CHECK(AlignFrames(50, 50) == 50);
  CHECK(AlignFrames(50, 120) == 50);
  CHECK_THROWS_AS(AlignFrames(0, 49), ContractViolation);
}

TEST_CASE("batches have the expected shapes and are reproducible") {
  TempDir dir("batch");
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  const std::string store_path = dir.str("teacher.w2ve");
  WriteSyntheticTeacher(m, store_path, 0);
  const TeacherStore store = TeacherStore::Open(store_path);
  CHECK(store.size() == m.entries.size());
  CHECK(VerifyStore(store_path).ok);

  const FeaturePipeline pipeline(m);
  const std::vector<std::size_t> idx = {0, 5, m.entries.size() - 1};  // last is a silence crop
  BatchOptions opts;
  opts.mode = BatchMode::kJoint;
  opts.seed = 9;
  opts.keep_records = true;
  const Batch a = MakeBatch(m, pipeline, &store, idx, opts);
  CHECK(a.size() == 3);
  CHECK(a.x1.shape() == Shape{3, 100, 40});
  CHECK(a.x2.shape() == Shape{3, 100, 40});
  CHECK(a.clean.shape() == Shape{3, 100, 40});
  CHECK(a.teacher.shape() == Shape{3, 49, 768});
  CHECK(a.one_hot.shape() == Shape{3, 12});
  CHECK(a.labels.back() == kSilenceClass);
  CHECK(a.one_hot[2 * 12 + kSilenceClass] == 1);
  CHECK(a.records.size() == 3);

  const Batch b = MakeBatch(m, pipeline, &store, idx, opts);
  CHECK(std::equal(a.x1.data().begin(), a.x1.data().end(), b.x1.data().begin()));
  CHECK(std::equal(a.x2.data().begin(), a.x2.data().end(), b.x2.data().begin()));
  CHECK(a.records == b.records);
  // The two views draw from different streams.
  CHECK_FALSE(std::equal(a.x1.data().begin(), a.x1.data().end(), a.x2.data().begin()));
  opts.epoch = 1;
  const Batch c = MakeBatch(m, pipeline, &store, idx, opts);
  CHECK(a.records != c.records);

  opts.mode = BatchMode::kSupervised;
  opts.augment = false;
  const Batch clean = MakeBatch(m, pipeline, nullptr, idx, opts);
  CHECK(clean.x1.shape() == Shape{3, 100, 40});
  CHECK(clean.teacher.numel() == 0);
  CHECK(std::equal(clean.x1.data().begin(), clean.x1.data().end(), a.clean.data().begin()));
}

TEST_CASE("missing teacher embeddings fail or are skipped") {
  TempDir dir("missing");
  const Manifest m = LoadDataset(Corpus(), {.seed = 1});
  const std::string path = dir.str("partial.w2ve");
  {
    TeacherStoreWriter w(path);
    w.Add(m.entries[0].id, 49, Payload(49, 0));
    w.Finish();
  }
  const TeacherStore store = TeacherStore::Open(path);
  const FeaturePipeline pipeline(m);
  BatchOptions opts;
  opts.mode = BatchMode::kWvc;
  CHECK_THROWS_AS(MakeBatch(m, pipeline, &store, {0, 1}, opts), NotFoundError);
  opts.require_teacher = false;
  const Batch b = MakeBatch(m, pipeline, &store, {0, 1}, opts);
  CHECK(b.size() == 1);
  CHECK(b.ids[0] == m.entries[0].id);
  CHECK(b.teacher.shape() == Shape{1, 49, 768});
  CHECK_THROWS_AS(MakeBatch(m, pipeline, nullptr, {0}, opts), ConfigError);
}

TEST_CASE("epoch batches cover every index once") {
  std::vector<std::size_t> idx(10);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(1);
  const auto batches = EpochBatches(idx, 4, rng);
  CHECK(batches.size() == 3);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) seen.insert(seen.end(), b.begin(), b.end());
  std::sort(seen.begin(), seen.end());
  CHECK(seen == idx);
  Rng rng2(1);
  CHECK(EpochBatches(idx, 3, rng2, 2).size() == 3);  // trailing singleton dropped
}
