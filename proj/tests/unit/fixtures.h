#ifndef KWS_TESTS_FIXTURES_H_
#define KWS_TESTS_FIXTURES_H_

#include <unistd.h>

#include <filesystem>
#include <string>

#include "kws/synthetic.h"

namespace kws::testing {

// Fresh directory per call, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("kws_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string str(const std::string& leaf = "") const { return (path / leaf).string(); }
};

// Shared synthetic corpus (16 words x 24 clips, 24 speakers), built once per
// process.
inline const std::string& Corpus() {
  static TempDir dir("corpus");
  static const std::string root = [] {
    SyntheticOptions opts;
    opts.seed = 3;
    opts.clips_per_word = 24;
    opts.speakers = 24;
    WriteSyntheticCorpus(dir.str("sc"), opts);
    return dir.str("sc");
  }();
  return root;
}

// Stand-in teacher store for Corpus() under manifest seed 1.
inline const std::string& CorpusTeacher() {
  static const std::string path = [] {
    const std::string p = (std::filesystem::path(Corpus()).parent_path() / "teacher.w2ve").string();
    WriteSyntheticTeacher(LoadDataset(Corpus(), {.seed = 1}), p, 0);
    return p;
  }();
  return path;
}

}  // namespace kws::testing

#endif  // KWS_TESTS_FIXTURES_H_
