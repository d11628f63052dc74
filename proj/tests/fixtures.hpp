#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "convflip/corpus.hpp"
#include "convflip/dialogue.hpp"

namespace fixtures {

using convflip::Corpus;
using convflip::Dialogue;
using convflip::Emotion;

inline std::string dir() { return CONVFLIP_FIXTURE_DIR; }
inline std::string fig_corpus_path() { return dir() + "/fig_corpus.csv"; }
inline std::string fig_annotations_path() { return dir() + "/fig_annotations.jsonl"; }
inline std::string manifest_path() { return dir() + "/manifest.json"; }
inline std::string overfit_corpus_path() { return dir() + "/overfit_corpus.csv"; }
inline std::string overfit_annotations_path() { return dir() + "/overfit_annotations.jsonl"; }

// Dialogue from (speaker, emotion) pairs; texts are generated and unique.
inline Dialogue build_dialogue(const std::string& id,
                               const std::vector<std::pair<std::string, Emotion>>& stream) {
  Dialogue d;
  d.id = id;
  int index = 1;
  for (const auto& [speaker, emotion] : stream) {
    d.utterances.push_back({index, speaker, "utterance " + id + " " + std::to_string(index), emotion});
    ++index;
  }
  d.check();
  return d;
}

// Two-speaker dialogue with flips at 3 (n->joy), 4 (n->joy), 6 (joy->sad),
// 7 (joy->sad), 8 (sad->n) -- the five-target pattern with self and
// other-speaker triggers.
inline Dialogue five_flip_dialogue(const std::string& id = "F1") {
  return build_dialogue(id, {{"A", Emotion::kNeutral},
                             {"B", Emotion::kNeutral},
                             {"A", Emotion::kJoy},
                             {"B", Emotion::kJoy},
                             {"A", Emotion::kJoy},
                             {"B", Emotion::kSadness},
                             {"A", Emotion::kSadness},
                             {"B", Emotion::kNeutral}});
}

// Single late flip at 8 (joy->anger) with two distant triggers {5, 7}.
inline Dialogue late_flip_dialogue(const std::string& id = "F2") {
  return build_dialogue(id, {{"A", Emotion::kNeutral},
                             {"B", Emotion::kJoy},
                             {"A", Emotion::kNeutral},
                             {"B", Emotion::kJoy},
                             {"A", Emotion::kNeutral},
                             {"B", Emotion::kJoy},
                             {"A", Emotion::kNeutral},
                             {"B", Emotion::kAnger}});
}

// Three speakers; flips at 4 (n->anger) and 5 (n->fear).
inline Dialogue three_speaker_dialogue(const std::string& id = "F3") {
  return build_dialogue(id, {{"A", Emotion::kNeutral},
                             {"B", Emotion::kNeutral},
                             {"C", Emotion::kSurprise},
                             {"A", Emotion::kAnger},
                             {"B", Emotion::kFear}});
}

// Self-triggered flip at 3 (joy->sadness).
inline Dialogue self_trigger_dialogue(const std::string& id = "F4") {
  return build_dialogue(id, {{"A", Emotion::kJoy},
                             {"B", Emotion::kNeutral},
                             {"A", Emotion::kSadness}});
}

inline Corpus fig_corpus() {
  return convflip::parse_corpus(fig_corpus_path(), fig_annotations_path(), convflip::Split::kTrain);
}

inline Corpus overfit_corpus() {
  return convflip::parse_corpus(overfit_corpus_path(), overfit_annotations_path(),
                                convflip::Split::kTrain);
}

// Unique scratch directory, removed with everything in it on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("convflip-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    const std::string p = file(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fixtures
