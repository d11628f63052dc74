#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "convflip/emotion.hpp"

namespace convflip {

// Utterance positions are 1-based throughout the library.
struct Utterance {
  int index = 0;
  std::string speaker;
  std::string text;
  Emotion emotion = Emotion::kNeutral;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;

  int size() const { return static_cast<int>(utterances.size()); }
  const Utterance& at(int index) const { return utterances.at(index - 1); }

  // Distinct speakers in order of first appearance.
  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    for (const auto& u : utterances)
      if (std::find(out.begin(), out.end(), u.speaker) == out.end())
        out.push_back(u.speaker);
    return out;
  }

  // Throws unless indices are 1..n in order and every speaker is non-empty.
  void check() const {
    if (utterances.empty())
      throw std::invalid_argument("dialogue '" + id + "' is empty");
    for (int i = 0; i < size(); ++i) {
      if (utterances[i].index != i + 1)
        throw std::invalid_argument("dialogue '" + id + "': utterance indices must be 1..n in order");
      if (utterances[i].speaker.empty())
        throw std::invalid_argument("dialogue '" + id + "': empty speaker at utterance " +
                                    std::to_string(i + 1));
    }
  }
};

// A speaker's emotion changed relative to their own previous utterance.
struct FlipEvent {
  std::string speaker;
  int target_index = 0;
  int previous_index = 0;
  Emotion source_emotion = Emotion::kNeutral;
  Emotion target_emotion = Emotion::kNeutral;
};

// Gold (or predicted) trigger set for one flip target. Empty sets are legal:
// some flips have no textual trigger.
struct TriggerAnnotation {
  int target_index = 0;
  std::set<int> trigger_indices;
};

struct SpeakerSequence {
  std::string speaker;
  std::vector<Utterance> utterances;
};

// One flip per utterance whose emotion differs from the same speaker's
// immediately preceding utterance. A speaker's first utterance never flips.
// Output is ordered by target index.
inline std::vector<FlipEvent> detect_flips(const Dialogue& dialogue) {
  std::vector<FlipEvent> flips;
  std::unordered_map<std::string, int> last_seen;  // speaker -> previous index
  for (const auto& u : dialogue.utterances) {
    auto it = last_seen.find(u.speaker);
    if (it != last_seen.end()) {
      const Utterance& prev = dialogue.at(it->second);
      if (prev.emotion != u.emotion)
        flips.push_back({u.speaker, u.index, prev.index, prev.emotion, u.emotion});
    }
    last_seen[u.speaker] = u.index;
  }
  return flips;
}

// Order-preserving filter by speaker. Unknown speaker yields an empty view.
inline SpeakerSequence speaker_view(const Dialogue& dialogue, const std::string& speaker) {
  SpeakerSequence seq{speaker, {}};
  for (const auto& u : dialogue.utterances)
    if (u.speaker == speaker) seq.utterances.push_back(u);
  return seq;
}

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// An annotation is valid iff its target is a detected flip and every trigger
// lies in [1, target_index]. Self-triggers (k == target) are fine.
inline ValidationResult validate_annotation(const Dialogue& dialogue,
                                            const TriggerAnnotation& ann) {
  ValidationResult res;
  const int n = dialogue.size();
  if (ann.target_index < 1 || ann.target_index > n) {
    res.violations.push_back("out-of-range: target " + std::to_string(ann.target_index) +
                             " not in [1, " + std::to_string(n) + "]");
    return res;
  }
  bool is_flip = false;
  for (const auto& f : detect_flips(dialogue))
    if (f.target_index == ann.target_index) { is_flip = true; break; }
  if (!is_flip)
    res.violations.push_back("target not a flip: utterance " + std::to_string(ann.target_index));
  for (int k : ann.trigger_indices) {
    if (k < 1 || k > n)
      res.violations.push_back("out-of-range: trigger " + std::to_string(k) + " not in [1, " +
                               std::to_string(n) + "]");
    else if (k > ann.target_index)
      res.violations.push_back("future trigger: " + std::to_string(k) + " > target " +
                               std::to_string(ann.target_index));
  }
  return res;
}

}  // namespace convflip
