#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace convflip {

// Canonical 7-way emotion inventory. The index order is fixed and is the
// column/row order of every 7-wide vector or matrix this library emits.
enum class Emotion : std::uint8_t {
  kDisgust = 0,
  kJoy = 1,
  kSurprise = 2,
  kAnger = 3,
  kFear = 4,
  kNeutral = 5,
  kSadness = 6,
};

inline constexpr int kNumEmotions = 7;

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "disgust", "joy", "surprise", "anger", "fear", "neutral", "sadness"};

inline std::string_view to_string(Emotion e) {
  return kEmotionNames[static_cast<int>(e)];
}

inline int index_of(Emotion e) { return static_cast<int>(e); }

inline Emotion emotion_from_index(int idx) {
  if (idx < 0 || idx >= kNumEmotions)
    throw std::out_of_range("emotion index out of range: " + std::to_string(idx));
  return static_cast<Emotion>(idx);
}

// Case-insensitive parse. "sad" and "happy" are accepted as aliases for
// sadness and joy, since corpora use both spellings.
inline std::optional<Emotion> parse_emotion(std::string_view s) {
  std::string lower(s);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "disgust") return Emotion::kDisgust;
  if (lower == "joy" || lower == "happy") return Emotion::kJoy;
  if (lower == "surprise") return Emotion::kSurprise;
  if (lower == "anger") return Emotion::kAnger;
  if (lower == "fear") return Emotion::kFear;
  if (lower == "neutral") return Emotion::kNeutral;
  if (lower == "sadness" || lower == "sad") return Emotion::kSadness;
  return std::nullopt;
}

}  // namespace convflip
