#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "convflip/rng.hpp"

namespace convflip {

inline constexpr int kEmbeddingWidth = 768;
inline constexpr int kFallbackBins = 4096;

using UtteranceVector = Eigen::VectorXf;

enum class EmbeddingSource { kFile, kHashedFallback };

// Fixed-width vector per utterance. Vectors either come from a precomputed
// file (keyed by dialogue id + utterance index) or from a deterministic
// hashed-token fallback that depends only on the text and the fallback seed.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint64_t fallback_seed = 0x5eedULL)
      : fallback_seed_(fallback_seed) {}

  std::size_t size() const { return entries_.size(); }
  std::uint64_t fallback_seed() const { return fallback_seed_; }

  void insert(const std::string& dialogue_id, int utterance_index, UtteranceVector vec) {
    check_vector(vec, dialogue_id, utterance_index);
    auto [it, inserted] = entries_.try_emplace({dialogue_id, utterance_index}, std::move(vec));
    if (!inserted)
      throw std::runtime_error("duplicate embedding key (" + dialogue_id + ", " +
                               std::to_string(utterance_index) + ")");
  }

  const UtteranceVector* find(const std::string& dialogue_id, int utterance_index) const {
    auto it = entries_.find({dialogue_id, utterance_index});
    return it == entries_.end() ? nullptr : &it->second;
  }

  // Stored vector if keyed, else the hashed fallback of the text.
  UtteranceVector embed(const std::string& dialogue_id, int utterance_index,
                        std::string_view text) const {
    if (const auto* v = find(dialogue_id, utterance_index)) return *v;
    return fallback(text);
  }

  // Token-hash bag projected through a seeded Gaussian map, L2-normalized.
  // Tokens are maximal alphanumeric runs, lowercased; empty text -> zero.
  UtteranceVector fallback(std::string_view text) const {
    std::map<int, long> bag;
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      ++bag[static_cast<int>(fnv1a64(token) % kFallbackBins)];
      token.clear();
    };
    for (char ch : text) {
      if (std::isalnum(static_cast<unsigned char>(ch)))
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      else
        flush();
    }
    flush();

    UtteranceVector out = UtteranceVector::Zero(kEmbeddingWidth);
    if (bag.empty()) return out;
    for (const auto& [bin, count] : bag) {
      // One projection row per bin, regenerated deterministically on demand
      // (equivalent to a fixed 4096x768 matrix without holding it in memory).
      Rng rng(mix_seed(fallback_seed_, static_cast<std::uint64_t>(bin) + 1));
      for (int d = 0; d < kEmbeddingWidth; ++d)
        out[d] += static_cast<float>(count * rng.normal());
    }
    const float norm = out.norm();
    if (norm > 0.0f) out /= norm;
    return out;
  }

  const std::map<std::pair<std::string, int>, UtteranceVector>& entries() const {
    return entries_;
  }

 private:
  static void check_vector(const UtteranceVector& vec, const std::string& dialogue_id,
                           int utterance_index) {
    const std::string key = "(" + dialogue_id + ", " + std::to_string(utterance_index) + ")";
    if (vec.size() != kEmbeddingWidth)
      throw std::runtime_error("embedding " + key + ": width " + std::to_string(vec.size()) +
                               ", expected " + std::to_string(kEmbeddingWidth));
    if (!vec.allFinite()) throw std::runtime_error("embedding " + key + ": non-finite value");
  }

  std::uint64_t fallback_seed_;
  std::map<std::pair<std::string, int>, UtteranceVector> entries_;
};

// JSONL records: {"dialogue_id": str, "utterance_index": int, "vector": [768 floats]}.
// Empty file yields an empty store (fallback covers lookups downstream).
inline EmbeddingStore load_store(const std::string& path, std::uint64_t fallback_seed = 0x5eedULL) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  EmbeddingStore store(fallback_seed);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    nlohmann::ordered_json rec;
    try {
      rec = nlohmann::ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": bad JSON: " + e.what());
    }
    for (const char* key : {"dialogue_id", "utterance_index", "vector"})
      if (!rec.contains(key))
        throw std::runtime_error(path + ":" + std::to_string(ln) + ": missing field '" + key + "'");
    const auto& arr = rec["vector"];
    UtteranceVector vec(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) vec[static_cast<Eigen::Index>(i)] = arr[i].get<float>();
    try {
      store.insert(rec["dialogue_id"].get<std::string>(), rec["utterance_index"].get<int>(),
                   std::move(vec));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  return store;
}

inline void write_store(const EmbeddingStore& store, std::ostream& out) {
  for (const auto& [key, vec] : store.entries()) {
    nlohmann::ordered_json rec;
    rec["dialogue_id"] = key.first;
    rec["utterance_index"] = key.second;
    rec["vector"] = nlohmann::ordered_json::array();
    for (int d = 0; d < vec.size(); ++d) rec["vector"].push_back(vec[d]);
    out << rec.dump() << "\n";
  }
}

}  // namespace convflip
