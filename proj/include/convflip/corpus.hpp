#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "convflip/csv.hpp"
#include "convflip/dialogue.hpp"

namespace convflip {

using json = nlohmann::ordered_json;

enum class Split { kTrain, kDev, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    default: return "test";
  }
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

struct Corpus {
  Split split = Split::kTrain;
  std::vector<Dialogue> dialogues;
  // dialogue id -> validated trigger annotations, ordered by target index.
  std::map<std::string, std::vector<TriggerAnnotation>> annotations;

  const Dialogue* find(const std::string& id) const {
    for (const auto& d : dialogues)
      if (d.id == id) return &d;
    return nullptr;
  }
};

// Rows = source emotion, columns = target emotion; diagonal is zero by
// construction since a flip requires source != target.
struct DirectionalityMatrix {
  std::array<std::array<long, kNumEmotions>, kNumEmotions> counts{};

  long total() const {
    long t = 0;
    for (const auto& row : counts)
      for (long c : row) t += c;
    return t;
  }
};

// counts[d] = number of (target, trigger) pairs at distance d = target - trigger.
struct DistanceHistogram {
  std::map<int, long> counts;

  long total() const {
    long t = 0;
    for (const auto& [d, c] : counts) t += c;
    return t;
  }
};

struct SplitSummary {
  Split split = Split::kTrain;
  long dialogues = 0;
  long utterances = 0;
  std::array<long, kNumEmotions> per_emotion{};
  long flips = 0;
  long triggers = 0;
};

namespace detail {

inline std::runtime_error parse_error(const std::string& file, int line, const std::string& what) {
  return std::runtime_error(file + ":" + std::to_string(line) + ": " + what);
}

struct RawRow {
  std::string dialogue_id;
  long utterance_id;
  std::string speaker;
  std::string text;
  Emotion emotion;
};

inline std::vector<RawRow> read_csv_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvReader reader(in);
  auto header = reader.next();
  if (!header) throw std::runtime_error(path + ": empty corpus");
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < header->size(); ++i)
      if ((*header)[i] == name) return static_cast<int>(i);
    throw std::runtime_error(path + ": missing required column '" + name + "'");
  };
  const int c_did = col("Dialogue_ID"), c_uid = col("Utterance_ID"),
            c_spk = col("Speaker"), c_txt = col("Utterance"), c_emo = col("Emotion");
  const int needed = std::max({c_did, c_uid, c_spk, c_txt, c_emo});

  std::vector<RawRow> rows;
  while (auto rec = reader.next()) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;  // trailing blank line
    if (static_cast<int>(rec->size()) <= needed)
      throw parse_error(path, reader.line(), "missing field (expected at least " +
                        std::to_string(needed + 1) + " columns, got " +
                        std::to_string(rec->size()) + ")");
    RawRow row;
    row.dialogue_id = (*rec)[c_did];
    try {
      row.utterance_id = std::stol((*rec)[c_uid]);
    } catch (const std::exception&) {
      throw parse_error(path, reader.line(), "bad Utterance_ID '" + (*rec)[c_uid] + "'");
    }
    row.speaker = (*rec)[c_spk];
    row.text = (*rec)[c_txt];
    auto emo = parse_emotion((*rec)[c_emo]);
    if (!emo) throw parse_error(path, reader.line(), "unknown emotion string '" + (*rec)[c_emo] + "'");
    row.emotion = *emo;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty corpus");
  return rows;
}

inline std::vector<RawRow> read_jsonl_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<RawRow> rows;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw parse_error(path, ln, std::string("bad JSON: ") + e.what());
    }
    for (const char* key : {"dialogue_id", "utterance_index", "speaker", "text", "emotion"})
      if (!rec.contains(key)) throw parse_error(path, ln, std::string("missing field '") + key + "'");
    RawRow row;
    row.dialogue_id = rec["dialogue_id"].get<std::string>();
    row.utterance_id = rec["utterance_index"].get<long>();
    row.speaker = rec["speaker"].get<std::string>();
    row.text = rec["text"].get<std::string>();
    auto emo = parse_emotion(rec["emotion"].get<std::string>());
    if (!emo)
      throw parse_error(path, ln, "unknown emotion string '" + rec["emotion"].get<std::string>() + "'");
    row.emotion = *emo;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty corpus");
  return rows;
}

}  // namespace detail

// Read trigger annotations from a JSONL sidecar:
//   {"dialogue_id": str, "target_index": int, "trigger_indices": [int, ...]}
inline std::map<std::string, std::vector<TriggerAnnotation>> read_annotations(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<std::string, std::vector<TriggerAnnotation>> anns;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw detail::parse_error(path, ln, std::string("bad JSON: ") + e.what());
    }
    for (const char* key : {"dialogue_id", "target_index", "trigger_indices"})
      if (!rec.contains(key))
        throw detail::parse_error(path, ln, std::string("missing field '") + key + "'");
    TriggerAnnotation ann;
    ann.target_index = rec["target_index"].get<int>();
    for (const auto& k : rec["trigger_indices"]) ann.trigger_indices.insert(k.get<int>());
    anns[rec["dialogue_id"].get<std::string>()].push_back(std::move(ann));
  }
  return anns;
}

// Parse a dialogue file (MELD-style CSV or canonical JSONL, chosen by
// extension) plus an optional trigger-annotation sidecar. Rows are grouped by
// dialogue id (file order preserved) and sorted by utterance id; 1-based
// positions are assigned in that order. Every annotation is validated against
// its dialogue and stored sorted by target.
inline Corpus parse_corpus(const std::string& dialogue_file, const std::string& annotation_file,
                           Split split) {
  const bool is_csv = dialogue_file.size() >= 4 &&
                      dialogue_file.compare(dialogue_file.size() - 4, 4, ".csv") == 0;
  auto rows = is_csv ? detail::read_csv_rows(dialogue_file) : detail::read_jsonl_rows(dialogue_file);

  Corpus corpus;
  corpus.split = split;
  std::unordered_map<std::string, size_t> slot;
  std::vector<std::vector<detail::RawRow>> grouped;
  std::vector<std::string> order;
  for (auto& row : rows) {
    auto [it, inserted] = slot.try_emplace(row.dialogue_id, grouped.size());
    if (inserted) {
      grouped.emplace_back();
      order.push_back(row.dialogue_id);
    }
    grouped[it->second].push_back(std::move(row));
  }
  for (size_t g = 0; g < grouped.size(); ++g) {
    auto& rs = grouped[g];
    std::stable_sort(rs.begin(), rs.end(),
                     [](const auto& a, const auto& b) { return a.utterance_id < b.utterance_id; });
    Dialogue d;
    d.id = order[g];
    for (size_t i = 0; i + 1 < rs.size(); ++i)
      if (rs[i].utterance_id == rs[i + 1].utterance_id)
        throw std::runtime_error(dialogue_file + ": dialogue '" + d.id +
                                 "': duplicate Utterance_ID " + std::to_string(rs[i].utterance_id));
    for (size_t i = 0; i < rs.size(); ++i)
      d.utterances.push_back(
          {static_cast<int>(i) + 1, std::move(rs[i].speaker), std::move(rs[i].text), rs[i].emotion});
    d.check();
    corpus.dialogues.push_back(std::move(d));
  }

  if (!annotation_file.empty()) {
    corpus.annotations = read_annotations(annotation_file);
    for (auto& [id, anns] : corpus.annotations) {
      const Dialogue* d = corpus.find(id);
      if (!d)
        throw std::runtime_error(annotation_file + ": annotation for unknown dialogue '" + id + "'");
      std::sort(anns.begin(), anns.end(),
                [](const auto& a, const auto& b) { return a.target_index < b.target_index; });
      for (size_t i = 0; i + 1 < anns.size(); ++i)
        if (anns[i].target_index == anns[i + 1].target_index)
          throw std::runtime_error(annotation_file + ": dialogue '" + id +
                                   "': duplicate annotation for target " +
                                   std::to_string(anns[i].target_index));
      for (const auto& ann : anns) {
        auto res = validate_annotation(*d, ann);
        if (!res.ok()) {
          std::string msg = annotation_file + ": dialogue '" + id + "', target " +
                            std::to_string(ann.target_index) + ":";
          for (const auto& v : res.violations) msg += " " + v + ";";
          throw std::runtime_error(msg);
        }
      }
    }
  }
  return corpus;
}

// Canonical serialization: one utterance record per line.
inline void write_dialogues_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.dialogues)
    for (const auto& u : d.utterances) {
      json rec;
      rec["dialogue_id"] = d.id;
      rec["utterance_index"] = u.index;
      rec["speaker"] = u.speaker;
      rec["text"] = u.text;
      rec["emotion"] = std::string(to_string(u.emotion));
      out << rec.dump() << "\n";
    }
}

inline void write_annotations_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& [id, anns] : corpus.annotations)
    for (const auto& ann : anns) {
      json rec;
      rec["dialogue_id"] = id;
      rec["target_index"] = ann.target_index;
      rec["trigger_indices"] = json::array();
      for (int k : ann.trigger_indices) rec["trigger_indices"].push_back(k);
      out << rec.dump() << "\n";
    }
}

// Keep only dialogues with at least one emotion flip (annotations for dropped
// dialogues are dropped with them).
inline Corpus filter_flip_dialogues(const Corpus& corpus) {
  Corpus out;
  out.split = corpus.split;
  for (const auto& d : corpus.dialogues) {
    if (detect_flips(d).empty()) continue;
    out.dialogues.push_back(d);
    auto it = corpus.annotations.find(d.id);
    if (it != corpus.annotations.end()) out.annotations[d.id] = it->second;
  }
  return out;
}

inline DirectionalityMatrix directionality_matrix(const Corpus& corpus) {
  DirectionalityMatrix m;
  for (const auto& d : corpus.dialogues)
    for (const auto& f : detect_flips(d))
      ++m.counts[index_of(f.source_emotion)][index_of(f.target_emotion)];
  return m;
}

inline DistanceHistogram trigger_distance_histogram(const Corpus& corpus) {
  DistanceHistogram h;
  for (const auto& [id, anns] : corpus.annotations)
    for (const auto& ann : anns)
      for (int k : ann.trigger_indices) ++h.counts[ann.target_index - k];
  return h;
}

inline SplitSummary split_summary(const Corpus& corpus) {
  SplitSummary s;
  s.split = corpus.split;
  s.dialogues = static_cast<long>(corpus.dialogues.size());
  for (const auto& d : corpus.dialogues) {
    s.utterances += d.size();
    for (const auto& u : d.utterances) ++s.per_emotion[index_of(u.emotion)];
    s.flips += static_cast<long>(detect_flips(d).size());
  }
  for (const auto& [id, anns] : corpus.annotations)
    for (const auto& ann : anns) s.triggers += static_cast<long>(ann.trigger_indices.size());
  return s;
}

inline json to_json(const SplitSummary& s) {
  json j;
  j["split"] = std::string(to_string(s.split));
  j["dialogues"] = s.dialogues;
  j["utterances"] = s.utterances;
  json per;
  for (int e = 0; e < kNumEmotions; ++e) per[std::string(kEmotionNames[e])] = s.per_emotion[e];
  j["per_emotion"] = per;
  j["flips"] = s.flips;
  j["triggers"] = s.triggers;
  return j;
}

inline json to_json(const DirectionalityMatrix& m) {
  json j;
  j["labels"] = json::array();
  for (auto name : kEmotionNames) j["labels"].push_back(std::string(name));
  j["rows"] = "source";
  j["columns"] = "target";
  j["counts"] = json::array();
  for (const auto& row : m.counts) {
    json r = json::array();
    for (long c : row) r.push_back(c);
    j["counts"].push_back(r);
  }
  j["total"] = m.total();
  return j;
}

inline json to_json(const DistanceHistogram& h) {
  json j;
  j["pairs"] = json::array();
  for (const auto& [d, c] : h.counts) j["pairs"].push_back(json::array({d, c}));
  j["total"] = h.total();
  return j;
}

inline void write_csv(const DirectionalityMatrix& m, std::ostream& out) {
  out << "source\\target";
  for (auto name : kEmotionNames) out << "," << name;
  out << "\n";
  for (int r = 0; r < kNumEmotions; ++r) {
    out << kEmotionNames[r];
    for (int c = 0; c < kNumEmotions; ++c) out << "," << m.counts[r][c];
    out << "\n";
  }
}

inline void write_csv(const DistanceHistogram& h, std::ostream& out) {
  out << "distance,count\n";
  for (const auto& [d, c] : h.counts) out << d << "," << c << "\n";
}

}  // namespace convflip
