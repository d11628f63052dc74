#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convflip/dialogue.hpp"

namespace convflip {

// One binary trigger-classification instance: a window of context ending at
// the target utterance, with per-position labels. Instances whose target is
// not a flip carry all-zero labels and are loss-masked during training.
struct EfrInstance {
  std::string dialogue_id;
  int target_index = 0;
  std::vector<int> context_indices;  // ordered, last == target_index
  std::vector<int> labels;           // aligned to context_indices, 1 = trigger
  bool has_flip = false;

  bool operator==(const EfrInstance&) const = default;
};

// One instance per utterance. Context is the min(window, t) most recent
// utterances ending at the target; gold labels come from the annotation with
// matching target, restricted to the window.
inline std::vector<EfrInstance> compile_instances(const Dialogue& dialogue,
                                                  const std::vector<TriggerAnnotation>& anns,
                                                  int window = 5) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  const int n = dialogue.size();
  std::map<int, const TriggerAnnotation*> by_target;
  for (const auto& ann : anns) {
    if (ann.target_index < 1 || ann.target_index > n)
      throw std::invalid_argument("dialogue '" + dialogue.id + "': annotation target " +
                                  std::to_string(ann.target_index) + " outside 1.." +
                                  std::to_string(n));
    by_target[ann.target_index] = &ann;
  }

  std::set<int> flip_targets;
  for (const auto& f : detect_flips(dialogue)) flip_targets.insert(f.target_index);

  std::vector<EfrInstance> out;
  out.reserve(n);
  for (int t = 1; t <= n; ++t) {
    EfrInstance inst;
    inst.dialogue_id = dialogue.id;
    inst.target_index = t;
    inst.has_flip = flip_targets.count(t) > 0;
    const int first = std::max(1, t - window + 1);
    const TriggerAnnotation* ann = nullptr;
    if (auto it = by_target.find(t); it != by_target.end()) ann = it->second;
    for (int k = first; k <= t; ++k) {
      inst.context_indices.push_back(k);
      inst.labels.push_back(ann && ann->trigger_indices.count(k) ? 1 : 0);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// How many gold (target, trigger) pairs fell outside the compiled windows.
// These remain in the gold set for evaluation and count as misses.
inline long window_loss_report(const std::vector<EfrInstance>& instances,
                               const std::vector<TriggerAnnotation>& anns) {
  std::map<int, std::set<int>> kept;
  for (const auto& inst : instances) {
    auto& s = kept[inst.target_index];
    for (size_t i = 0; i < inst.context_indices.size(); ++i)
      if (inst.labels[i]) s.insert(inst.context_indices[i]);
  }
  long dropped = 0;
  for (const auto& ann : anns) {
    auto it = kept.find(ann.target_index);
    for (int k : ann.trigger_indices)
      if (it == kept.end() || !it->second.count(k)) ++dropped;
  }
  return dropped;
}

inline nlohmann::ordered_json to_json(const EfrInstance& inst) {
  nlohmann::ordered_json j;
  j["dialogue_id"] = inst.dialogue_id;
  j["target_index"] = inst.target_index;
  j["context_indices"] = inst.context_indices;
  j["labels"] = inst.labels;
  j["has_flip"] = inst.has_flip;
  return j;
}

inline EfrInstance instance_from_json(const nlohmann::ordered_json& j) {
  EfrInstance inst;
  inst.dialogue_id = j.at("dialogue_id").get<std::string>();
  inst.target_index = j.at("target_index").get<int>();
  inst.context_indices = j.at("context_indices").get<std::vector<int>>();
  inst.labels = j.at("labels").get<std::vector<int>>();
  inst.has_flip = j.at("has_flip").get<bool>();
  if (inst.context_indices.size() != inst.labels.size())
    throw std::invalid_argument("instance labels/context length mismatch");
  return inst;
}

inline void write_instances_jsonl(const std::vector<EfrInstance>& instances, std::ostream& out) {
  for (const auto& inst : instances) out << to_json(inst).dump() << "\n";
}

inline std::vector<EfrInstance> read_instances_jsonl(std::istream& in) {
  std::vector<EfrInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(instance_from_json(nlohmann::ordered_json::parse(line)));
  }
  return out;
}

}  // namespace convflip
