#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "convflip/corpus.hpp"
#include "convflip/efr_tx.hpp"
#include "convflip/multitask.hpp"

namespace convflip {

// One configuration document drives every subcommand. Precedence, lowest to
// highest: struct defaults, config file, CONVFLIP_* environment variables,
// command-line flags. Unknown keys are rejected outright. The top-level seed
// is pushed into every hyperparameter block by finalize(); efr.window doubles
// as the instance-compilation and evaluation window.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string dialogues;    // corpus file (.csv or .jsonl)
  std::string annotations;  // trigger annotations (JSONL)
  std::string embeddings;   // embedding store (JSONL); empty = hashed fallback only
  std::string labels;       // emotion labels for predicted-label conditioning (JSONL)
  Split split = Split::kTrain;
  ErcHyperParams erc;
  EfrHyperParams efr;
  MultiHyperParams multi;

  void finalize() {
    erc.seed = seed;
    efr.seed = seed;
    multi.seed = seed;
    multi.erc = erc;  // the erc block configures the shared trunk everywhere
  }

  void validate() const {
    erc.check();
    efr.check();
    multi.check();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (std::string_view a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
  }
}

inline std::int64_t as_int(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw std::invalid_argument(where + " must be an integer");
  return v.get<std::int64_t>();
}

inline double as_double(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw std::invalid_argument(where + " must be a number");
  return v.get<double>();
}

inline bool as_bool(const nlohmann::json& v, const std::string& where) {
  if (!v.is_boolean()) throw std::invalid_argument(where + " must be a boolean");
  return v.get<bool>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& where) {
  if (!v.is_string()) throw std::invalid_argument(where + " must be a string");
  return v.get<std::string>();
}

inline int parse_config_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < INT32_MIN || v > INT32_MAX) throw std::invalid_argument("");
    return static_cast<int>(v);
  } catch (...) {
    throw std::invalid_argument(where + ": not an integer: '" + s + "'");
  }
}

inline std::uint64_t parse_config_u64(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument(where + ": not an unsigned integer: '" + s + "'");
  }
}

}  // namespace detail

inline void parse_erc_block(const nlohmann::json& j, ErcHyperParams& hp) {
  detail::reject_unknown(j,
                         {"input_width", "hidden_width", "hops", "max_seq_len", "max_speaker_roles",
                          "dropout", "learning_rate", "batch_size", "max_epochs", "label_infusion",
                          "disable_global_context", "unshared_hop_weights"},
                         "erc");
  if (j.contains("input_width")) hp.input_width = static_cast<int>(detail::as_int(j["input_width"], "erc.input_width"));
  if (j.contains("hidden_width")) hp.hidden_width = static_cast<int>(detail::as_int(j["hidden_width"], "erc.hidden_width"));
  if (j.contains("hops")) hp.hops = static_cast<int>(detail::as_int(j["hops"], "erc.hops"));
  if (j.contains("max_seq_len")) hp.max_seq_len = static_cast<int>(detail::as_int(j["max_seq_len"], "erc.max_seq_len"));
  if (j.contains("max_speaker_roles"))
    hp.max_speaker_roles = static_cast<int>(detail::as_int(j["max_speaker_roles"], "erc.max_speaker_roles"));
  if (j.contains("dropout")) hp.dropout = detail::as_double(j["dropout"], "erc.dropout");
  if (j.contains("learning_rate")) hp.learning_rate = detail::as_double(j["learning_rate"], "erc.learning_rate");
  if (j.contains("batch_size")) hp.batch_size = static_cast<int>(detail::as_int(j["batch_size"], "erc.batch_size"));
  if (j.contains("max_epochs")) hp.max_epochs = static_cast<int>(detail::as_int(j["max_epochs"], "erc.max_epochs"));
  if (j.contains("label_infusion")) hp.label_infusion = detail::as_bool(j["label_infusion"], "erc.label_infusion");
  if (j.contains("disable_global_context"))
    hp.disable_global_context = detail::as_bool(j["disable_global_context"], "erc.disable_global_context");
  if (j.contains("unshared_hop_weights"))
    hp.unshared_hop_weights = detail::as_bool(j["unshared_hop_weights"], "erc.unshared_hop_weights");
}

inline void parse_efr_block(const nlohmann::json& j, EfrHyperParams& hp) {
  detail::reject_unknown(j,
                         {"model_width", "encoder_layers", "attention_heads", "feedforward_width",
                          "dropout", "learning_rate", "batch_size", "max_epochs", "window",
                          "conditioning", "label_source"},
                         "efr");
  if (j.contains("model_width")) hp.model_width = static_cast<int>(detail::as_int(j["model_width"], "efr.model_width"));
  if (j.contains("encoder_layers"))
    hp.encoder_layers = static_cast<int>(detail::as_int(j["encoder_layers"], "efr.encoder_layers"));
  if (j.contains("attention_heads"))
    hp.attention_heads = static_cast<int>(detail::as_int(j["attention_heads"], "efr.attention_heads"));
  if (j.contains("feedforward_width"))
    hp.feedforward_width = static_cast<int>(detail::as_int(j["feedforward_width"], "efr.feedforward_width"));
  if (j.contains("dropout")) hp.dropout = detail::as_double(j["dropout"], "efr.dropout");
  if (j.contains("learning_rate")) hp.learning_rate = detail::as_double(j["learning_rate"], "efr.learning_rate");
  if (j.contains("batch_size")) hp.batch_size = static_cast<int>(detail::as_int(j["batch_size"], "efr.batch_size"));
  if (j.contains("max_epochs")) hp.max_epochs = static_cast<int>(detail::as_int(j["max_epochs"], "efr.max_epochs"));
  if (j.contains("window")) hp.window = static_cast<int>(detail::as_int(j["window"], "efr.window"));
  if (j.contains("conditioning")) {
    const std::string s = detail::as_string(j["conditioning"], "efr.conditioning");
    const auto c = parse_conditioning(s);
    if (!c) throw std::invalid_argument("efr.conditioning: unknown value '" + s + "'");
    hp.conditioning = *c;
  }
  if (j.contains("label_source")) {
    const std::string s = detail::as_string(j["label_source"], "efr.label_source");
    const auto ls = parse_label_source(s);
    if (!ls) throw std::invalid_argument("efr.label_source: unknown value '" + s + "'");
    hp.label_source = *ls;
  }
}

inline void parse_multi_block(const nlohmann::json& j, MultiHyperParams& hp) {
  detail::reject_unknown(
      j, {"window", "erc_loss_weight", "efr_loss_weight", "learning_rate", "batch_size", "max_epochs"},
      "multi");
  if (j.contains("window")) hp.window = static_cast<int>(detail::as_int(j["window"], "multi.window"));
  if (j.contains("erc_loss_weight")) hp.erc_loss_weight = detail::as_double(j["erc_loss_weight"], "multi.erc_loss_weight");
  if (j.contains("efr_loss_weight")) hp.efr_loss_weight = detail::as_double(j["efr_loss_weight"], "multi.efr_loss_weight");
  if (j.contains("learning_rate")) hp.learning_rate = detail::as_double(j["learning_rate"], "multi.learning_rate");
  if (j.contains("batch_size")) hp.batch_size = static_cast<int>(detail::as_int(j["batch_size"], "multi.batch_size"));
  if (j.contains("max_epochs")) hp.max_epochs = static_cast<int>(detail::as_int(j["max_epochs"], "multi.max_epochs"));
}

inline RunConfig parse_config(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"seed", "out", "dialogues", "annotations", "embeddings", "labels", "split",
                          "erc", "efr", "multi"},
                         "config");
  RunConfig cfg;
  if (j.contains("seed")) {
    const auto v = detail::as_int(j["seed"], "seed");
    if (v < 0) throw std::invalid_argument("seed must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(v);
  }
  if (j.contains("out")) cfg.out_dir = detail::as_string(j["out"], "out");
  if (j.contains("dialogues")) cfg.dialogues = detail::as_string(j["dialogues"], "dialogues");
  if (j.contains("annotations")) cfg.annotations = detail::as_string(j["annotations"], "annotations");
  if (j.contains("embeddings")) cfg.embeddings = detail::as_string(j["embeddings"], "embeddings");
  if (j.contains("labels")) cfg.labels = detail::as_string(j["labels"], "labels");
  if (j.contains("split")) {
    const std::string s = detail::as_string(j["split"], "split");
    const auto sp = parse_split(s);
    if (!sp) throw std::invalid_argument("split: unknown value '" + s + "'");
    cfg.split = *sp;
  }
  if (j.contains("erc")) parse_erc_block(j["erc"], cfg.erc);
  if (j.contains("efr")) parse_efr_block(j["efr"], cfg.efr);
  if (j.contains("multi")) parse_multi_block(j["multi"], cfg.multi);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_config(j);
}

// Environment overrides mirror the flag set; keys absent from `env` leave the
// config untouched. Passed as a map rather than read from the process
// environment so it can be exercised hermetically.
inline void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  if (auto it = env.find("CONVFLIP_SEED"); it != env.end())
    cfg.seed = detail::parse_config_u64(it->second, "CONVFLIP_SEED");
  if (auto it = env.find("CONVFLIP_OUT"); it != env.end()) cfg.out_dir = it->second;
  if (auto it = env.find("CONVFLIP_SPLIT"); it != env.end()) {
    const auto sp = parse_split(it->second);
    if (!sp) throw std::invalid_argument("CONVFLIP_SPLIT: unknown value '" + it->second + "'");
    cfg.split = *sp;
  }
  if (auto it = env.find("CONVFLIP_WINDOW"); it != env.end()) {
    const int w = detail::parse_config_int(it->second, "CONVFLIP_WINDOW");
    cfg.efr.window = w;
    cfg.multi.window = w;
  }
  if (auto it = env.find("CONVFLIP_HOPS"); it != env.end())
    cfg.erc.hops = detail::parse_config_int(it->second, "CONVFLIP_HOPS");
  if (auto it = env.find("CONVFLIP_LAYERS"); it != env.end())
    cfg.efr.encoder_layers = detail::parse_config_int(it->second, "CONVFLIP_LAYERS");
  if (auto it = env.find("CONVFLIP_CONDITIONING"); it != env.end()) {
    const auto c = parse_conditioning(it->second);
    if (!c) throw std::invalid_argument("CONVFLIP_CONDITIONING: unknown value '" + it->second + "'");
    cfg.efr.conditioning = *c;
  }
  if (auto it = env.find("CONVFLIP_LABEL_SOURCE"); it != env.end()) {
    const auto ls = parse_label_source(it->second);
    if (!ls) throw std::invalid_argument("CONVFLIP_LABEL_SOURCE: unknown value '" + it->second + "'");
    cfg.efr.label_source = *ls;
  }
}

// The fully resolved document, written next to run outputs so a run can be
// reproduced from its artifacts alone.
inline nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["dialogues"] = cfg.dialogues;
  j["annotations"] = cfg.annotations;
  j["embeddings"] = cfg.embeddings;
  j["labels"] = cfg.labels;
  j["split"] = std::string(to_string(cfg.split));
  j["erc"] = {{"input_width", cfg.erc.input_width},
              {"hidden_width", cfg.erc.hidden_width},
              {"hops", cfg.erc.hops},
              {"max_seq_len", cfg.erc.max_seq_len},
              {"max_speaker_roles", cfg.erc.max_speaker_roles},
              {"dropout", cfg.erc.dropout},
              {"learning_rate", cfg.erc.learning_rate},
              {"batch_size", cfg.erc.batch_size},
              {"max_epochs", cfg.erc.max_epochs},
              {"label_infusion", cfg.erc.label_infusion},
              {"disable_global_context", cfg.erc.disable_global_context},
              {"unshared_hop_weights", cfg.erc.unshared_hop_weights}};
  j["efr"] = {{"model_width", cfg.efr.model_width},
              {"encoder_layers", cfg.efr.encoder_layers},
              {"attention_heads", cfg.efr.attention_heads},
              {"feedforward_width", cfg.efr.feedforward_width},
              {"dropout", cfg.efr.dropout},
              {"learning_rate", cfg.efr.learning_rate},
              {"batch_size", cfg.efr.batch_size},
              {"max_epochs", cfg.efr.max_epochs},
              {"window", cfg.efr.window},
              {"conditioning", std::string(to_string(cfg.efr.conditioning))},
              {"label_source", std::string(to_string(cfg.efr.label_source))}};
  j["multi"] = {{"window", cfg.multi.window},
                {"erc_loss_weight", cfg.multi.erc_loss_weight},
                {"efr_loss_weight", cfg.multi.efr_loss_weight},
                {"learning_rate", cfg.multi.learning_rate},
                {"batch_size", cfg.multi.batch_size},
                {"max_epochs", cfg.multi.max_epochs}};
  return j;
}

}  // namespace convflip
