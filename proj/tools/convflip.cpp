#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convflip/checkpoint.hpp"
#include "convflip/config.hpp"
#include "convflip/corpus.hpp"
#include "convflip/efr_tx.hpp"
#include "convflip/instances.hpp"
#include "convflip/metrics.hpp"
#include "convflip/multitask.hpp"

namespace fs = std::filesystem;
using convflip::RunConfig;
using json = nlohmann::ordered_json;

namespace {

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> env;
  for (const char* key : {"CONVFLIP_SEED", "CONVFLIP_OUT", "CONVFLIP_SPLIT", "CONVFLIP_WINDOW",
                          "CONVFLIP_HOPS", "CONVFLIP_LAYERS", "CONVFLIP_CONDITIONING",
                          "CONVFLIP_LABEL_SOURCE"})
    if (const char* v = std::getenv(key)) env[key] = v;
  return env;
}

// Flag storage for one subcommand; option pointers distinguish "explicitly
// set" from "default" so flags only override what the user actually passed.
struct Common {
  std::string config_path, out, split, conditioning, label_source;
  std::string dialogues, annotations, embeddings, labels;
  std::uint64_t seed = 0;
  int window = 0, hops = 0, layers = 0;
  CLI::Option *o_config = nullptr, *o_out = nullptr, *o_split = nullptr, *o_seed = nullptr,
              *o_window = nullptr, *o_hops = nullptr, *o_layers = nullptr,
              *o_conditioning = nullptr, *o_label_source = nullptr, *o_dialogues = nullptr,
              *o_annotations = nullptr, *o_embeddings = nullptr, *o_labels = nullptr;

  void attach(CLI::App* cmd) {
    o_config = cmd->add_option("--config", config_path, "JSON configuration file");
    o_seed = cmd->add_option("--seed", seed, "master seed for initialization and training");
    o_out = cmd->add_option("--out", out, "output directory");
    o_split = cmd->add_option("--split", split, "corpus split: train|dev|test");
    o_window = cmd->add_option("--window", window, "context window for trigger instances");
    o_hops = cmd->add_option("--hops", hops, "memory hops of the emotion model");
    o_layers = cmd->add_option("--layers", layers, "encoder layers of the trigger model");
    o_conditioning =
        cmd->add_option("--conditioning", conditioning, "emotion conditioning: none|early|late");
    o_label_source =
        cmd->add_option("--label-source", label_source, "conditioning labels: gold|predicted|absent");
    o_dialogues = cmd->add_option("--dialogues", dialogues, "corpus file (.csv or .jsonl)");
    o_annotations = cmd->add_option("--annotations", annotations, "trigger annotation JSONL");
    o_embeddings = cmd->add_option("--embeddings", embeddings, "utterance vector JSONL");
    o_labels = cmd->add_option("--labels", labels, "emotion label JSONL (predicted conditioning)");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (o_config->count()) cfg = convflip::load_config(config_path);
    convflip::apply_env_overrides(cfg, process_env());
    if (o_seed->count()) cfg.seed = seed;
    if (o_out->count()) cfg.out_dir = out;
    if (o_split->count()) {
      const auto sp = convflip::parse_split(split);
      if (!sp) throw std::invalid_argument("--split: unknown value '" + split + "'");
      cfg.split = *sp;
    }
    if (o_dialogues->count()) cfg.dialogues = dialogues;
    if (o_annotations->count()) cfg.annotations = annotations;
    if (o_embeddings->count()) cfg.embeddings = embeddings;
    if (o_labels->count()) cfg.labels = labels;
    if (o_window->count()) {
      cfg.efr.window = window;
      cfg.multi.window = window;
    }
    if (o_hops->count()) cfg.erc.hops = hops;
    if (o_layers->count()) cfg.efr.encoder_layers = layers;
    if (o_conditioning->count()) {
      const auto c = convflip::parse_conditioning(conditioning);
      if (!c) throw std::invalid_argument("--conditioning: unknown value '" + conditioning + "'");
      cfg.efr.conditioning = *c;
    }
    if (o_label_source->count()) {
      const auto ls = convflip::parse_label_source(label_source);
      if (!ls) throw std::invalid_argument("--label-source: unknown value '" + label_source + "'");
      cfg.efr.label_source = *ls;
    }
    cfg.finalize();
    cfg.validate();
    return cfg;
  }
};

std::ofstream open_out(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

convflip::Corpus load_corpus(const RunConfig& cfg) {
  if (cfg.dialogues.empty())
    throw std::invalid_argument("a corpus file is required (--dialogues or config 'dialogues')");
  return convflip::parse_corpus(cfg.dialogues, cfg.annotations, cfg.split);
}

convflip::EmbeddingStore load_embeddings(const RunConfig& cfg) {
  if (cfg.embeddings.empty()) return convflip::EmbeddingStore();
  return convflip::load_store(cfg.embeddings);
}

// {"dialogue_id", "utterance_index", "emotion"} JSONL -> one dense label
// vector per dialogue; every utterance must be covered exactly once.
std::map<std::string, std::vector<int>> read_label_file(const std::string& path,
                                                        const convflip::Corpus& corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open label file " + path);
  std::map<std::string, std::vector<int>> labels;
  for (const auto& d : corpus.dialogues)
    labels[d.id].assign(static_cast<std::size_t>(d.size()), -1);

  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(ln) + ": ";
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw std::invalid_argument(where + "bad JSON: " + e.what());
    }
    for (const char* key : {"dialogue_id", "utterance_index", "emotion"})
      if (!rec.contains(key)) throw std::invalid_argument(where + "missing field '" + key + "'");
    const std::string id = rec["dialogue_id"].get<std::string>();
    auto it = labels.find(id);
    if (it == labels.end()) throw std::invalid_argument(where + "unknown dialogue '" + id + "'");
    const int idx = rec["utterance_index"].get<int>();
    if (idx < 1 || idx > static_cast<int>(it->second.size()))
      throw std::invalid_argument(where + "utterance index " + std::to_string(idx) +
                                  " out of range for dialogue '" + id + "'");
    const auto emo = convflip::parse_emotion(rec["emotion"].get<std::string>());
    if (!emo)
      throw std::invalid_argument(where + "unknown emotion '" +
                                  rec["emotion"].get<std::string>() + "'");
    auto& slot = it->second[static_cast<std::size_t>(idx - 1)];
    if (slot >= 0)
      throw std::invalid_argument(where + "duplicate label for (" + id + ", " +
                                  std::to_string(idx) + ")");
    slot = convflip::index_of(*emo);
  }
  for (const auto& [id, vec] : labels)
    for (std::size_t i = 0; i < vec.size(); ++i)
      if (vec[i] < 0)
        throw std::invalid_argument("label file " + path + ": no label for (" + id + ", " +
                                    std::to_string(i + 1) + ")");
  return labels;
}

void write_train_log(std::ostream& out, const std::vector<convflip::EpochLog>& logs) {
  for (const auto& e : logs) {
    json rec{{"epoch", e.epoch}, {"loss", e.loss}, {"train_f1", e.train_f1}};
    if (e.train_trigger_f1 >= 0.0) rec["train_trigger_f1"] = e.train_trigger_f1;
    out << rec.dump() << "\n";
  }
}

json checkpoint_meta(const RunConfig& cfg, const std::string& task) {
  return json{{"task", task}, {"config", convflip::config_to_json(cfg)}};
}

void emit(const json& summary) { std::cout << summary.dump() << "\n"; }

// labels for conditioning the trigger model, if any are needed
const std::map<std::string, std::vector<int>>* resolve_override(
    const RunConfig& cfg, const convflip::Corpus& corpus,
    std::map<std::string, std::vector<int>>& storage) {
  if (cfg.efr.label_source != convflip::LabelSource::kPredicted) return nullptr;
  if (cfg.labels.empty())
    throw std::invalid_argument("label_source 'predicted' requires a label file (--labels)");
  storage = read_label_file(cfg.labels, corpus);
  return &storage;
}

int cmd_ingest(const RunConfig& cfg) {
  const convflip::Corpus corpus = load_corpus(cfg);
  {
    auto out = open_out(cfg, "dialogues.jsonl");
    convflip::write_dialogues_jsonl(corpus, out);
  }
  {
    auto out = open_out(cfg, "annotations.jsonl");
    convflip::write_annotations_jsonl(corpus, out);
  }
  long utterances = 0, targets = 0;
  for (const auto& d : corpus.dialogues) utterances += d.size();
  for (const auto& [id, anns] : corpus.annotations) targets += static_cast<long>(anns.size());
  const json summary{{"split", std::string(convflip::to_string(cfg.split))},
                     {"dialogues", corpus.dialogues.size()},
                     {"utterances", utterances},
                     {"annotated_targets", targets}};
  open_out(cfg, "ingest.json") << summary.dump(2) << "\n";
  emit(summary);
  return 0;
}

int cmd_stats(const RunConfig& cfg) {
  const convflip::Corpus corpus = load_corpus(cfg);
  const auto summary = convflip::split_summary(corpus);
  const auto matrix = convflip::directionality_matrix(corpus);
  const auto hist = convflip::trigger_distance_histogram(corpus);
  const auto flips_only = convflip::filter_flip_dialogues(corpus);

  json stats{{"summary", convflip::to_json(summary)},
             {"flip_dialogues", flips_only.dialogues.size()},
             {"directionality", convflip::to_json(matrix)},
             {"distance_histogram", convflip::to_json(hist)}};
  open_out(cfg, "stats.json") << stats.dump(2) << "\n";
  {
    auto out = open_out(cfg, "directionality.csv");
    convflip::write_csv(matrix, out);
  }
  {
    auto out = open_out(cfg, "distance_histogram.csv");
    convflip::write_csv(hist, out);
  }
  emit(stats);
  return 0;
}

int cmd_compile(const RunConfig& cfg) {
  const convflip::Corpus corpus = load_corpus(cfg);
  const int window = cfg.efr.window;
  std::vector<convflip::EfrInstance> all;
  long dropped = 0, flip_instances = 0;
  for (const auto& d : corpus.dialogues) {
    static const std::vector<convflip::TriggerAnnotation> kNone;
    auto it = corpus.annotations.find(d.id);
    const auto& anns = it == corpus.annotations.end() ? kNone : it->second;
    auto insts = convflip::compile_instances(d, anns, window);
    dropped += convflip::window_loss_report(insts, anns);
    for (const auto& inst : insts)
      if (inst.has_flip) ++flip_instances;
    all.insert(all.end(), insts.begin(), insts.end());
  }
  {
    auto out = open_out(cfg, "instances.jsonl");
    convflip::write_instances_jsonl(all, out);
  }
  const json summary{{"window", window},
                     {"instances", all.size()},
                     {"flip_instances", flip_instances},
                     {"dropped_triggers", dropped}};
  open_out(cfg, "compile.json") << summary.dump(2) << "\n";
  emit(summary);
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& task) {
  const convflip::Corpus corpus = load_corpus(cfg);
  const convflip::EmbeddingStore store = load_embeddings(cfg);
  std::vector<convflip::EpochLog> logs;

  if (task == "erc") {
    auto examples =
        convflip::make_erc_examples<float>(corpus, store, cfg.erc.max_speaker_roles,
                                           cfg.erc.input_width);
    convflip::ErcModel<float> model(cfg.erc);
    logs = convflip::train_erc(model, examples);
    convflip::save_checkpoint(convflip::make_checkpoint(model.params(), checkpoint_meta(cfg, task)),
                              out_path(cfg, "erc_checkpoint.bin"));
  } else if (task == "efr") {
    std::map<std::string, std::vector<int>> storage;
    const auto* override_labels = resolve_override(cfg, corpus, storage);
    auto examples = convflip::make_efr_examples<float>(corpus, store, cfg.efr.window,
                                                       override_labels, cfg.efr.model_width);
    convflip::EfrModel<float> model(cfg.efr);
    logs = convflip::train_efr(model, examples);
    convflip::save_checkpoint(convflip::make_checkpoint(model.params(), checkpoint_meta(cfg, task)),
                              out_path(cfg, "efr_checkpoint.bin"));
  } else {
    auto examples = convflip::make_multi_examples<float>(
        corpus, store, cfg.multi.erc.max_speaker_roles, cfg.multi.erc.input_width);
    convflip::MultiModel<float> model(cfg.multi);
    logs = convflip::train_multi(model, examples);
    convflip::save_checkpoint(convflip::make_checkpoint(model.params(), checkpoint_meta(cfg, task)),
                              out_path(cfg, "multi_checkpoint.bin"));
  }

  {
    auto out = open_out(cfg, task + "_train_log.jsonl");
    write_train_log(out, logs);
  }
  json summary{{"task", task}, {"epochs", logs.size()}};
  if (!logs.empty()) {
    summary["final_loss"] = logs.back().loss;
    summary["final_train_f1"] = logs.back().train_f1;
    if (logs.back().train_trigger_f1 >= 0.0)
      summary["final_train_trigger_f1"] = logs.back().train_trigger_f1;
  }
  emit(summary);
  return 0;
}

void write_erc_predictions(std::ostream& out, const std::string& dialogue_id,
                           const std::vector<convflip::Emotion>& preds) {
  for (std::size_t i = 0; i < preds.size(); ++i)
    out << json{{"dialogue_id", dialogue_id},
                {"utterance_index", i + 1},
                {"emotion", std::string(convflip::to_string(preds[i]))}}
               .dump()
        << "\n";
}

void write_trigger_predictions(std::ostream& out, const std::string& dialogue_id,
                               const std::vector<convflip::TriggerAnnotation>& anns) {
  for (const auto& ann : anns) {
    json rec{{"dialogue_id", dialogue_id},
             {"target_index", ann.target_index},
             {"trigger_indices", json::array()}};
    for (int k : ann.trigger_indices) rec["trigger_indices"].push_back(k);
    out << rec.dump() << "\n";
  }
}

int cmd_predict(const RunConfig& cfg, const std::string& task, const std::string& checkpoint) {
  if (checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  const convflip::Corpus corpus = load_corpus(cfg);
  const convflip::EmbeddingStore store = load_embeddings(cfg);
  const convflip::Checkpoint ck = convflip::load_checkpoint(checkpoint);
  if (!ck.meta.contains("task") || ck.meta["task"].get<std::string>() != task)
    throw std::invalid_argument("checkpoint was trained for task '" +
                                (ck.meta.contains("task") ? ck.meta["task"].get<std::string>()
                                                          : std::string("?")) +
                                "', requested '" + task + "'");

  long predictions = 0;
  if (task == "erc") {
    convflip::ErcModel<float> model(cfg.erc);
    convflip::apply_checkpoint(ck, model.params());
    auto examples = convflip::make_erc_examples<float>(corpus, store, cfg.erc.max_speaker_roles,
                                                       cfg.erc.input_width);
    auto out = open_out(cfg, "erc_predictions.jsonl");
    for (const auto& ex : examples) {
      const auto preds = model.predict(ex.inputs, ex.roles);
      write_erc_predictions(out, ex.dialogue_id, preds);
      predictions += static_cast<long>(preds.size());
    }
  } else if (task == "efr") {
    convflip::EfrModel<float> model(cfg.efr);
    convflip::apply_checkpoint(ck, model.params());
    std::map<std::string, std::vector<int>> storage;
    const auto* override_labels = resolve_override(cfg, corpus, storage);
    auto out = open_out(cfg, "efr_predictions.jsonl");
    for (const auto& d : corpus.dialogues) {
      const std::vector<int>* labels =
          override_labels ? &override_labels->at(d.id) : nullptr;
      const auto anns = convflip::predict_triggers(model, d, store, labels);
      write_trigger_predictions(out, d.id, anns);
      predictions += static_cast<long>(anns.size());
    }
  } else {
    convflip::MultiModel<float> model(cfg.multi);
    convflip::apply_checkpoint(ck, model.params());
    auto examples = convflip::make_multi_examples<float>(
        corpus, store, cfg.multi.erc.max_speaker_roles, cfg.multi.erc.input_width);
    auto erc_out = open_out(cfg, "erc_predictions.jsonl");
    auto efr_out = open_out(cfg, "efr_predictions.jsonl");
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
      const auto& d = corpus.dialogues[i];
      const auto& ex = examples[i].erc;
      std::vector<convflip::Emotion> emotions;
      const auto probs = model.erc().probabilities(ex.inputs, ex.roles);
      for (int r = 0; r < probs.rows(); ++r)
        emotions.push_back(convflip::emotion_from_index(convflip::argmax_row(probs, r)));
      write_erc_predictions(erc_out, d.id, emotions);
      const auto anns = convflip::predict_triggers_multi(model, d, ex.inputs, ex.roles);
      write_trigger_predictions(efr_out, d.id, anns);
      predictions += static_cast<long>(emotions.size() + anns.size());
    }
  }
  const json summary{{"task", task}, {"dialogues", corpus.dialogues.size()},
                     {"predictions", predictions}};
  emit(summary);
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& task, const std::string& predictions) {
  if (predictions.empty()) throw std::invalid_argument("--predictions is required");
  const convflip::Corpus corpus = load_corpus(cfg);
  convflip::MetricsReport report;

  if (task == "erc") {
    const auto predicted = read_label_file(predictions, corpus);
    std::vector<int> gold, pred;
    for (const auto& d : corpus.dialogues) {
      const auto& labels = predicted.at(d.id);
      for (int i = 0; i < d.size(); ++i) {
        gold.push_back(convflip::index_of(d.utterances[static_cast<std::size_t>(i)].emotion));
        pred.push_back(labels[static_cast<std::size_t>(i)]);
      }
    }
    report = convflip::classification_report(gold, pred, convflip::emotion_class_names());
  } else {
    if (corpus.annotations.empty())
      throw std::invalid_argument("trigger evaluation requires gold annotations (--annotations)");
    const auto predicted = convflip::read_annotations(predictions);
    report = convflip::efr_dialogue_report(corpus.annotations, predicted, cfg.efr.window);
  }

  open_out(cfg, task + "_eval.json") << convflip::to_json(report).dump(2) << "\n";
  {
    auto out = open_out(cfg, task + "_confusion.csv");
    convflip::write_confusion_csv(report, out);
  }
  emit(convflip::to_json(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversational emotion and emotion-flip toolkit"};
  app.require_subcommand(1);

  Common c_ingest, c_stats, c_compile, c_terc, c_tefr, c_tmulti, c_predict, c_eval;
  auto* s_ingest = app.add_subcommand("ingest", "normalize a corpus into canonical JSONL");
  c_ingest.attach(s_ingest);
  auto* s_stats = app.add_subcommand("stats", "split summary, flip directionality, trigger distances");
  c_stats.attach(s_stats);
  auto* s_compile = app.add_subcommand("compile", "windowed trigger-classification instances");
  c_compile.attach(s_compile);
  auto* s_terc = app.add_subcommand("train-erc", "train the emotion model");
  c_terc.attach(s_terc);
  auto* s_tefr = app.add_subcommand("train-efr", "train the trigger model");
  c_tefr.attach(s_tefr);
  auto* s_tmulti = app.add_subcommand("train-multi", "train the joint model");
  c_tmulti.attach(s_tmulti);

  std::string predict_task, predict_checkpoint;
  auto* s_predict = app.add_subcommand("predict", "label a corpus with a trained checkpoint");
  c_predict.attach(s_predict);
  s_predict->add_option("--task", predict_task, "erc|efr|multi")->required();
  s_predict->add_option("--checkpoint", predict_checkpoint, "checkpoint file")->required();

  std::string eval_task, eval_predictions;
  auto* s_eval = app.add_subcommand("eval", "score predictions against gold labels");
  c_eval.attach(s_eval);
  s_eval->add_option("--task", eval_task, "erc|efr")->required();
  s_eval->add_option("--predictions", eval_predictions, "prediction JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s_ingest) return cmd_ingest(c_ingest.resolve());
    if (*s_stats) return cmd_stats(c_stats.resolve());
    if (*s_compile) return cmd_compile(c_compile.resolve());
    if (*s_terc) return cmd_train(c_terc.resolve(), "erc");
    if (*s_tefr) return cmd_train(c_tefr.resolve(), "efr");
    if (*s_tmulti) return cmd_train(c_tmulti.resolve(), "multi");
    if (*s_predict) {
      if (predict_task != "erc" && predict_task != "efr" && predict_task != "multi")
        throw std::invalid_argument("--task: unknown value '" + predict_task + "'");
      return cmd_predict(c_predict.resolve(), predict_task, predict_checkpoint);
    }
    if (*s_eval) {
      if (eval_task != "erc" && eval_task != "efr")
        throw std::invalid_argument("--task: unknown value '" + eval_task + "'");
      return cmd_eval(c_eval.resolve(), eval_task, eval_predictions);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
