// Acceptance harness: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero iff any executed criterion fails. Each criterion is self-contained
// and runs against the bundled fixture corpus; the final criterion activates
// only when CONVFLIP_MELD_DIR points at the real corpus files.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "convflip/config.hpp"
#include "convflip/corpus.hpp"
#include "convflip/efr_tx.hpp"
#include "convflip/instances.hpp"
#include "convflip/metrics.hpp"
#include "convflip/multitask.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace convflip;
using Md = Mat<double>;
using Mf = Mat<float>;

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

Md random_mat(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Md m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

Mf random_matf(int rows, int cols, std::uint64_t seed) {
  return random_mat(rows, cols, seed).cast<float>();
}

int g_failures = 0;

template <typename Fn>
void criterion(int id, const std::string& label, double budget_s, Fn&& body) {
  const auto start = std::chrono::steady_clock::now();
  std::string error;
  try {
    body();
  } catch (const std::exception& e) {
    error = e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (error.empty() && budget_s > 0.0 && elapsed > budget_s)
    error = "exceeded time budget of " + std::to_string(budget_s) + "s";
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(2);
  if (error.empty()) {
    line << "PASS " << id << " " << label << " (" << elapsed << "s)";
  } else {
    line << "FAIL " << id << " " << label << " (" << elapsed << "s): " << error;
    ++g_failures;
  }
  std::cout << line.str() << "\n" << std::flush;
}

// ---- shared loss builders for the gradient criteria -------------------------

double erc_loss(ErcModel<double>& model, const Md& inputs, const std::vector<int>& roles,
                const std::vector<int>& labels, bool accumulate) {
  Tape<double> tp;
  Bind<double> B(tp, model.params());
  auto fwd = model.forward(tp, B, inputs, roles, &labels, nullptr);
  const int logits = stack_rows(tp, fwd.logits);
  const int loss = tp.xent_rows(logits, labels, std::vector<double>(labels.size(), 1.0));
  if (accumulate) {
    tp.backward(loss);
    B.harvest();
  }
  return tp.val(loss)(0, 0);
}

double efr_loss(EfrModel<double>& model, const Md& vectors, const std::vector<int>& labels,
                bool accumulate) {
  Tape<double> tp;
  Bind<double> B(tp, model.params());
  const int logits = model.forward(tp, B, vectors, nullptr, nullptr);
  const int loss = tp.xent_rows(logits, labels, std::vector<double>(labels.size(), 1.0));
  if (accumulate) {
    tp.backward(loss);
    B.harvest();
  }
  return tp.val(loss)(0, 0);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CONVFLIP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// ---- criterion bodies --------------------------------------------------------

void golden_instance_rows() {
  const Corpus corpus = fixtures::fig_corpus();
  auto labels_at = [&](const std::string& id, int target) {
    const Dialogue* d = corpus.find(id);
    check(d != nullptr, "fixture dialogue " + id + " missing");
    const auto insts = compile_instances(*d, corpus.annotations.at(id), 8);
    for (const auto& inst : insts)
      if (inst.target_index == target) return inst.labels;
    throw std::runtime_error("no instance for " + id + " target " + std::to_string(target));
  };
  const std::vector<std::tuple<std::string, int, std::vector<int>>> golden{
      {"F1", 3, {0, 0, 1}},
      {"F1", 4, {0, 0, 1, 0}},
      {"F1", 6, {0, 0, 0, 0, 0, 1}},
      {"F1", 7, {0, 0, 0, 0, 0, 1, 0}},
      {"F1", 8, {0, 0, 0, 0, 0, 0, 1, 0}},
      {"F2", 8, {0, 0, 0, 0, 1, 0, 1, 0}},
      {"F3", 4, {0, 0, 1, 0}},
      {"F3", 5, {0, 0, 0, 1, 0}},
      {"F4", 3, {0, 0, 1}},
  };
  for (const auto& [id, target, expect] : golden) {
    const auto got = labels_at(id, target);
    check(got == expect, id + " target " + std::to_string(target) + ": context labels differ");
  }
}

void metric_oracle() {
  const ClassMetrics direct = metrics_from_counts(627, 590, 525);
  check(std::abs(direct.f1 - 0.5293) <= 0.0005,
        "trigger F1 from (627,590,525) is " + std::to_string(direct.f1));

  std::vector<int> gold, pred;
  auto expand = [&](int g, int p, long n) {
    for (long i = 0; i < n; ++i) {
      gold.push_back(g);
      pred.push_back(p);
    }
  };
  expand(0, 0, 2913);
  expand(0, 1, 590);
  expand(1, 0, 525);
  expand(1, 1, 627);
  const MetricsReport rep = classification_report(gold, pred, {"non-trigger", "trigger"});
  check(rep.trigger_f1.has_value(), "binary report lacks a trigger score");
  check(std::abs(*rep.trigger_f1 - 0.5293) <= 0.0005,
        "report trigger F1 is " + std::to_string(*rep.trigger_f1));

  const ClassMetrics cascade = metrics_from_counts(926, 1359, 226);
  check(std::abs(cascade.f1 - 0.5388) <= 0.0005,
        "trigger F1 from (926,1359,226) is " + std::to_string(cascade.f1));
}

void statistics_oracle() {
  const Corpus corpus = fixtures::fig_corpus();
  std::ifstream in(fixtures::manifest_path());
  check(static_cast<bool>(in), "cannot open fixture manifest");
  const json manifest = json::parse(in);

  check(to_json(split_summary(corpus)) == manifest["summary"], "split summary differs");
  check(to_json(directionality_matrix(corpus)) == manifest["directionality"],
        "directionality matrix differs");
  check(to_json(trigger_distance_histogram(corpus)) == manifest["distance_histogram"],
        "distance histogram differs");
  check(static_cast<long>(filter_flip_dialogues(corpus).dialogues.size()) ==
            manifest["flip_dialogues"].get<long>(),
        "flip dialogue count differs");

  Corpus single;
  single.split = corpus.split;
  single.dialogues.push_back(*corpus.find("F1"));
  const DirectionalityMatrix m = directionality_matrix(single);
  const int n = index_of(Emotion::kNeutral), j = index_of(Emotion::kJoy),
            s = index_of(Emotion::kSadness);
  check(m.counts[n][j] == 2, "neutral->joy expected 2");
  check(m.counts[j][s] == 2, "joy->sadness expected 2");
  check(m.counts[s][n] == 1, "sadness->neutral expected 1");
  check(m.total() == 5, "single-dialogue flips expected 5");
}

void gradient_checks() {
  {
    ErcHyperParams hp;
    hp.input_width = 6;
    hp.hidden_width = 8;
    hp.hops = 2;
    hp.max_speaker_roles = 2;
    hp.dropout = 0.0;
    hp.seed = 21;
    ErcModel<double> model(hp);
    const Md inputs = random_mat(3, hp.input_width, 101);
    const std::vector<int> roles{0, 1, 0};
    const std::vector<int> labels{1, 5, 3};
    model.params().zero_grads();
    erc_loss(model, inputs, roles, labels, true);
    const auto worst = gradcheck::compare_params(
        model.params(), [&] { return erc_loss(model, inputs, roles, labels, false); });
    check(worst.rel < 1e-4, "emotion model worst rel err " + std::to_string(worst.rel) + " at " +
                                worst.name);
  }
  {
    EfrHyperParams hp;
    hp.model_width = 8;
    hp.encoder_layers = 1;
    hp.attention_heads = 1;
    hp.feedforward_width = 16;
    hp.dropout = 0.0;
    hp.window = 5;
    hp.seed = 22;
    EfrModel<double> model(hp);
    const Md vectors = random_mat(3, hp.model_width, 303);
    const std::vector<int> labels{0, 1, 0};
    model.params().zero_grads();
    efr_loss(model, vectors, labels, true);
    const auto worst = gradcheck::compare_params(
        model.params(), [&] { return efr_loss(model, vectors, labels, false); });
    check(worst.rel < 1e-4, "trigger model worst rel err " + std::to_string(worst.rel) + " at " +
                                worst.name);
  }
}

void structural_invariants() {
  const Corpus corpus = fixtures::fig_corpus();
  const EmbeddingStore store;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    // Masked attention: weights cover exactly the prefix and sum to one;
    // slots past the prefix pass through bitwise.
    {
      Tape<double> tp;
      const int slots = tp.constant(random_mat(5, 4, mix_seed(seed, "slots")));
      const int query = tp.constant(random_mat(1, 4, mix_seed(seed, "query")));
      const int Wq = tp.constant(random_mat(4, 4, mix_seed(seed, "Wq")));
      const int Wk = tp.constant(random_mat(4, 4, mix_seed(seed, "Wk")));
      const int prefix = 1 + static_cast<int>(seed % 5);
      const auto [beta, out] = masked_attention(tp, slots, query, prefix, Wq, Wk);
      check(tp.val(beta).rows() == 1 && tp.val(beta).cols() == prefix,
            "attention weights must cover exactly the prefix");
      check(std::abs(tp.val(beta).sum() - 1.0) <= 1e-6, "attention weights must sum to 1");
      check(tp.val(beta).minCoeff() >= 0.0, "attention weights must be non-negative");
      for (int r = prefix; r < 5; ++r)
        check((tp.val(out).row(r) - tp.val(slots).row(r)).cwiseAbs().maxCoeff() == 0.0,
              "rows past the prefix must pass through unchanged");
    }

    // Emotion model: probability rows normalize; a perturbation of the last
    // utterance leaves every earlier row bit-identical.
    {
      ErcHyperParams hp;
      hp.input_width = 3;
      hp.hidden_width = seed % 2 ? 4 : 6;
      hp.hops = 1 + static_cast<int>(seed % 2);
      hp.max_speaker_roles = 2;
      hp.dropout = 0.0;
      hp.seed = seed;
      ErcModel<float> model(hp);
      const Mf inputs = random_matf(4, 3, mix_seed(seed, "erc.in"));
      const std::vector<int> roles{0, 1, 0, 1};
      const Mf probs = model.probabilities(inputs, roles);
      for (int r = 0; r < probs.rows(); ++r)
        check(std::abs(probs.row(r).sum() - 1.0f) <= 1e-6f, "probability row must sum to 1");
      Mf bumped = inputs;
      bumped.row(3) = random_matf(1, 3, mix_seed(seed, "erc.bump"));
      const Mf probs2 = model.probabilities(bumped, roles);
      check((probs.topRows(3) - probs2.topRows(3)).cwiseAbs().maxCoeff() == 0.0f,
            "future input must not reach earlier predictions");
    }

    // Trigger model: flip-masked batches produce exactly zero gradient, rows
    // normalize, and predictions stay inside the window on flip targets only.
    {
      EfrHyperParams hp;
      hp.model_width = 4;
      hp.encoder_layers = 1;
      hp.attention_heads = 2;
      hp.feedforward_width = 8;
      hp.dropout = 0.0;
      hp.window = 5;
      hp.seed = seed;
      EfrModel<float> model(hp);
      const int k = 1 + static_cast<int>(seed % 5);
      const Mf vectors = random_matf(k, 4, mix_seed(seed, "efr.in"));

      const Mf probs = model.probabilities(vectors, nullptr);
      for (int r = 0; r < probs.rows(); ++r)
        check(std::abs(probs.row(r).sum() - 1.0f) <= 1e-6f, "trigger row must sum to 1");

      model.params().zero_grads();
      Tape<float> tp;
      Bind<float> B(tp, model.params());
      const int logits = model.forward(tp, B, vectors, nullptr, nullptr);
      const int loss = tp.xent_rows(logits, std::vector<int>(static_cast<std::size_t>(k), 0),
                                    std::vector<float>(static_cast<std::size_t>(k), 0.0f));
      tp.backward(loss);
      B.harvest();
      for (const auto& e : model.params().entries())
        check(e.grad.cwiseAbs().maxCoeff() == 0.0f, "masked batch must leave zero gradient");

      if (seed % 10 == 0) {  // containment is slower; sample the seeds
        for (const auto& d : corpus.dialogues) {
          std::set<int> flip_targets;
          for (const auto& f : detect_flips(d)) flip_targets.insert(f.target_index);
          const auto preds = predict_triggers(model, d, store, nullptr);
          check(preds.size() == flip_targets.size(), "one prediction per flip target");
          for (const auto& ann : preds) {
            check(flip_targets.count(ann.target_index) == 1, "prediction on a non-flip target");
            for (int t : ann.trigger_indices)
              check(t >= std::max(1, ann.target_index - hp.window + 1) && t <= ann.target_index,
                    "predicted trigger escapes the window");
          }
        }
      }
    }
  }
}

void overfit_capability() {
  const Corpus corpus = parse_corpus(fixtures::overfit_corpus_path(),
                                     fixtures::overfit_annotations_path(), Split::kTrain);
  const EmbeddingStore store;

  ErcHyperParams erc_hp;
  erc_hp.input_width = 16;
  erc_hp.hidden_width = 16;
  erc_hp.hops = 2;
  erc_hp.max_speaker_roles = 2;
  erc_hp.dropout = 0.0;
  erc_hp.learning_rate = 3e-3;
  erc_hp.batch_size = 5;
  erc_hp.max_epochs = 300;
  erc_hp.seed = 1;
  {
    ErcModel<float> model(erc_hp);
    auto data = make_erc_examples<float>(corpus, store, erc_hp.max_speaker_roles,
                                         erc_hp.input_width);
    const auto logs = train_erc(model, data);
    double best = 0.0;
    for (const auto& e : logs) best = std::max(best, e.train_f1);
    check(best >= 0.95, "emotion training peaked at weighted F1 " + std::to_string(best));
  }
  {
    EfrHyperParams hp;
    hp.model_width = 16;
    hp.encoder_layers = 1;
    hp.attention_heads = 2;
    hp.feedforward_width = 32;
    hp.dropout = 0.0;
    hp.learning_rate = 3e-3;
    hp.batch_size = 4;
    hp.max_epochs = 300;
    hp.window = 5;
    hp.seed = 1;
    EfrModel<float> model(hp);
    auto data = make_efr_examples<float>(corpus, store, hp.window, nullptr, hp.model_width);
    const auto logs = train_efr(model, data);
    double best = 0.0;
    for (const auto& e : logs) best = std::max(best, e.train_trigger_f1);
    check(best >= 0.95, "trigger training peaked at F1 " + std::to_string(best));
  }
  {
    MultiHyperParams hp;
    hp.erc = erc_hp;
    hp.window = 5;
    hp.learning_rate = 2e-3;
    hp.batch_size = 5;
    hp.max_epochs = 300;
    hp.seed = 1;
    MultiModel<float> model(hp);
    auto data = make_multi_examples<float>(corpus, store, hp.erc.max_speaker_roles,
                                           hp.erc.input_width);
    const auto logs = train_multi(model, data);
    double best_e = 0.0, best_t = 0.0;
    for (const auto& e : logs) {
      best_e = std::max(best_e, e.train_f1);
      best_t = std::max(best_t, e.train_trigger_f1);
    }
    check(best_e >= 0.90 && best_t >= 0.90,
          "joint training peaked at " + std::to_string(best_e) + "/" + std::to_string(best_t));
  }
}

void hyperparameter_harness() {
  const Corpus corpus = fixtures::fig_corpus();
  const EmbeddingStore store;

  std::vector<MetricsReport> hop_reports;
  for (int hops = 1; hops <= 5; ++hops) {
    ErcHyperParams hp;
    hp.input_width = 8;
    hp.hidden_width = 8;
    hp.hops = hops;
    hp.max_speaker_roles = 2;
    hp.dropout = 0.2;
    hp.learning_rate = 1e-3;
    hp.batch_size = 2;
    hp.max_epochs = 1;
    hp.seed = 11;
    ErcModel<float> model(hp);
    auto data = make_erc_examples<float>(corpus, store, hp.max_speaker_roles, hp.input_width);
    train_erc(model, data);
    std::vector<int> gold, pred;
    for (const auto& ex : data) {
      const auto emotions = model.predict(ex.inputs, ex.roles);
      for (std::size_t i = 0; i < emotions.size(); ++i) {
        gold.push_back(ex.labels[i]);
        pred.push_back(index_of(emotions[i]));
      }
    }
    hop_reports.push_back(classification_report(gold, pred, emotion_class_names()));
  }
  check(hop_reports.size() == 5, "expected one emotion report per hop setting");
  for (const auto& rep : hop_reports) {
    check(rep.samples == 24, "each hop report must cover the fixture utterances");
    check(rep.classes.size() == 7 && rep.confusion.size() == 7, "emotion report shape");
    check(rep.weighted_f1 >= 0.0 && rep.weighted_f1 <= 1.0, "weighted F1 out of range");
  }

  std::vector<MetricsReport> layer_reports;
  for (int layers = 1; layers <= 8; ++layers) {
    EfrHyperParams hp;
    hp.model_width = 8;
    hp.encoder_layers = layers;
    hp.attention_heads = 2;
    hp.feedforward_width = 16;
    hp.dropout = 0.1;
    hp.learning_rate = 1e-3;
    hp.batch_size = 4;
    hp.max_epochs = 1;
    hp.window = 5;
    hp.seed = 13;
    EfrModel<float> model(hp);
    auto data = make_efr_examples<float>(corpus, store, hp.window, nullptr, hp.model_width);
    train_efr(model, data);
    std::map<std::string, std::vector<TriggerAnnotation>> predicted;
    for (const auto& d : corpus.dialogues)
      predicted[d.id] = predict_triggers(model, d, store, nullptr);
    layer_reports.push_back(efr_dialogue_report(corpus.annotations, predicted, hp.window));
  }
  check(layer_reports.size() == 8, "expected one trigger report per layer setting");
  for (const auto& rep : layer_reports) {
    check(rep.trigger_f1.has_value(), "trigger report lacks the positive-class score");
    check(*rep.trigger_f1 >= 0.0 && *rep.trigger_f1 <= 1.0, "trigger F1 out of range");
    check(rep.samples > 0, "trigger report is empty");
  }
}

void determinism() {
  fixtures::TempDir tmp("acceptance_determinism");
  const std::string cfg = tmp.write("run.json", R"({
    "seed": 5,
    "dialogues": ")" + fixtures::fig_corpus_path() + R"(",
    "annotations": ")" + fixtures::fig_annotations_path() + R"(",
    "erc": {"input_width": 8, "hidden_width": 4, "hops": 1, "max_speaker_roles": 2,
            "dropout": 0.2, "learning_rate": 0.001, "batch_size": 2, "max_epochs": 2}
  })");
  const std::string out = (tmp.path / "run").string();

  auto pipeline = [&]() -> std::map<std::string, std::string> {
    check(run_cli("train-erc --config " + cfg + " --out " + out) == 0, "train-erc failed");
    check(run_cli("predict --task erc --checkpoint " + out + "/erc_checkpoint.bin --config " +
                  cfg + " --out " + out) == 0,
          "predict failed");
    check(run_cli("eval --task erc --predictions " + out + "/erc_predictions.jsonl --config " +
                  cfg + " --out " + out) == 0,
          "eval failed");
    check(run_cli("stats --config " + cfg + " --out " + out) == 0, "stats failed");
    std::map<std::string, std::string> bytes;
    for (const char* name : {"erc_checkpoint.bin", "erc_train_log.jsonl",
                             "erc_predictions.jsonl", "erc_eval.json", "stats.json"})
      bytes[name] = fixtures::slurp(out + "/" + std::string(name));
    return bytes;
  };
  const auto first = pipeline();
  const auto second = pipeline();
  for (const auto& [name, content] : first) {
    check(!content.empty(), name + " is empty");
    check(second.at(name) == content, name + " differs between identical runs");
  }
}

void real_corpus_tables(const std::string& dir) {
  struct Expected {
    const char* name;
    Split split;
    long dialogues, utterances, flips, triggers;
    std::array<long, kNumEmotions> per_emotion;
  };
  const std::vector<Expected> expected{
      {"train", Split::kTrain, 834, 8130, 4001, 6740, {225, 1466, 1021, 911, 229, 3702, 576}},
      {"dev", Split::kDev, 95, 977, 427, 495, {20, 156, 144, 126, 39, 395, 97}},
      {"test", Split::kTest, 232, 2061, 1002, 1152, {61, 325, 238, 283, 42, 943, 169}},
  };
  const std::array<std::array<long, 7>, 7> table2{{{0, 24, 30, 47, 6, 76, 13},
                                                   {34, 0, 169, 86, 42, 665, 81},
                                                   {39, 186, 0, 137, 32, 400, 70},
                                                   {37, 96, 104, 0, 20, 318, 99},
                                                   {7, 20, 23, 45, 0, 87, 27},
                                                   {84, 616, 487, 370, 103, 0, 257},
                                                   {17, 78, 60, 72, 28, 238, 0}}};

  long total_dialogues = 0;
  DirectionalityMatrix combined;
  for (const auto& exp : expected) {
    const std::string base = dir + "/" + exp.name;
    std::string corpus_file = base + ".csv";
    if (!std::filesystem::exists(corpus_file)) corpus_file = base + ".jsonl";
    check(std::filesystem::exists(corpus_file), "missing " + base + ".csv (or .jsonl)");
    const std::string ann_file = base + "_annotations.jsonl";
    check(std::filesystem::exists(ann_file), "missing " + ann_file);

    const Corpus corpus = parse_corpus(corpus_file, ann_file, exp.split);
    const Corpus flips = filter_flip_dialogues(corpus);
    total_dialogues += static_cast<long>(flips.dialogues.size());
    check(static_cast<long>(flips.dialogues.size()) == exp.dialogues,
          std::string(exp.name) + ": flip dialogues " + std::to_string(flips.dialogues.size()) +
              ", expected " + std::to_string(exp.dialogues));

    const SplitSummary s = split_summary(flips);
    check(s.utterances == exp.utterances, std::string(exp.name) + ": utterance total " +
                                              std::to_string(s.utterances));
    check(s.per_emotion == exp.per_emotion, std::string(exp.name) + ": per-emotion counts differ");
    check(s.flips == exp.flips, std::string(exp.name) + ": flips " + std::to_string(s.flips));
    check(s.triggers == exp.triggers,
          std::string(exp.name) + ": triggers " + std::to_string(s.triggers));

    const DirectionalityMatrix m = directionality_matrix(flips);
    for (int r = 0; r < kNumEmotions; ++r)
      for (int c = 0; c < kNumEmotions; ++c) combined.counts[r][c] += m.counts[r][c];
  }
  check(total_dialogues == 1161, "total flip dialogues " + std::to_string(total_dialogues));
  for (int r = 0; r < kNumEmotions; ++r)
    for (int c = 0; c < kNumEmotions; ++c)
      check(combined.counts[r][c] == table2[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
            "directionality (" + std::string(kEmotionNames[static_cast<std::size_t>(r)]) + " -> " +
                std::string(kEmotionNames[static_cast<std::size_t>(c)]) + ") is " +
                std::to_string(combined.counts[r][c]));
  check(combined.total() == 5430, "combined flip total " + std::to_string(combined.total()));
}

}  // namespace

int main() {
  criterion(1, "golden context/label rows at window 8", 1.0, golden_instance_rows);
  criterion(2, "trigger F1 oracle on published confusion counts", 1.0, metric_oracle);
  criterion(3, "fixture statistics equal the hand-derived manifest", 1.0, statistics_oracle);
  criterion(4, "analytic gradients match finite differences", 60.0, gradient_checks);
  criterion(5, "structural invariants across 100 seeds", 120.0, structural_invariants);
  criterion(6, "overfit capability on the synthetic corpus", 600.0, overfit_capability);
  criterion(7, "hops and encoder-layer sweeps emit one report each", 0.0, hyperparameter_harness);
  criterion(8, "byte-identical artifacts across identical runs", 0.0, determinism);

  if (const char* dir = std::getenv("CONVFLIP_MELD_DIR")) {
    criterion(9, "real-corpus statistics tables", 30.0, [&] { real_corpus_tables(dir); });
  } else {
    std::cout << "SKIP 9 real-corpus statistics tables (CONVFLIP_MELD_DIR not set)\n";
  }
  return g_failures == 0 ? 0 : 1;
}
