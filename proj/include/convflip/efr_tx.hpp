#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "convflip/corpus.hpp"
#include "convflip/embedding.hpp"
#include "convflip/erc_mmn.hpp"
#include "convflip/instances.hpp"
#include "convflip/metrics.hpp"
#include "convflip/nn.hpp"

namespace convflip {

enum class Conditioning { kNone, kEarly, kLate };
enum class LabelSource { kGold, kPredicted, kAbsent };

inline std::string_view to_string(Conditioning c) {
  switch (c) {
    case Conditioning::kNone: return "none";
    case Conditioning::kEarly: return "early";
    default: return "late";
  }
}

inline std::optional<Conditioning> parse_conditioning(std::string_view s) {
  if (s == "none") return Conditioning::kNone;
  if (s == "early") return Conditioning::kEarly;
  if (s == "late") return Conditioning::kLate;
  return std::nullopt;
}

inline std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::kGold: return "gold";
    case LabelSource::kPredicted: return "predicted";
    default: return "absent";
  }
}

inline std::optional<LabelSource> parse_label_source(std::string_view s) {
  if (s == "gold") return LabelSource::kGold;
  if (s == "predicted") return LabelSource::kPredicted;
  if (s == "absent") return LabelSource::kAbsent;
  return std::nullopt;
}

struct EfrHyperParams {
  int model_width = 768;
  int encoder_layers = 6;
  int attention_heads = 8;
  int feedforward_width = 2048;
  double dropout = 0.2;
  double learning_rate = 5e-8;  // raised to 5e-7 under the true-label cascade
  int batch_size = 128;
  int max_epochs = 1000;
  int window = 5;
  Conditioning conditioning = Conditioning::kNone;
  LabelSource label_source = LabelSource::kAbsent;
  std::uint64_t seed = 1;

  void check() const {
    if (model_width <= 0) throw std::invalid_argument("model_width must be positive");
    if (attention_heads < 1 || model_width % attention_heads != 0)
      throw std::invalid_argument("model_width must be divisible by attention_heads");
    if (encoder_layers < 1) throw std::invalid_argument("encoder_layers must be >= 1");
    if (feedforward_width < 1) throw std::invalid_argument("feedforward_width must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (conditioning != Conditioning::kNone && label_source == LabelSource::kAbsent)
      throw std::invalid_argument("conditioning requires a label source");
  }
};

// Emotion conditioning of the instance inputs. Early fusion widens each input
// by a 7-wide one-hot (projected back down by the model); late fusion leaves
// inputs alone and reports the extra classifier width (context + target
// indicators). Returns the conditioned matrix and the classifier width delta.
template <typename Sc>
std::pair<Mat<Sc>, int> condition_inputs(const Mat<Sc>& vectors, const std::vector<int>* emotions,
                                         Conditioning mode) {
  if (mode == Conditioning::kNone) return {vectors, 0};
  if (!emotions || static_cast<Eigen::Index>(emotions->size()) != vectors.rows())
    throw std::invalid_argument("conditioning requires one emotion label per context utterance");
  for (int e : *emotions)
    if (e < 0 || e >= kNumEmotions) throw std::invalid_argument("emotion label out of range");
  if (mode == Conditioning::kLate) return {vectors, 2 * kNumEmotions};
  Mat<Sc> out(vectors.rows(), vectors.cols() + kNumEmotions);
  out.leftCols(vectors.cols()) = vectors;
  out.rightCols(kNumEmotions).setZero();
  for (Eigen::Index r = 0; r < vectors.rows(); ++r)
    out(r, vectors.cols() + (*emotions)[static_cast<std::size_t>(r)]) = Sc(1);
  return {out, 0};
}

template <typename Sc>
class EfrModel {
 public:
  explicit EfrModel(const EfrHyperParams& hp) : hp_(hp), params_(hp.seed) {
    hp_.check();
    declare(params_, hp_);
  }

  const EfrHyperParams& hp() const { return hp_; }
  ParamStore<Sc>& params() { return params_; }
  const ParamStore<Sc>& params() const { return params_; }

  static void declare(ParamStore<Sc>& p, const EfrHyperParams& hp) {
    const int w = hp.model_width;
    if (hp.conditioning == Conditioning::kEarly)
      declare_linear(p, "efr.fuse", w + kNumEmotions, w);
    for (int l = 1; l <= hp.encoder_layers; ++l) {
      const std::string prefix = "efr.enc" + std::to_string(l);
      p.add(prefix + ".ln1.g", 1, w, Init::kOne);
      p.add(prefix + ".ln1.b", 1, w, Init::kZero);
      declare_linear(p, prefix + ".q", w, w);
      declare_linear(p, prefix + ".k", w, w);
      declare_linear(p, prefix + ".v", w, w);
      declare_linear(p, prefix + ".o", w, w);
      p.add(prefix + ".ln2.g", 1, w, Init::kOne);
      p.add(prefix + ".ln2.b", 1, w, Init::kZero);
      declare_linear(p, prefix + ".ff1", w, hp.feedforward_width);
      declare_linear(p, prefix + ".ff2", hp.feedforward_width, w);
    }
    p.add("efr.lnf.g", 1, w, Init::kOne);
    p.add("efr.lnf.b", 1, w, Init::kZero);
    const int cls_in =
        2 * w + (hp.conditioning == Conditioning::kLate ? 2 * kNumEmotions : 0);
    declare_linear(p, "efr.cls", cls_in, 2);
  }

  // One instance (k context utterances, row k-1 = target). Returns the k x 2
  // logits node: pre-norm encoder stack over the conditioned inputs, each
  // position concatenated with the target's encoding, single linear layer.
  int forward(Tape<Sc>& tp, Bind<Sc>& B, const Mat<Sc>& vectors, const std::vector<int>* emotions,
              const TrainMode* train) {
    const int k = static_cast<int>(vectors.rows());
    const int w = hp_.model_width;
    if (k < 1 || k > hp_.window)
      throw std::invalid_argument("instance length " + std::to_string(k) + " outside 1.." +
                                  std::to_string(hp_.window));
    if (static_cast<int>(vectors.cols()) != w)
      throw std::invalid_argument("input width " + std::to_string(vectors.cols()) + ", expected " +
                                  std::to_string(w));

    auto [conditioned, cls_delta] = condition_inputs(vectors, emotions, hp_.conditioning);
    (void)cls_delta;
    int x;
    if (hp_.conditioning == Conditioning::kEarly)
      x = linear(tp, B, "efr.fuse", tp.constant(std::move(conditioned)));
    else
      x = tp.constant(std::move(conditioned));

    x = tp.add(x, tp.constant(sinusoidal_positions<Sc>(k, w)));
    if (train)
      x = dropout(tp, x, train->dropout_rate, train->seed, dropout_site("efr.input"), train->step);

    const int dh = w / hp_.attention_heads;
    const Sc inv_sqrt = Sc(1) / std::sqrt(static_cast<Sc>(dh));
    for (int l = 1; l <= hp_.encoder_layers; ++l) {
      const std::string prefix = "efr.enc" + std::to_string(l);
      const int normed = tp.layer_norm(x, B(prefix + ".ln1.g"), B(prefix + ".ln1.b"));
      const int q = linear(tp, B, prefix + ".q", normed);
      const int key = linear(tp, B, prefix + ".k", normed);
      const int v = linear(tp, B, prefix + ".v", normed);
      int heads = -1;
      for (int h = 0; h < hp_.attention_heads; ++h) {
        const int qh = tp.slice_cols(q, h * dh, (h + 1) * dh);
        const int kh = tp.slice_cols(key, h * dh, (h + 1) * dh);
        const int vh = tp.slice_cols(v, h * dh, (h + 1) * dh);
        const int weights = tp.softmax_rows(tp.scale(tp.matmul_nt(qh, kh), inv_sqrt));
        const int head = tp.matmul(weights, vh);
        heads = h == 0 ? head : tp.concat_cols(heads, head);
      }
      int attn = linear(tp, B, prefix + ".o", heads);
      if (train)
        attn = dropout(tp, attn, train->dropout_rate, train->seed,
                       dropout_site("efr.attn", static_cast<std::uint64_t>(l)), train->step);
      x = tp.add(x, attn);

      const int ffin = tp.layer_norm(x, B(prefix + ".ln2.g"), B(prefix + ".ln2.b"));
      int ff = linear(tp, B, prefix + ".ff2", tp.relu(linear(tp, B, prefix + ".ff1", ffin)));
      if (train)
        ff = dropout(tp, ff, train->dropout_rate, train->seed,
                     dropout_site("efr.ffn", static_cast<std::uint64_t>(l)), train->step);
      x = tp.add(x, ff);
    }
    x = tp.layer_norm(x, B("efr.lnf.g"), B("efr.lnf.b"));

    const int target = tp.slice_rows(x, k - 1, k);
    const int target_rows = tp.matmul(tp.constant(Mat<Sc>::Ones(k, 1)), target);
    int rep = tp.concat_cols(x, target_rows);
    if (hp_.conditioning == Conditioning::kLate) {
      Mat<Sc> ind = Mat<Sc>::Zero(k, 2 * kNumEmotions);
      for (int r = 0; r < k; ++r) {
        ind(r, (*emotions)[static_cast<std::size_t>(r)]) = Sc(1);
        ind(r, kNumEmotions + (*emotions)[static_cast<std::size_t>(k - 1)]) = Sc(1);
      }
      rep = tp.concat_cols(rep, tp.constant(std::move(ind)));
    }
    return linear(tp, B, "efr.cls", rep);
  }

  // Inference probabilities: one row per context utterance, rows sum to 1.
  Mat<Sc> probabilities(const Mat<Sc>& vectors, const std::vector<int>* emotions) {
    Tape<Sc> tp;
    Bind<Sc> B(tp, params_);
    return tp.val(tp.softmax_rows(forward(tp, B, vectors, emotions, nullptr)));
  }

 private:
  EfrHyperParams hp_;
  ParamStore<Sc> params_;
};

template <typename Sc>
struct EfrExample {
  std::string dialogue_id;
  int target_index = 0;
  std::vector<int> context_indices;
  Mat<Sc> vectors;            // k x width, row k-1 = target utterance
  std::vector<int> labels;    // binary trigger label per row
  std::vector<int> emotions;  // emotion index per row (conditioning input)
  bool has_flip = false;
};

// Instance tensors for one corpus. Emotion labels per context utterance come
// from the gold dialogue unless an override map (dialogue id -> one label per
// utterance, e.g. another model's predictions) is supplied.
template <typename Sc>
std::vector<EfrExample<Sc>> make_efr_examples(
    const Corpus& corpus, const EmbeddingStore& store, int window,
    const std::map<std::string, std::vector<int>>* emotion_override = nullptr,
    int model_width = kEmbeddingWidth) {
  std::vector<EfrExample<Sc>> out;
  for (const auto& d : corpus.dialogues) {
    static const std::vector<TriggerAnnotation> kNone;
    auto it = corpus.annotations.find(d.id);
    const auto& anns = it == corpus.annotations.end() ? kNone : it->second;
    const std::vector<int>* override_labels = nullptr;
    if (emotion_override) {
      auto ov = emotion_override->find(d.id);
      if (ov == emotion_override->end())
        throw std::invalid_argument("no emotion labels for dialogue '" + d.id + "'");
      if (static_cast<int>(ov->second.size()) != d.size())
        throw std::invalid_argument("emotion label count mismatch for dialogue '" + d.id + "'");
      override_labels = &ov->second;
    }
    for (const auto& inst : compile_instances(d, anns, window)) {
      EfrExample<Sc> ex;
      ex.dialogue_id = inst.dialogue_id;
      ex.target_index = inst.target_index;
      ex.context_indices = inst.context_indices;
      ex.labels = inst.labels;
      ex.has_flip = inst.has_flip;
      const int k = static_cast<int>(inst.context_indices.size());
      ex.vectors = Mat<Sc>(k, kEmbeddingWidth);
      for (int r = 0; r < k; ++r) {
        const int idx = inst.context_indices[static_cast<std::size_t>(r)];
        const Utterance& u = d.at(idx);
        ex.vectors.row(r) = store.embed(d.id, idx, u.text).transpose().template cast<Sc>();
        ex.emotions.push_back(override_labels ? (*override_labels)[static_cast<std::size_t>(idx - 1)]
                                              : index_of(u.emotion));
      }
      ex.vectors = project_columns(ex.vectors, model_width, store.fallback_seed());
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// Binary cross-entropy summed over context positions, zeroed entirely for
// instances whose target is not a flip (their error gradients are never
// processed), normalized by the number of contributing instances.
template <typename Sc>
std::vector<EpochLog> train_efr(EfrModel<Sc>& model, const std::vector<EfrExample<Sc>>& data) {
  const EfrHyperParams& hp = model.hp();
  if (data.empty()) throw std::invalid_argument("empty instance set");
  auto& params = model.params();
  const bool conditioned = hp.conditioning != Conditioning::kNone;
  std::vector<EpochLog> log;

  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(mix_seed(mix_seed(hp.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(hp.batch_size));
      Tape<Sc> tp;
      Bind<Sc> B(tp, params);
      int loss_sum = -1;
      long contributing = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        const EfrExample<Sc>& ex = data[static_cast<std::size_t>(order[k])];
        TrainMode tm{hp.dropout, mix_seed(hp.seed, "dropout"),
                     mix_seed(static_cast<std::uint64_t>(params.step() + 1),
                              static_cast<std::uint64_t>(order[k]))};
        const int logits = model.forward(tp, B, ex.vectors, conditioned ? &ex.emotions : nullptr,
                                         &tm);
        const Sc w = ex.has_flip ? Sc(1) : Sc(0);
        const int ce = tp.xent_rows(logits, ex.labels, std::vector<Sc>(ex.labels.size(), w));
        loss_sum = loss_sum < 0 ? ce : tp.add(loss_sum, ce);
        if (ex.has_flip) ++contributing;
      }
      const int loss = tp.scale(loss_sum, Sc(1) / static_cast<Sc>(std::max(1L, contributing)));
      const double loss_value = static_cast<double>(tp.val(loss)(0, 0));
      if (!std::isfinite(loss_value))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch));
      tp.backward(loss);
      params.zero_grads();
      B.harvest();
      if (!params.grads_finite())
        throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch));
      params.adam_step(static_cast<Sc>(hp.learning_rate));
      epoch_loss += loss_value;
      ++batches;
    }

    // Trigger F1 over the flip instances' flattened decisions.
    std::vector<int> gold, pred;
    for (const auto& ex : data) {
      if (!ex.has_flip) continue;
      const Mat<Sc> probs = model.probabilities(ex.vectors, conditioned ? &ex.emotions : nullptr);
      for (int r = 0; r < probs.rows(); ++r) {
        gold.push_back(ex.labels[static_cast<std::size_t>(r)]);
        pred.push_back(probs(r, 1) > probs(r, 0) ? 1 : 0);
      }
    }
    double f1 = 0.0;
    if (!gold.empty()) {
      const MetricsReport rep = classification_report(gold, pred, {"non-trigger", "trigger"});
      f1 = rep.trigger_f1.value_or(0.0);
    }
    log.push_back({epoch, epoch_loss / static_cast<double>(std::max(1L, batches)), f1, f1});
  }
  return log;
}

// For every flip target: compile its window, classify, keep positions whose
// trigger probability strictly exceeds the non-trigger probability (ties are
// conservative: non-trigger).
template <typename Sc>
std::vector<TriggerAnnotation> predict_triggers(
    EfrModel<Sc>& model, const Dialogue& d, const EmbeddingStore& store,
    const std::vector<int>* emotion_labels = nullptr) {
  const EfrHyperParams& hp = model.hp();
  const bool conditioned = hp.conditioning != Conditioning::kNone;
  if (conditioned && emotion_labels && static_cast<int>(emotion_labels->size()) != d.size())
    throw std::invalid_argument("emotion label count mismatch for dialogue '" + d.id + "'");
  std::set<int> flip_targets;
  for (const auto& f : detect_flips(d)) flip_targets.insert(f.target_index);

  std::vector<TriggerAnnotation> out;
  for (const auto& inst : compile_instances(d, {}, hp.window)) {
    if (!flip_targets.count(inst.target_index)) continue;
    const int k = static_cast<int>(inst.context_indices.size());
    Mat<Sc> vectors(k, kEmbeddingWidth);
    std::vector<int> emotions;
    for (int r = 0; r < k; ++r) {
      const int idx = inst.context_indices[static_cast<std::size_t>(r)];
      vectors.row(r) = store.embed(d.id, idx, d.at(idx).text).transpose().template cast<Sc>();
      if (conditioned)
        emotions.push_back(emotion_labels ? (*emotion_labels)[static_cast<std::size_t>(idx - 1)]
                                          : index_of(d.at(idx).emotion));
    }
    vectors = project_columns(vectors, hp.model_width, store.fallback_seed());
    const Mat<Sc> probs = model.probabilities(vectors, conditioned ? &emotions : nullptr);
    TriggerAnnotation ann;
    ann.target_index = inst.target_index;
    for (int r = 0; r < k; ++r)
      if (probs(r, 1) > probs(r, 0))
        ann.trigger_indices.insert(inst.context_indices[static_cast<std::size_t>(r)]);
    out.push_back(std::move(ann));
  }
  return out;
}

}  // namespace convflip
