#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "convflip/erc_mmn.hpp"

namespace convflip {

struct MultiHyperParams {
  ErcHyperParams erc;  // trunk shapes, hops, truncation, dropout
  int window = 5;
  double erc_loss_weight = 1.0;
  double efr_loss_weight = 1.0;
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_epochs = 100;
  std::uint64_t seed = 1;

  void check() const {
    erc.check();
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (erc_loss_weight < 0.0 || efr_loss_weight < 0.0)
      throw std::invalid_argument("loss weights must be non-negative");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  }
};

struct MultiForward {
  ErcForward erc;
  std::vector<int> efr_logits;                // per target t: k_t x 2 node
  std::vector<std::vector<int>> efr_context;  // context positions per target
};

// Joint model: the recurrent trunk shared to the penultimate representation,
// the emotion head unchanged, and a parallel trigger head. The trigger head
// scores each windowed context position against its target by summing the two
// penultimate representations elementwise (keeping the head input width equal
// to the emotion head's).
template <typename Sc>
class MultiModel {
 public:
  explicit MultiModel(const MultiHyperParams& hp) : hp_(hp), erc_(effective_erc(hp)) {
    hp_.check();
    declare_efr_head(erc_.params(), erc_.hp());
  }

  static ErcHyperParams effective_erc(const MultiHyperParams& hp) {
    ErcHyperParams e = hp.erc;
    e.seed = hp.seed;
    e.learning_rate = hp.learning_rate;
    e.batch_size = hp.batch_size;
    e.max_epochs = hp.max_epochs;
    return e;
  }

  static void declare_efr_head(ParamStore<Sc>& p, const ErcHyperParams& erc) {
    const int h = erc.hidden_width;
    declare_linear(p, "efr_head.l1", 2 * h, 2 * h);
    declare_linear(p, "efr_head.l2", 2 * h, 2 * h);
    declare_linear(p, "efr_head.l3", 2 * h, h);
    declare_linear(p, "efr_head.l4", h, h / 2);
    declare_linear(p, "efr_head.l5", h / 2, 2);
  }

  const MultiHyperParams& hp() const { return hp_; }
  ErcModel<Sc>& erc() { return erc_; }
  ParamStore<Sc>& params() { return erc_.params(); }

  MultiForward forward(Tape<Sc>& tp, Bind<Sc>& B, const Mat<Sc>& inputs,
                       const std::vector<int>& roles, const std::vector<int>* gold_labels,
                       const TrainMode* train, bool with_efr = true) {
    MultiForward f;
    f.erc = erc_.forward(tp, B, inputs, roles, gold_labels, train);
    if (!with_efr) return f;
    const int n = static_cast<int>(inputs.rows());
    for (int t = 1; t <= n; ++t) {
      const int first = std::max(1, t - hp_.window + 1);
      int pairs = -1;
      std::vector<int> ctx;
      for (int i = first; i <= t; ++i) {
        const int pair = tp.add(f.erc.penult[static_cast<std::size_t>(i - 1)],
                                f.erc.penult[static_cast<std::size_t>(t - 1)]);
        pairs = i == first ? pair : tp.concat_rows(pairs, pair);
        ctx.push_back(i);
      }
      int x = pairs;
      for (const char* name : {"efr_head.l1", "efr_head.l2", "efr_head.l3", "efr_head.l4"}) {
        x = tp.relu(linear(tp, B, name, x));
        if (train)
          x = dropout(tp, x, train->dropout_rate, train->seed,
                      dropout_site(name, static_cast<std::uint64_t>(t)), train->step);
      }
      f.efr_logits.push_back(linear(tp, B, "efr_head.l5", x));
      f.efr_context.push_back(std::move(ctx));
    }
    return f;
  }

  struct Inference {
    Mat<Sc> erc_probs;                          // n x 7
    std::vector<Mat<Sc>> efr_probs;             // per target: k x 2
    std::vector<std::vector<int>> efr_context;  // positions per target
  };

  Inference infer(const Mat<Sc>& inputs, const std::vector<int>& roles) {
    Tape<Sc> tp;
    Bind<Sc> B(tp, params());
    auto f = forward(tp, B, inputs, roles, nullptr, nullptr);
    Inference out;
    out.erc_probs = Mat<Sc>(inputs.rows(), kNumEmotions);
    for (std::size_t i = 0; i < f.erc.logits.size(); ++i)
      out.erc_probs.row(static_cast<Eigen::Index>(i)) =
          tp.val(tp.softmax_rows(f.erc.logits[i])).row(0);
    for (std::size_t t = 0; t < f.efr_logits.size(); ++t)
      out.efr_probs.push_back(tp.val(tp.softmax_rows(f.efr_logits[t])));
    out.efr_context = f.efr_context;
    return out;
  }

 private:
  MultiHyperParams hp_;
  ErcModel<Sc> erc_;
};

template <typename Sc>
struct MultiExample {
  ErcExample<Sc> erc;
  std::vector<char> has_flip;           // per utterance
  std::vector<std::set<int>> triggers;  // gold trigger positions per utterance
};

template <typename Sc>
std::vector<MultiExample<Sc>> make_multi_examples(const Corpus& corpus,
                                                  const EmbeddingStore& store, int max_roles,
                                                  int input_width = kEmbeddingWidth) {
  auto erc_examples = make_erc_examples<Sc>(corpus, store, max_roles, input_width);
  std::vector<MultiExample<Sc>> out;
  for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
    const Dialogue& d = corpus.dialogues[di];
    MultiExample<Sc> m;
    m.erc = std::move(erc_examples[di]);
    m.has_flip.assign(static_cast<std::size_t>(d.size()), 0);
    m.triggers.resize(static_cast<std::size_t>(d.size()));
    for (const auto& f : detect_flips(d))
      m.has_flip[static_cast<std::size_t>(f.target_index - 1)] = 1;
    if (auto it = corpus.annotations.find(d.id); it != corpus.annotations.end())
      for (const auto& ann : it->second)
        m.triggers[static_cast<std::size_t>(ann.target_index - 1)] = ann.trigger_indices;
    out.push_back(std::move(m));
  }
  return out;
}

// Keep the last max_len utterances; trigger positions are remapped into the
// kept range and triggers pointing before it are dropped (they cannot fall in
// any window over the kept sequence). Flip flags travel with their utterance.
template <typename Sc>
MultiExample<Sc> truncate_multi(const MultiExample<Sc>& ex, int max_len) {
  const int n = static_cast<int>(ex.erc.inputs.rows());
  if (n <= max_len) return ex;
  const int off = n - max_len;
  MultiExample<Sc> t;
  t.erc = truncate_example(ex.erc, max_len);
  for (int i = off; i < n; ++i) {
    t.has_flip.push_back(ex.has_flip[static_cast<std::size_t>(i)]);
    std::set<int> remapped;
    for (int k : ex.triggers[static_cast<std::size_t>(i)])
      if (k > off) remapped.insert(k - off);
    t.triggers.push_back(std::move(remapped));
  }
  return t;
}

// Summed losses: mean emotion cross-entropy plus flip-masked trigger
// cross-entropy, each under its configured weight. With the trigger weight at
// zero the parameter trajectory is identical to standalone emotion training
// under the same seed.
template <typename Sc>
std::vector<EpochLog> train_multi(MultiModel<Sc>& model, const std::vector<MultiExample<Sc>>& data) {
  const MultiHyperParams& hp = model.hp();
  const ErcHyperParams& erc_hp = model.erc().hp();
  if (data.empty()) throw std::invalid_argument("empty corpus");
  auto& params = model.params();
  const bool with_efr = hp.efr_loss_weight != 0.0;
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
      int erc_sum = -1, efr_sum = -1;
      long utterances = 0, flip_targets = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        const MultiExample<Sc> ex = truncate_multi(data[static_cast<std::size_t>(order[k])],
                                                   erc_hp.max_seq_len);
        TrainMode tm{erc_hp.dropout, mix_seed(hp.seed, "dropout"),
                     mix_seed(static_cast<std::uint64_t>(params.step() + 1),
                              static_cast<std::uint64_t>(order[k]))};
        auto f = model.forward(tp, B, ex.erc.inputs, ex.erc.roles, &ex.erc.labels, &tm, with_efr);

        const int erc_logits = stack_rows(tp, f.erc.logits);
        const int erc_ce = tp.xent_rows(erc_logits, ex.erc.labels,
                                        std::vector<Sc>(ex.erc.labels.size(), Sc(1)));
        erc_sum = erc_sum < 0 ? erc_ce : tp.add(erc_sum, erc_ce);
        utterances += static_cast<long>(ex.erc.labels.size());

        if (with_efr) {
          const int efr_logits = stack_rows(tp, f.efr_logits);
          std::vector<int> targets;
          std::vector<Sc> weights;
          for (std::size_t t = 0; t < f.efr_context.size(); ++t) {
            const bool flip = ex.has_flip[t] != 0;
            if (flip) ++flip_targets;
            const auto& gold = ex.triggers[t];
            for (int pos : f.efr_context[t]) {
              targets.push_back(gold.count(pos) ? 1 : 0);
              weights.push_back(flip ? Sc(1) : Sc(0));
            }
          }
          const int efr_ce = tp.xent_rows(efr_logits, std::move(targets), std::move(weights));
          efr_sum = efr_sum < 0 ? efr_ce : tp.add(efr_sum, efr_ce);
        }
      }
      int loss = tp.scale(erc_sum, static_cast<Sc>(hp.erc_loss_weight) /
                                       static_cast<Sc>(utterances));
      if (with_efr)
        loss = tp.add(loss, tp.scale(efr_sum, static_cast<Sc>(hp.efr_loss_weight) /
                                                  static_cast<Sc>(std::max(1L, flip_targets))));
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

    std::vector<int> e_gold, e_pred, t_gold, t_pred;
    for (const auto& ex : data) {
      auto inf = model.infer(ex.erc.inputs, ex.erc.roles);
      for (int i = 0; i < inf.erc_probs.rows(); ++i) {
        e_gold.push_back(ex.erc.labels[static_cast<std::size_t>(i)]);
        e_pred.push_back(argmax_row(inf.erc_probs, i));
      }
      for (std::size_t t = 0; t < inf.efr_probs.size(); ++t) {
        if (!ex.has_flip[t]) continue;
        const auto& gold = ex.triggers[t];
        for (std::size_t r = 0; r < inf.efr_context[t].size(); ++r) {
          t_gold.push_back(gold.count(inf.efr_context[t][r]) ? 1 : 0);
          t_pred.push_back(inf.efr_probs[t](static_cast<Eigen::Index>(r), 1) >
                                   inf.efr_probs[t](static_cast<Eigen::Index>(r), 0)
                               ? 1
                               : 0);
        }
      }
    }
    const MetricsReport erc_rep = classification_report(e_gold, e_pred, emotion_class_names());
    double trigger_f1 = 0.0;
    if (!t_gold.empty())
      trigger_f1 = classification_report(t_gold, t_pred, {"non-trigger", "trigger"})
                       .trigger_f1.value_or(0.0);
    log.push_back({epoch, epoch_loss / static_cast<double>(std::max(1L, batches)),
                   erc_rep.weighted_f1, trigger_f1});
  }
  return log;
}

// Trigger predictions for every flip target of one dialogue, mirroring the
// standalone trigger model's decision rule.
template <typename Sc>
std::vector<TriggerAnnotation> predict_triggers_multi(MultiModel<Sc>& model, const Dialogue& d,
                                                      const Mat<Sc>& inputs,
                                                      const std::vector<int>& roles) {
  auto inf = model.infer(inputs, roles);
  std::set<int> flip_targets;
  for (const auto& f : detect_flips(d)) flip_targets.insert(f.target_index);
  std::vector<TriggerAnnotation> out;
  for (std::size_t t = 0; t < inf.efr_probs.size(); ++t) {
    const int target = static_cast<int>(t) + 1;
    if (!flip_targets.count(target)) continue;
    TriggerAnnotation ann;
    ann.target_index = target;
    for (std::size_t r = 0; r < inf.efr_context[t].size(); ++r)
      if (inf.efr_probs[t](static_cast<Eigen::Index>(r), 1) >
          inf.efr_probs[t](static_cast<Eigen::Index>(r), 0))
        ann.trigger_indices.insert(inf.efr_context[t][r]);
    out.push_back(std::move(ann));
  }
  return out;
}

}  // namespace convflip
