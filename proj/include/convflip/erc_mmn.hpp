#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "convflip/corpus.hpp"
#include "convflip/embedding.hpp"
#include "convflip/metrics.hpp"
#include "convflip/nn.hpp"

namespace convflip {

struct ErcHyperParams {
  int input_width = 768;
  int hidden_width = 768;
  int hops = 4;
  int max_seq_len = 15;
  int max_speaker_roles = 8;
  double dropout = 0.5;
  double learning_rate = 1e-6;
  int batch_size = 8;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  // Append a 7-wide emotion indicator of already-classified utterances to
  // their memory slots (gold in training, own predictions at inference).
  bool label_infusion = false;
  // Zero the attended context and skip the global recurrence, making the
  // per-speaker streams provably independent (isolation testing).
  bool disable_global_context = false;
  // Separate memory/attention weights per hop instead of shared ones.
  bool unshared_hop_weights = false;

  void check() const {
    if (hops < 1) throw std::invalid_argument("hops must be >= 1");
    if (input_width <= 0) throw std::invalid_argument("input_width must be positive");
    if (hidden_width <= 0 || hidden_width % 2 != 0)
      throw std::invalid_argument("hidden_width must be positive and even");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
    if (max_seq_len < 1) throw std::invalid_argument("max_seq_len must be >= 1");
    if (max_speaker_roles < 1) throw std::invalid_argument("max_speaker_roles must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  }
};

// Speakers are mapped to recurrent-cell roles by order of first appearance
// within the dialogue, capped at max_roles (so unseen speaker names are
// always servable).
inline std::vector<int> speaker_roles(const Dialogue& d, int max_roles) {
  std::map<std::string, int> seen;
  std::vector<int> roles;
  roles.reserve(d.utterances.size());
  for (const auto& u : d.utterances) {
    auto [it, inserted] = seen.try_emplace(u.speaker, static_cast<int>(seen.size()));
    roles.push_back(std::min(it->second, max_roles - 1));
  }
  return roles;
}

// Attention normalized over slot prefix 1..t only: beta is 1xt, and the
// returned slot matrix has row j scaled by beta_j for j <= t while rows past
// the prefix pass through unchanged.
template <typename Sc>
std::pair<int, int> masked_attention(Tape<Sc>& tp, int slots, int query, int prefix, int Wq,
                                     int Wk) {
  const int n = static_cast<int>(tp.val(slots).rows());
  if (prefix < 1 || prefix > n) throw std::invalid_argument("masked_attention: prefix out of range");
  const Sc inv_sqrt = Sc(1) / std::sqrt(static_cast<Sc>(tp.val(Wq).cols()));
  const int head = tp.slice_rows(slots, 0, prefix);
  const int scores =
      tp.scale(tp.matmul_nt(tp.matmul(query, Wq), tp.matmul(head, Wk)), inv_sqrt);
  const int beta = tp.softmax_rows(scores);
  int out = tp.scale_rows(head, beta);
  if (prefix < n) out = tp.concat_rows(out, tp.slice_rows(slots, prefix, n));
  return {beta, out};
}

// Hop loop: recurrent sweep over slot contents, masked attention against the
// query, slots replaced by the attended outputs; afterwards the prefix rows
// are mean-pooled into a single readout. `indicators` (optional, -1 when
// absent) is an nx7 constant re-appended to the slots before every sweep.
template <typename Sc>
int memory_read(Tape<Sc>& tp, Bind<Sc>& B, int slots, int query, int prefix, int hops,
                const std::string& mgru, const std::string& attn, bool unshared_hops,
                int indicators = -1) {
  if (hops < 1) throw std::invalid_argument("memory_read: hops must be >= 1");
  int mem = slots;
  for (int hop = 0; hop < hops; ++hop) {
    const std::string suffix = unshared_hops ? "." + std::to_string(hop + 1) : "";
    const int x = indicators >= 0 ? tp.concat_cols(mem, indicators) : mem;
    const int n = static_cast<int>(tp.val(x).rows());
    const int hidden = static_cast<int>(tp.val(B(mgru + suffix + ".Uz")).rows());
    int state = tp.constant(Mat<Sc>::Zero(1, hidden));
    int swept = -1;
    for (int j = 0; j < n; ++j) {
      state = GruCell<Sc>::step(tp, B, mgru + suffix, tp.slice_rows(x, j, j + 1), state);
      swept = j == 0 ? state : tp.concat_rows(swept, state);
    }
    auto [beta, attended] = masked_attention(tp, swept, query, prefix, B(attn + suffix + ".Wq"),
                                             B(attn + suffix + ".Wk"));
    (void)beta;
    mem = attended;
  }
  return tp.mean_rows(tp.slice_rows(mem, 0, prefix));
}

// Per-utterance node handles from one dialogue forward pass.
struct ErcForward {
  std::vector<int> logits;  // 1x7 each
  std::vector<int> penult;  // readout (+) speaker state, 1x2H each
  std::vector<int> v;       // attended context (+) input, 1x(H+D) each
  std::vector<int> h_bar;   // speaker recurrent state, 1xH each
  std::vector<int> g;       // global recurrent state, 1xH each (-1 when disabled)
};

template <typename Sc>
class ErcModel {
 public:
  explicit ErcModel(const ErcHyperParams& hp) : hp_(hp), params_(hp.seed) {
    hp_.check();
    declare_trunk(params_, hp_);
    declare_classifier(params_, hp_);
  }

  const ErcHyperParams& hp() const { return hp_; }
  ParamStore<Sc>& params() { return params_; }
  const ParamStore<Sc>& params() const { return params_; }

  // Everything up to the penultimate representation (shared with the joint
  // model). Parameter names are identical across models so that seed-keyed
  // initialization makes a shared trunk start bit-identical to a standalone
  // one.
  static void declare_trunk(ParamStore<Sc>& p, const ErcHyperParams& hp) {
    const int d = hp.input_width, h = hp.hidden_width;
    for (int r = 0; r < hp.max_speaker_roles; ++r)
      GruCell<Sc>::declare(p, "erc.sgru" + std::to_string(r + 1), h + d, h);
    GruCell<Sc>::declare(p, "erc.ggru", h + d, h);
    p.add("erc.gattn.Wq", d, h, Init::kGlorot);
    p.add("erc.gattn.Wk", h, h, Init::kGlorot);
    const int slot = h + (hp.label_infusion ? kNumEmotions : 0);
    const int copies = hp.unshared_hop_weights ? hp.hops : 1;
    for (int k = 0; k < copies; ++k) {
      const std::string suffix = hp.unshared_hop_weights ? "." + std::to_string(k + 1) : "";
      GruCell<Sc>::declare(p, "erc.mgru" + suffix, slot, h);
      p.add("erc.mattn" + suffix + ".Wq", h, h, Init::kGlorot);
      p.add("erc.mattn" + suffix + ".Wk", h, h, Init::kGlorot);
    }
  }

  static void declare_classifier(ParamStore<Sc>& p, const ErcHyperParams& hp) {
    const int h = hp.hidden_width;
    declare_linear(p, "erc.cls1", 2 * h, h);
    declare_linear(p, "erc.cls2", h, h / 2);
    declare_linear(p, "erc.cls3", h / 2, kNumEmotions);
  }

  // One dialogue, utterances strictly in order; row i of the output depends
  // only on rows 0..i of the input. gold_labels feeds label infusion during
  // training (inference substitutes the model's own running predictions).
  ErcForward forward(Tape<Sc>& tp, Bind<Sc>& B, const Mat<Sc>& inputs,
                     const std::vector<int>& roles, const std::vector<int>* gold_labels,
                     const TrainMode* train) {
    const int n = static_cast<int>(inputs.rows());
    if (static_cast<int>(inputs.cols()) != hp_.input_width)
      throw std::invalid_argument("input width " + std::to_string(inputs.cols()) + ", expected " +
                                  std::to_string(hp_.input_width));
    if (static_cast<int>(roles.size()) != n)
      throw std::invalid_argument("one speaker role per utterance required");
    for (int r : roles)
      if (r < 0 || r >= hp_.max_speaker_roles) throw std::invalid_argument("unknown speaker role");
    if (hp_.label_infusion && gold_labels && static_cast<int>(gold_labels->size()) != n)
      throw std::invalid_argument("one gold label per utterance required");

    const int h_width = hp_.hidden_width;
    ErcForward out;
    std::vector<int> speaker_state(static_cast<std::size_t>(hp_.max_speaker_roles), -1);
    int g_prev = -1;
    int g_hist = -1;  // stacked global states, (i)xH after utterance i
    int slots = -1;   // stacked speaker states, one slot per utterance so far
    std::vector<int> running_pred;

    for (int i = 0; i < n; ++i) {
      const int u = tp.constant(inputs.row(i));

      int attended;
      if (g_hist < 0 || hp_.disable_global_context) {
        attended = tp.constant(Mat<Sc>::Zero(1, h_width));
      } else {
        const Sc inv_sqrt = Sc(1) / std::sqrt(static_cast<Sc>(h_width));
        const int scores = tp.scale(
            tp.matmul_nt(tp.matmul(u, B("erc.gattn.Wq")), tp.matmul(g_hist, B("erc.gattn.Wk"))),
            inv_sqrt);
        attended = tp.matmul(tp.softmax_rows(scores), g_hist);
      }
      const int v = tp.concat_cols(attended, u);

      const int role = roles[static_cast<std::size_t>(i)];
      const int h_prev = speaker_state[static_cast<std::size_t>(role)] >= 0
                             ? speaker_state[static_cast<std::size_t>(role)]
                             : tp.constant(Mat<Sc>::Zero(1, h_width));
      const int h = GruCell<Sc>::step(tp, B, "erc.sgru" + std::to_string(role + 1), v, h_prev);
      speaker_state[static_cast<std::size_t>(role)] = h;

      if (hp_.disable_global_context) {
        out.g.push_back(-1);
      } else {
        const int gp = g_prev >= 0 ? g_prev : tp.constant(Mat<Sc>::Zero(1, h_width));
        const int g = GruCell<Sc>::step(tp, B, "erc.ggru", v, gp);
        g_hist = g_hist < 0 ? g : tp.concat_rows(g_hist, g);
        g_prev = g;
        out.g.push_back(g);
      }

      slots = slots < 0 ? h : tp.concat_rows(slots, h);

      int indicators = -1;
      if (hp_.label_infusion) {
        Mat<Sc> ind = Mat<Sc>::Zero(i + 1, kNumEmotions);
        for (int j = 0; j < i; ++j) {
          const int lab = gold_labels ? (*gold_labels)[static_cast<std::size_t>(j)]
                                      : running_pred[static_cast<std::size_t>(j)];
          ind(j, lab) = Sc(1);
        }
        indicators = tp.constant(std::move(ind));
      }

      const int o_bar = memory_read(tp, B, slots, h, i + 1, hp_.hops, "erc.mgru", "erc.mattn",
                                    hp_.unshared_hop_weights, indicators);
      const int penult = tp.concat_cols(o_bar, h);

      int x = tp.relu(linear(tp, B, "erc.cls1", penult));
      if (train)
        x = dropout(tp, x, train->dropout_rate, train->seed,
                    dropout_site("erc.cls1", static_cast<std::uint64_t>(i)), train->step);
      x = tp.relu(linear(tp, B, "erc.cls2", x));
      if (train)
        x = dropout(tp, x, train->dropout_rate, train->seed,
                    dropout_site("erc.cls2", static_cast<std::uint64_t>(i)), train->step);
      const int logits = linear(tp, B, "erc.cls3", x);

      out.logits.push_back(logits);
      out.penult.push_back(penult);
      out.v.push_back(v);
      out.h_bar.push_back(h);
      if (hp_.label_infusion && !gold_labels)
        running_pred.push_back(argmax_row(tp.val(logits)));
    }
    return out;
  }

  // Inference probabilities, one row per utterance, rows sum to 1.
  Mat<Sc> probabilities(const Mat<Sc>& inputs, const std::vector<int>& roles) {
    Tape<Sc> tp;
    Bind<Sc> B(tp, params_);
    auto fwd = forward(tp, B, inputs, roles, nullptr, nullptr);
    Mat<Sc> probs(inputs.rows(), kNumEmotions);
    for (std::size_t i = 0; i < fwd.logits.size(); ++i)
      probs.row(static_cast<Eigen::Index>(i)) = tp.val(tp.softmax_rows(fwd.logits[i])).row(0);
    return probs;
  }

  std::vector<Emotion> predict(const Mat<Sc>& inputs, const std::vector<int>& roles) {
    const Mat<Sc> probs = probabilities(inputs, roles);
    std::vector<Emotion> out;
    for (int i = 0; i < probs.rows(); ++i)
      out.push_back(emotion_from_index(argmax_row(probs, i)));
    return out;
  }

 private:
  ErcHyperParams hp_;
  ParamStore<Sc> params_;
};

template <typename Sc>
struct ErcExample {
  std::string dialogue_id;
  Mat<Sc> inputs;            // n x input_width
  std::vector<int> roles;    // speaker role per utterance
  std::vector<int> labels;   // emotion index per utterance
};

// Dialogue tensors at the model's input width; widths other than the store's
// native one go through the seeded projection keyed by the fallback seed.
template <typename Sc>
std::vector<ErcExample<Sc>> make_erc_examples(const Corpus& corpus, const EmbeddingStore& store,
                                              int max_roles, int input_width = kEmbeddingWidth) {
  std::vector<ErcExample<Sc>> out;
  for (const auto& d : corpus.dialogues) {
    ErcExample<Sc> ex;
    ex.dialogue_id = d.id;
    ex.inputs = Mat<Sc>(d.size(), kEmbeddingWidth);
    for (int i = 0; i < d.size(); ++i)
      ex.inputs.row(i) =
          store.embed(d.id, i + 1, d.utterances[static_cast<std::size_t>(i)].text)
              .transpose()
              .template cast<Sc>();
    ex.inputs = project_columns(ex.inputs, input_width, store.fallback_seed());
    ex.roles = speaker_roles(d, max_roles);
    for (const auto& u : d.utterances) ex.labels.push_back(index_of(u.emotion));
    out.push_back(std::move(ex));
  }
  return out;
}

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_f1 = 0.0;            // task-primary metric on the training set
  double train_trigger_f1 = -1.0;   // set by joint training only
};

template <typename Sc>
ErcExample<Sc> truncate_example(const ErcExample<Sc>& ex, int max_len) {
  const int n = static_cast<int>(ex.inputs.rows());
  if (n <= max_len) return ex;
  ErcExample<Sc> t;
  t.dialogue_id = ex.dialogue_id;
  t.inputs = ex.inputs.bottomRows(max_len);
  t.roles.assign(ex.roles.end() - max_len, ex.roles.end());
  t.labels.assign(ex.labels.end() - max_len, ex.labels.end());
  return t;
}

// Mean cross-entropy over all utterances in each batch, Adam updates,
// deterministic given the seed. Training truncates long dialogues to their
// last max_seq_len utterances; inference accepts any length.
template <typename Sc>
std::vector<EpochLog> train_erc(ErcModel<Sc>& model, const std::vector<ErcExample<Sc>>& data) {
  const ErcHyperParams& hp = model.hp();
  if (data.empty()) throw std::invalid_argument("empty corpus");
  auto& params = model.params();
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
      long utterances = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        const ErcExample<Sc> ex = truncate_example(data[static_cast<std::size_t>(order[k])],
                                                   hp.max_seq_len);
        TrainMode tm{hp.dropout, mix_seed(hp.seed, "dropout"),
                     mix_seed(static_cast<std::uint64_t>(params.step() + 1),
                              static_cast<std::uint64_t>(order[k]))};
        auto fwd = model.forward(tp, B, ex.inputs, ex.roles, &ex.labels, &tm);
        const int logits = stack_rows(tp, fwd.logits);
        const int ce = tp.xent_rows(logits, ex.labels,
                                    std::vector<Sc>(ex.labels.size(), Sc(1)));
        loss_sum = loss_sum < 0 ? ce : tp.add(loss_sum, ce);
        utterances += static_cast<long>(ex.labels.size());
      }
      const int loss = tp.scale(loss_sum, Sc(1) / static_cast<Sc>(utterances));
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

    std::vector<int> gold, pred;
    for (const auto& ex : data) {
      const Mat<Sc> probs = model.probabilities(ex.inputs, ex.roles);
      for (int i = 0; i < probs.rows(); ++i) {
        gold.push_back(ex.labels[static_cast<std::size_t>(i)]);
        pred.push_back(argmax_row(probs, i));
      }
    }
    const MetricsReport rep = classification_report(gold, pred, emotion_class_names());
    log.push_back({epoch, epoch_loss / static_cast<double>(std::max(1L, batches)),
                   rep.weighted_f1});
  }
  return log;
}

}  // namespace convflip
