#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>

#include "convflip/rng.hpp"
#include "convflip/tape.hpp"

namespace convflip {

enum class Init { kGlorot, kZero, kOne };

// Named parameter collection with Adam state. Initialization is a pure
// function of (seed, name): models sharing a seed and parameter names get
// bit-identical weights regardless of registration order, which is what lets
// a shared trunk start from the same point as a standalone model.
template <typename Sc>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<Sc> value, grad, m, v;
  };

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::size_t count() const { return entries_.size(); }
  long step() const { return step_; }

  Mat<Sc>& add(const std::string& name, int rows, int cols, Init init) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    Entry e;
    e.name = name;
    e.value = Mat<Sc>::Zero(rows, cols);
    if (init == Init::kGlorot) {
      Rng rng(mix_seed(seed_, name));
      const double limit = std::sqrt(6.0 / (rows + cols));
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) e.value(r, c) = static_cast<Sc>(rng.uniform(-limit, limit));
    } else if (init == Init::kOne) {
      e.value.setOnes();
    }
    e.grad = Mat<Sc>::Zero(rows, cols);
    e.m = Mat<Sc>::Zero(rows, cols);
    e.v = Mat<Sc>::Zero(rows, cols);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Mat<Sc>& value(const std::string& name) { return entry(name).value; }
  const Mat<Sc>& value(const std::string& name) const { return entry(name).value; }
  Mat<Sc>& grad(const std::string& name) { return entry(name).grad; }

  const std::deque<Entry>& entries() const { return entries_; }
  std::deque<Entry>& entries() { return entries_; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.setZero();
  }

  bool grads_finite() const {
    for (const auto& e : entries_)
      if (!e.grad.allFinite()) return false;
    return true;
  }

  void adam_step(Sc lr, Sc beta1 = Sc(0.9), Sc beta2 = Sc(0.999), Sc eps = Sc(1e-8)) {
    ++step_;
    const Sc bc1 = Sc(1) - std::pow(beta1, static_cast<Sc>(step_));
    const Sc bc2 = Sc(1) - std::pow(beta2, static_cast<Sc>(step_));
    for (auto& e : entries_) {
      e.m = beta1 * e.m + (Sc(1) - beta1) * e.grad;
      e.v = (beta2 * e.v.array() + (Sc(1) - beta2) * e.grad.array().square()).matrix();
      e.value.array() -= lr * (e.m.array() / bc1) / ((e.v.array() / bc2).sqrt() + eps);
    }
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter " + name);
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter " + name);
    return entries_[it->second];
  }

  std::uint64_t seed_;
  std::deque<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  long step_ = 0;
};

// Registers store parameters as tape leaves on first use and pulls their
// gradients back after the backward pass.
template <typename Sc>
class Bind {
 public:
  Bind(Tape<Sc>& tape, ParamStore<Sc>& store) : tape_(tape), store_(store) {}

  int operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    const int id = tape_.param(store_.value(name));
    ids_.emplace(name, id);
    return id;
  }

  // Accumulate tape gradients into the store (call after tape.backward).
  void harvest() {
    for (const auto& [name, id] : ids_)
      if (tape_.has_grad(id)) store_.grad(name) += tape_.grad(id);
  }

 private:
  Tape<Sc>& tape_;
  ParamStore<Sc>& store_;
  std::map<std::string, int> ids_;
};

template <typename Sc>
void declare_linear(ParamStore<Sc>& p, const std::string& prefix, int in, int out) {
  p.add(prefix + ".W", in, out, Init::kGlorot);
  p.add(prefix + ".b", 1, out, Init::kZero);
}

template <typename Sc>
int linear(Tape<Sc>& t, Bind<Sc>& B, const std::string& prefix, int x) {
  return t.addrow(t.matmul(x, B(prefix + ".W")), B(prefix + ".b"));
}

// z = sigmoid(xWz + hUz + bz), r = sigmoid(xWr + hUr + br),
// c = tanh(xWc + (r*h)Uc + bc), h' = z*h + (1-z)*c.
template <typename Sc>
struct GruCell {
  static void declare(ParamStore<Sc>& p, const std::string& prefix, int in, int hidden) {
    for (const char* gate : {"z", "r", "c"}) {
      p.add(prefix + ".W" + gate, in, hidden, Init::kGlorot);
      p.add(prefix + ".U" + gate, hidden, hidden, Init::kGlorot);
      p.add(prefix + ".b" + gate, 1, hidden, Init::kZero);
    }
  }

  static int step(Tape<Sc>& t, Bind<Sc>& B, const std::string& prefix, int x, int h) {
    auto gate = [&](const char* g, int state) {
      return t.addrow(t.add(t.matmul(x, B(prefix + ".W" + g)), t.matmul(state, B(prefix + ".U" + g))),
                      B(prefix + ".b" + g));
    };
    const int z = t.sigmoid(gate("z", h));
    const int r = t.sigmoid(gate("r", h));
    const int rh = t.hadamard(r, h);
    const int c = t.tanh(t.addrow(
        t.add(t.matmul(x, B(prefix + ".Wc")), t.matmul(rh, B(prefix + ".Uc"))), B(prefix + ".bc")));
    const int one_minus_z = t.affine(z, Sc(-1), Sc(1));
    return t.add(t.hadamard(z, h), t.hadamard(one_minus_z, c));
  }
};

// Inverted dropout with a stateless per-element mask: a pure function of
// (seed, site, step, row, col). Identical sites see identical masks no matter
// what other computation ran before them.
template <typename Sc>
int dropout(Tape<Sc>& t, int x, double rate, std::uint64_t seed, std::uint64_t site,
            std::uint64_t step) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const auto& v = t.val(x);
  Mat<Sc> mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  const Sc inv_keep = static_cast<Sc>(1.0 / keep);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      const double u = static_cast<double>(
                           element_hash(seed, site, step, static_cast<std::uint64_t>(r),
                                        static_cast<std::uint64_t>(c)) >>
                           11) *
                       0x1.0p-53;
      mask(r, c) = u < keep ? inv_keep : Sc(0);
    }
  return t.hadamard(x, t.constant(std::move(mask)));
}

inline std::uint64_t dropout_site(std::string_view label, std::uint64_t salt = 0) {
  return mix_seed(fnv1a64(label), salt);
}

// Forward-pass training context; a null TrainMode* means inference (no
// dropout). `step` should differ per (optimizer step, example).
struct TrainMode {
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

template <typename Sc>
int stack_rows(Tape<Sc>& t, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("stack_rows: empty");
  int out = ids[0];
  for (std::size_t i = 1; i < ids.size(); ++i) out = t.concat_rows(out, ids[i]);
  return out;
}

template <typename Sc>
int argmax_row(const Mat<Sc>& row, int r = 0) {
  int best = 0;
  for (int c = 1; c < row.cols(); ++c)
    if (row(r, c) > row(r, best)) best = c;  // ties resolve to the lowest index
  return best;
}

// Seeded Gaussian projection onto `width` columns (identity when the width
// already matches); bridges the fixed-width embedding store to models
// declared narrower, keeping the map a pure function of (seed, widths).
template <typename Sc>
Mat<Sc> project_columns(const Mat<Sc>& x, int width, std::uint64_t seed) {
  if (static_cast<int>(x.cols()) == width) return x;
  Rng rng(mix_seed(seed, "project." + std::to_string(width)));
  Mat<Sc> p(x.cols(), width);
  const Sc scale = Sc(1) / static_cast<Sc>(std::sqrt(static_cast<double>(x.cols())));
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) p(r, c) = static_cast<Sc>(rng.normal()) * scale;
  return x * p;
}

// Fixed sinusoidal position table: pe(pos, 2i) = sin(pos / 10000^(2i/d)),
// pe(pos, 2i+1) = cos(same).
template <typename Sc>
Mat<Sc> sinusoidal_positions(int length, int width) {
  Mat<Sc> pe(length, width);
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < width; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / width);
      pe(pos, i) = static_cast<Sc>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

}  // namespace convflip
