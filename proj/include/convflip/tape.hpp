#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace convflip {

template <typename Sc>
using Mat = Eigen::Matrix<Sc, Eigen::Dynamic, Eigen::Dynamic>;

// Reverse-mode autodiff over dynamically sized matrices. One tape per
// forward/backward pass; nodes are identified by index. Templated on the
// scalar so training runs in float and gradient checks in double.
//
// Convention: vectors are 1xD rows; matrices stack items as rows.
template <typename Sc>
class Tape {
 public:
  using M = Mat<Sc>;

  Tape() = default;
  Tape(const Tape&) = delete;             // backward closures capture `this`
  Tape& operator=(const Tape&) = delete;

  int size() const { return static_cast<int>(nodes_.size()); }

  const M& val(int id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.value;
  }

  const M& grad(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  bool needs_grad(int id) const { return nodes_[id].needs; }

  // Constant / input node: no gradient flows into it.
  int constant(M v) { return push(std::move(v), nullptr, false, {}); }

  // Parameter leaf referencing externally owned storage (alive for the
  // tape's lifetime). Gradient is accumulated on the tape.
  int param(const M& external) { return push(M(), &external, true, {}); }

  // Leaf with gradient tracking and owned storage (for gradient checks on
  // non-parameter inputs).
  int leaf(M v) { return push(std::move(v), nullptr, true, {}); }

  int add(int a, int b) {
    check_same(a, b, "add");
    M v = val(a) + val(b);
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      if (needs_grad(a)) accum(a, grad(id));
      if (needs_grad(b)) accum(b, grad(id));
    });
  }

  // a: NxD, row: 1xD broadcast over rows.
  int addrow(int a, int row) {
    if (val(row).rows() != 1 || val(a).cols() != val(row).cols())
      throw std::invalid_argument("addrow: shape mismatch");
    M v = val(a).rowwise() + val(row).row(0);
    return push(std::move(v), nullptr, any(a, row), [this, a, row](int id) {
      if (needs_grad(a)) accum(a, grad(id));
      if (needs_grad(row)) accum(row, grad(id).colwise().sum());
    });
  }

  // k*x + c elementwise.
  int affine(int a, Sc k, Sc c) {
    M v = (val(a).array() * k + c).matrix();
    return push(std::move(v), nullptr, needs_grad(a), [this, a, k](int id) {
      if (needs_grad(a)) accum(a, grad(id) * k);
    });
  }

  int scale(int a, Sc k) { return affine(a, k, Sc(0)); }

  int matmul(int a, int b) {
    if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: shape mismatch");
    M v = val(a) * val(b);
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      if (needs_grad(a)) accum(a, grad(id) * val(b).transpose());
      if (needs_grad(b)) accum(b, val(a).transpose() * grad(id));
    });
  }

  // A * B^T — keys/scores without materializing a transpose node.
  int matmul_nt(int a, int b) {
    if (val(a).cols() != val(b).cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
    M v = val(a) * val(b).transpose();
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      if (needs_grad(a)) accum(a, grad(id) * val(b));
      if (needs_grad(b)) accum(b, grad(id).transpose() * val(a));
    });
  }

  int hadamard(int a, int b) {
    check_same(a, b, "hadamard");
    M v = val(a).cwiseProduct(val(b));
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      if (needs_grad(a)) accum(a, grad(id).cwiseProduct(val(b)));
      if (needs_grad(b)) accum(b, grad(id).cwiseProduct(val(a)));
    });
  }

  int sigmoid(int a) {
    M v = (Sc(1) / (Sc(1) + (-val(a).array()).exp())).matrix();
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      const M& y = val(id);
      accum(a, grad(id).cwiseProduct((y.array() * (Sc(1) - y.array())).matrix()));
    });
  }

  int tanh(int a) {
    M v = val(a).array().tanh().matrix();
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      const M& y = val(id);
      accum(a, grad(id).cwiseProduct((Sc(1) - y.array().square()).matrix()));
    });
  }

  int relu(int a) {
    M v = val(a).cwiseMax(Sc(0));
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      M mask = (val(a).array() > Sc(0)).template cast<Sc>().matrix();
      accum(a, grad(id).cwiseProduct(mask));
    });
  }

  int softmax_rows(int a) {
    M v = val(a);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      auto row = v.row(r).array();
      const Sc m = row.maxCoeff();
      v.row(r) = (row - m).exp().matrix();
      v.row(r) /= v.row(r).sum();
    }
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      const M& y = val(id);
      const M& g = grad(id);
      M out(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const Sc dot = g.row(r).cwiseProduct(y.row(r)).sum();
        out.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
      }
      accum(a, std::move(out));
    });
  }

  int concat_rows(int a, int b) {
    if (val(a).cols() != val(b).cols()) throw std::invalid_argument("concat_rows: width mismatch");
    M v(val(a).rows() + val(b).rows(), val(a).cols());
    v << val(a), val(b);
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      const Eigen::Index ra = val(a).rows();
      if (needs_grad(a)) accum(a, grad(id).topRows(ra));
      if (needs_grad(b)) accum(b, grad(id).bottomRows(grad(id).rows() - ra));
    });
  }

  int concat_cols(int a, int b) {
    if (val(a).rows() != val(b).rows()) throw std::invalid_argument("concat_cols: height mismatch");
    M v(val(a).rows(), val(a).cols() + val(b).cols());
    v << val(a), val(b);
    return push(std::move(v), nullptr, any(a, b), [this, a, b](int id) {
      const Eigen::Index ca = val(a).cols();
      if (needs_grad(a)) accum(a, grad(id).leftCols(ca));
      if (needs_grad(b)) accum(b, grad(id).rightCols(grad(id).cols() - ca));
    });
  }

  // Rows [r0, r1).
  int slice_rows(int a, int r0, int r1) {
    if (r0 < 0 || r1 > val(a).rows() || r0 >= r1)
      throw std::invalid_argument("slice_rows: bad range");
    M v = val(a).middleRows(r0, r1 - r0);
    return push(std::move(v), nullptr, needs_grad(a), [this, a, r0, r1](int id) {
      if (!needs_grad(a)) return;
      M g = M::Zero(val(a).rows(), val(a).cols());
      g.middleRows(r0, r1 - r0) = grad(id);
      accum(a, std::move(g));
    });
  }

  // Columns [c0, c1).
  int slice_cols(int a, int c0, int c1) {
    if (c0 < 0 || c1 > val(a).cols() || c0 >= c1)
      throw std::invalid_argument("slice_cols: bad range");
    M v = val(a).middleCols(c0, c1 - c0);
    return push(std::move(v), nullptr, needs_grad(a), [this, a, c0, c1](int id) {
      if (!needs_grad(a)) return;
      M g = M::Zero(val(a).rows(), val(a).cols());
      g.middleCols(c0, c1 - c0) = grad(id);
      accum(a, std::move(g));
    });
  }

  // a: NxD, coeffs: 1xN — row j of the output is coeffs[j] * a_j.
  int scale_rows(int a, int coeffs) {
    if (val(coeffs).rows() != 1 || val(coeffs).cols() != val(a).rows())
      throw std::invalid_argument("scale_rows: shape mismatch");
    M v = val(coeffs).row(0).transpose().asDiagonal() * val(a);
    return push(std::move(v), nullptr, any(a, coeffs), [this, a, coeffs](int id) {
      const M& g = grad(id);
      if (needs_grad(a)) accum(a, val(coeffs).row(0).transpose().asDiagonal() * g);
      if (needs_grad(coeffs)) {
        M gc(1, g.rows());
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          gc(0, r) = g.row(r).cwiseProduct(val(a).row(r)).sum();
        accum(coeffs, std::move(gc));
      }
    });
  }

  // 1xD mean over rows.
  int mean_rows(int a) {
    M v = val(a).colwise().mean();
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      const Sc inv = Sc(1) / static_cast<Sc>(val(a).rows());
      accum(a, (M::Ones(val(a).rows(), 1) * grad(id)) * inv);
    });
  }

  // 1x1 sum of all entries.
  int sum(int a) {
    M v(1, 1);
    v(0, 0) = val(a).sum();
    return push(std::move(v), nullptr, needs_grad(a), [this, a](int id) {
      if (!needs_grad(a)) return;
      accum(a, M::Constant(val(a).rows(), val(a).cols(), grad(id)(0, 0)));
    });
  }

  // Row-wise layer normalization with learned gain/bias (1xD each).
  int layer_norm(int a, int gamma, int beta, Sc eps = Sc(1e-5)) {
    const M& x = val(a);
    if (val(gamma).rows() != 1 || val(gamma).cols() != x.cols() || val(beta).rows() != 1 ||
        val(beta).cols() != x.cols())
      throw std::invalid_argument("layer_norm: shape mismatch");
    auto xhat = std::make_shared<M>(x.rows(), x.cols());
    auto inv_sigma = std::make_shared<std::vector<Sc>>(x.rows());
    M v(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Sc mu = x.row(r).mean();
      const Sc var = (x.row(r).array() - mu).square().mean();
      const Sc is = Sc(1) / std::sqrt(var + eps);
      (*inv_sigma)[static_cast<std::size_t>(r)] = is;
      xhat->row(r) = ((x.row(r).array() - mu) * is).matrix();
      v.row(r) = xhat->row(r).cwiseProduct(val(gamma).row(0)) + val(beta).row(0);
    }
    return push(std::move(v), nullptr, any(a, gamma, beta),
                [this, a, gamma, beta, xhat, inv_sigma](int id) {
                  const M& g = grad(id);
                  if (needs_grad(gamma)) {
                    M gg = M::Zero(1, g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r)
                      gg.row(0) += g.row(r).cwiseProduct(xhat->row(r));
                    accum(gamma, std::move(gg));
                  }
                  if (needs_grad(beta)) accum(beta, g.colwise().sum());
                  if (needs_grad(a)) {
                    const Sc d = static_cast<Sc>(g.cols());
                    M ga(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      Eigen::Matrix<Sc, 1, Eigen::Dynamic> dxh =
                          g.row(r).cwiseProduct(val(gamma).row(0));
                      const Sc m1 = dxh.sum() / d;
                      const Sc m2 = dxh.cwiseProduct(xhat->row(r)).sum() / d;
                      ga.row(r) = ((dxh.array() - m1 - xhat->row(r).array() * m2) *
                                   (*inv_sigma)[static_cast<std::size_t>(r)])
                                      .matrix();
                    }
                    accum(a, std::move(ga));
                  }
                });
  }

  // Weighted sum over rows of softmax cross-entropy against integer targets.
  // Returns 1x1. Numerically stable; rows with weight 0 contribute nothing —
  // neither to the loss nor to the gradient.
  int xent_rows(int logits, std::vector<int> targets, std::vector<Sc> weights) {
    const M& x = val(logits);
    if (static_cast<Eigen::Index>(targets.size()) != x.rows() || weights.size() != targets.size())
      throw std::invalid_argument("xent_rows: target/weight count mismatch");
    auto probs = std::make_shared<M>(x.rows(), x.cols());
    Sc loss = Sc(0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const int t = targets[static_cast<std::size_t>(r)];
      if (t < 0 || t >= x.cols()) throw std::invalid_argument("xent_rows: target out of range");
      const Sc m = x.row(r).maxCoeff();
      const Sc lse = m + std::log((x.row(r).array() - m).exp().sum());
      probs->row(r) = (x.row(r).array() - lse).exp().matrix();
      loss += weights[static_cast<std::size_t>(r)] * (lse - x(r, t));
    }
    M v(1, 1);
    v(0, 0) = loss;
    return push(std::move(v), nullptr, needs_grad(logits),
                [this, logits, targets = std::move(targets), weights = std::move(weights),
                 probs](int id) {
                  if (!needs_grad(logits)) return;
                  const Sc g0 = grad(id)(0, 0);
                  M gl = *probs;
                  for (Eigen::Index r = 0; r < gl.rows(); ++r) {
                    gl(r, targets[static_cast<std::size_t>(r)]) -= Sc(1);
                    gl.row(r) *= g0 * weights[static_cast<std::size_t>(r)];
                  }
                  accum(logits, std::move(gl));
                });
  }

  // Seed d(loss)/d(loss) = 1 and sweep the tape in reverse.
  void backward(int loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1)
      throw std::invalid_argument("backward: loss must be 1x1");
    nodes_[loss].grad = M::Ones(1, 1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back && n.grad.size() > 0) n.back(id);
    }
  }

 private:
  struct Node {
    M value;
    const M* ext = nullptr;
    M grad;
    bool needs = false;
    std::function<void(int)> back;
  };

  bool any(int a, int b) { return needs_grad(a) || needs_grad(b); }
  bool any(int a, int b, int c) { return needs_grad(a) || needs_grad(b) || needs_grad(c); }

  void check_same(int a, int b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  void accum(int id, M g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0)
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  int push(M v, const M* ext, bool needs, std::function<void(int)> back) {
    Node n;
    n.value = std::move(v);
    n.ext = ext;
    n.needs = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace convflip
