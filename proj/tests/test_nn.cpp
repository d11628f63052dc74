#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "convflip/nn.hpp"
#include "oracle.hpp"

using namespace convflip;

namespace {

using Md = Mat<double>;

Md random_mat(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Md m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("initialization depends on name and seed, not registration order") {
  ParamStore<float> first(5);
  first.add("p.W", 3, 4, Init::kGlorot);
  first.add("q.W", 2, 2, Init::kGlorot);
  ParamStore<float> second(5);
  second.add("q.W", 2, 2, Init::kGlorot);
  second.add("p.W", 3, 4, Init::kGlorot);
  REQUIRE((first.value("p.W") - second.value("p.W")).cwiseAbs().maxCoeff() == 0.0f);
  REQUIRE((first.value("q.W") - second.value("q.W")).cwiseAbs().maxCoeff() == 0.0f);

  ParamStore<float> other(6);
  other.add("p.W", 3, 4, Init::kGlorot);
  REQUIRE((first.value("p.W") - other.value("p.W")).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("initializers respect their bounds and constants") {
  ParamStore<float> p(11);
  const auto& g = p.add("g", 16, 48, Init::kGlorot);
  const double limit = std::sqrt(6.0 / (16 + 48));
  REQUIRE(g.cwiseAbs().maxCoeff() <= static_cast<float>(limit));
  REQUIRE(g.cwiseAbs().maxCoeff() > 0.0f);
  REQUIRE(p.add("z", 4, 4, Init::kZero).cwiseAbs().maxCoeff() == 0.0f);
  REQUIRE((p.add("o", 4, 4, Init::kOne) - Mat<float>::Ones(4, 4)).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("duplicate and unknown parameter names are rejected") {
  ParamStore<float> p(1);
  p.add("w", 1, 1, Init::kZero);
  REQUIRE_THROWS_AS(p.add("w", 2, 2, Init::kZero), std::logic_error);
  REQUIRE_THROWS_AS(p.value("nope"), std::logic_error);
  REQUIRE(p.has("w"));
  REQUIRE(!p.has("nope"));
}

TEST_CASE("adam updates match the scalar reference over several steps") {
  ParamStore<double> p(0);
  p.add("w", 1, 1, Init::kOne);
  double w = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.01;
  const double grads[] = {0.3, -0.2, 0.7};
  for (int t = 1; t <= 3; ++t) {
    p.zero_grads();
    p.grad("w")(0, 0) = grads[t - 1];
    p.adam_step(lr);
    w = oracle::adam_update(w, grads[t - 1], m, v, t, lr);
    REQUIRE(p.step() == t);
    REQUIRE(p.value("w")(0, 0) == Catch::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("non-finite gradients are detected") {
  ParamStore<double> p(0);
  p.add("w", 2, 2, Init::kZero);
  REQUIRE(p.grads_finite());
  p.grad("w")(1, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE(!p.grads_finite());
}

TEST_CASE("linear layers compute x*W + b and feed gradients back through bind") {
  ParamStore<double> p(3);
  declare_linear(p, "lin", 3, 2);
  REQUIRE(p.value("lin.W").rows() == 3);
  REQUIRE(p.value("lin.W").cols() == 2);
  REQUIRE(p.value("lin.b").cwiseAbs().maxCoeff() == 0.0);

  Tape<double> tp;
  Bind<double> B(tp, p);
  REQUIRE(B("lin.W") == B("lin.W"));  // memoized: one leaf per parameter

  const Md x = random_mat(4, 3, 21);
  const int out = linear(tp, B, "lin", tp.constant(x));
  const Md expect = (x * p.value("lin.W")).rowwise() + p.value("lin.b").row(0);
  REQUIRE((tp.val(out) - expect).cwiseAbs().maxCoeff() < 1e-14);

  tp.backward(tp.sum(out));
  p.zero_grads();
  B.harvest();
  REQUIRE(p.grad("lin.W").cwiseAbs().maxCoeff() > 0.0);
  // d(sum)/db sums over the four rows.
  REQUIRE((p.grad("lin.b") - Md::Constant(1, 2, 4.0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gru cell matches the scalar reference at width one") {
  ParamStore<double> p(0);
  GruCell<double>::declare(p, "g", 1, 1);
  auto set = [&](const std::string& name, double v) { p.value(name)(0, 0) = v; };
  set("g.Wz", 0.4);
  set("g.Uz", -0.3);
  set("g.bz", 0.1);
  set("g.Wr", -0.6);
  set("g.Ur", 0.5);
  set("g.br", -0.2);
  set("g.Wc", 0.8);
  set("g.Uc", 0.7);
  set("g.bc", 0.05);
  const oracle::ScalarGru ref{0.4, -0.3, 0.1, -0.6, 0.5, -0.2, 0.8, 0.7, 0.05};

  Tape<double> tp;
  Bind<double> B(tp, p);
  const double xs[] = {0.9, -1.4, 0.3};
  double h_ref = 0.1;
  int h = tp.constant(Md::Constant(1, 1, 0.1));
  for (double x : xs) {
    h = GruCell<double>::step(tp, B, "g", tp.constant(Md::Constant(1, 1, x)), h);
    h_ref = ref.step(x, h_ref);
    REQUIRE(tp.val(h)(0, 0) == Catch::Approx(h_ref).epsilon(1e-12));
  }
}

TEST_CASE("dropout masks are stateless, inverted, and site-keyed") {
  const Md x = random_mat(4, 6, 77);

  // Rate zero is the identity node.
  {
    Tape<double> tp;
    const int in = tp.leaf(x);
    REQUIRE(dropout(tp, in, 0.0, 1, 2, 3) == in);
    REQUIRE_THROWS_AS(dropout(tp, in, 1.0, 1, 2, 3), std::invalid_argument);
  }

  // The mask depends only on (seed, site, step, row, col) — not on what else
  // the tape computed first.
  Md plain, offset;
  {
    Tape<double> tp;
    plain = tp.val(dropout(tp, tp.leaf(x), 0.5, 9, 3, 2));
  }
  {
    Tape<double> tp;
    const int junk = tp.constant(random_mat(2, 2, 5));
    (void)tp.add(junk, junk);
    offset = tp.val(dropout(tp, tp.leaf(x), 0.5, 9, 3, 2));
  }
  REQUIRE((plain - offset).cwiseAbs().maxCoeff() == 0.0);

  // Inverted scaling: entries are zero or x / keep.
  int zeros = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) {
      const bool dropped = plain(r, c) == 0.0;
      const bool scaled = plain(r, c) == 2.0 * x(r, c);
      REQUIRE((dropped || scaled));
      zeros += dropped ? 1 : 0;
    }
  REQUIRE(zeros > 0);

  // Different sites, steps, and seeds give different masks.
  {
    Tape<double> tp;
    const Md site4 = tp.val(dropout(tp, tp.leaf(x), 0.5, 9, 4, 2));
    const Md step3 = tp.val(dropout(tp, tp.leaf(x), 0.5, 9, 3, 3));
    const Md seed10 = tp.val(dropout(tp, tp.leaf(x), 0.5, 10, 3, 2));
    REQUIRE((site4 - plain).cwiseAbs().maxCoeff() > 0.0);
    REQUIRE((step3 - plain).cwiseAbs().maxCoeff() > 0.0);
    REQUIRE((seed10 - plain).cwiseAbs().maxCoeff() > 0.0);
  }

  // Kept fraction tracks the keep probability and preserves the mean.
  {
    Tape<double> tp;
    const int ones = tp.leaf(Md::Ones(200, 200));
    const Md out = tp.val(dropout(tp, ones, 0.3, 123, 1, 1));
    REQUIRE(out.mean() == Catch::Approx(1.0).margin(0.05));
  }

  // The gradient passes through the same mask.
  {
    Tape<double> tp;
    const int in = tp.leaf(x);
    const int out = dropout(tp, in, 0.5, 9, 3, 2);
    tp.backward(tp.sum(out));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 6; ++c)
        REQUIRE(tp.grad(in)(r, c) == (plain(r, c) == 0.0 ? 0.0 : 2.0));
  }
}

TEST_CASE("dropout sites derive from labels and salt") {
  REQUIRE(dropout_site("erc.cls1", 0) == dropout_site("erc.cls1", 0));
  REQUIRE(dropout_site("erc.cls1", 0) != dropout_site("erc.cls2", 0));
  REQUIRE(dropout_site("erc.cls1", 1) != dropout_site("erc.cls1", 2));
}

TEST_CASE("row stacking concatenates in order and rejects empty input") {
  Tape<double> tp;
  const Md a = random_mat(1, 3, 1);
  const Md b = random_mat(2, 3, 2);
  const Md c = random_mat(1, 3, 3);
  const int out = stack_rows(tp, {tp.constant(a), tp.constant(b), tp.constant(c)});
  REQUIRE(tp.val(out).rows() == 4);
  REQUIRE((tp.val(out).row(0) - a.row(0)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((tp.val(out).row(2) - b.row(1)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((tp.val(out).row(3) - c.row(0)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(stack_rows(tp, {}), std::invalid_argument);
}

TEST_CASE("row argmax resolves ties toward the lowest index") {
  Md m(2, 4);
  m << 0.1, 0.7, 0.7, 0.3,
       0.9, 0.2, 0.2, 0.95;
  REQUIRE(argmax_row(m, 0) == 1);
  REQUIRE(argmax_row(m, 1) == 3);
  REQUIRE(argmax_row(Md(Md::Constant(1, 3, 0.5))) == 0);
}

TEST_CASE("position table follows the interleaved sinusoid layout") {
  const Md pe = sinusoidal_positions<double>(3, 4);
  REQUIRE(pe(0, 0) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(pe(0, 1) == Catch::Approx(1.0));
  REQUIRE(pe(0, 2) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(pe(0, 3) == Catch::Approx(1.0));
  REQUIRE(pe(1, 0) == Catch::Approx(std::sin(1.0)));
  REQUIRE(pe(1, 1) == Catch::Approx(std::cos(1.0)));
  REQUIRE(pe(1, 2) == Catch::Approx(std::sin(0.01)));
  REQUIRE(pe(1, 3) == Catch::Approx(std::cos(0.01)));
  REQUIRE(pe(2, 0) == Catch::Approx(std::sin(2.0)));
}

TEST_CASE("column projection is the identity at matching width and seeded otherwise") {
  const Md x = random_mat(3, 8, 55);
  REQUIRE((project_columns(x, 8, 99) - x).cwiseAbs().maxCoeff() == 0.0);

  const Md a = project_columns(x, 4, 99);
  const Md b = project_columns(x, 4, 99);
  REQUIRE(a.rows() == 3);
  REQUIRE(a.cols() == 4);
  REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((project_columns(x, 4, 100) - a).cwiseAbs().maxCoeff() > 0.0);
  // The map is linear in its input.
  REQUIRE((project_columns<double>(2.0 * x, 4, 99) - 2.0 * a).cwiseAbs().maxCoeff() < 1e-12);
}
