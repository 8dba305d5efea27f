#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dora/graph.hpp"
#include "dora/rng.hpp"
#include "dora/tensor.hpp"

using namespace dora;

namespace {

Tensor<double> random_tensor(int64_t r, int64_t c, Rng& rng, double scale = 1.0) {
  Tensor<double> t({r, c});
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

// naive triple-loop matmul, the independent reference for the Eigen path
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.rows(), b.cols()});
  for (int64_t i = 0; i < a.rows(); ++i)
    for (int64_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (int64_t m = 0; m < a.cols(); ++m) s += a(i, m) * b(m, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul matches naive triple loop") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_tensor(5, 7, rng);
    auto b = random_tensor(7, 3, rng);
    auto expect = naive_matmul(a, b);
    CHECK(max_abs_diff(matmul(a, b), expect) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), expect) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), expect) < 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tensor<double> a({2, 3});
  Tensor<double> b({4, 5});
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(3);
  auto x = random_tensor(6, 9, rng, 3.0);
  auto p = softmax_rows(x);
  for (double s : row_sums(p)) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : p.data) CHECK(v >= 0.0);
}

TEST_CASE("rng streams are deterministic and fork-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(42);
  Rng f1 = base.fork("data");
  Rng f2 = base.fork("augment");
  CHECK(f1.next_u64() != f2.next_u64());

  Rng g1 = Rng(42).fork("data");
  Rng g2 = Rng(42).fork("data");
  for (int i = 0; i < 10; ++i) CHECK(g1.next_u64() == g2.next_u64());
}

TEST_CASE("rng uniform_int stays in range and covers values") {
  Rng rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    int64_t v = rng.uniform_int(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
    counts[static_cast<size_t>(v)]++;
  }
  for (int c : counts) CHECK(c > 700); // 1000 expected each
}

// ---------------------------------------------------------------------------
// adjoint checks: analytic gradient vs central finite differences at float64

namespace {

// Builds a scalar that exercises the given op inside a fixed pipeline, then
// compares d(out)/d(leaf) against central differences.
template <typename BuildFn>
void check_gradients(Tensor<double> leaf_init, BuildFn build, double tol = 1e-7) {
  Graph<double> g;
  auto leaf = g.leaf(leaf_init, true);
  auto loss = build(g, leaf);
  g.backward(loss);
  Tensor<double> analytic = g.grad(leaf);

  const double h = 1e-6;
  for (int64_t i = 0; i < leaf_init.size(); ++i) {
    auto probe = [&](double delta) {
      Tensor<double> shifted = leaf_init;
      shifted[i] += delta;
      Graph<double> g2;
      auto leaf2 = g2.leaf(shifted, true);
      auto loss2 = build(g2, leaf2);
      return g2.value(loss2)[0];
    };
    double fd = (probe(h) - probe(-h)) / (2 * h);
    CHECK(std::abs(fd - analytic[i]) <
          tol * std::max({1.0, std::abs(fd), std::abs(analytic[i])}));
  }
}

}  // namespace

TEST_CASE("graph adjoints match finite differences") {
  Rng rng(11);
  auto weights = random_tensor(4, 5, rng, 0.6);
  auto gain = random_tensor(1, 5, rng, 0.2);
  for (auto& v : gain.data) v += 1.0;
  auto bias = random_tensor(1, 5, rng, 0.2);
  auto target_t = random_tensor(1, 3, rng, 0.0);
  target_t(0, 0) = 0.2;
  target_t(0, 1) = 0.5;
  target_t(0, 2) = 0.3;
  auto proj = random_tensor(5, 3, rng, 0.6);

  SUBCASE("through matmul, layernorm, gelu, softmax, log loss") {
    auto x0 = random_tensor(2, 4, rng, 0.8);
    check_gradients(x0, [&](Graph<double>& g, Graph<double>::Var leaf) {
      auto w = g.constant(weights);
      auto gn = g.constant(gain);
      auto bs = g.constant(bias);
      auto pj = g.constant(proj);
      auto y = g.matmul(leaf, w);
      y = g.layernorm(y, gn, bs, 1e-6);
      y = g.gelu(y);
      y = g.slice_rows(y, 0, 1);
      auto p = g.softmax_rows(g.scale(g.matmul(y, pj), 1.7));
      return g.neg_dot_log(target_t, p, 1e-12);
    });
  }

  SUBCASE("through slicing, concatenation and broadcast adds") {
    auto x0 = random_tensor(3, 6, rng, 0.8);
    auto rowv = random_tensor(1, 3, rng, 0.5);
    check_gradients(x0, [&](Graph<double>& g, Graph<double>::Var leaf) {
      auto left = g.slice_cols(leaf, 0, 3);
      auto right = g.slice_cols(leaf, 3, 6);
      auto rv = g.constant(rowv);
      auto sum = g.add_rowvec(g.add(left, right), rv);
      auto back = g.concat_cols({sum, sum});
      auto stacked = g.concat_rows({back, back});
      auto att = g.softmax_rows(g.matmul_nt(stacked, stacked));
      auto pooled = g.slice_rows(g.matmul(att, stacked), 0, 1);
      auto p = g.softmax_rows(pooled);
      Tensor<double> t({1, 6}, 1.0 / 6.0);
      return g.neg_dot_log(t, p, 1e-12);
    });
  }

  SUBCASE("layernorm gain and bias gradients") {
    auto x = random_tensor(3, 5, rng, 0.9);
    check_gradients(gain, [&](Graph<double>& g, Graph<double>::Var leaf) {
      auto xin = g.constant(x);
      auto bs = g.constant(bias);
      auto y = g.layernorm(xin, leaf, bs, 1e-6);
      auto p = g.softmax_rows(g.slice_rows(y, 1, 2));
      Tensor<double> t({1, 5}, 0.2);
      return g.neg_dot_log(t, p, 1e-12);
    });
  }
}

TEST_CASE("backward accumulates across reused nodes") {
  // y = x used twice: d/dx (sum softmax(x @ x^T) path) must include both uses
  Graph<double> g;
  Tensor<double> x0({2, 2});
  x0(0, 0) = 0.3;
  x0(0, 1) = -0.2;
  x0(1, 0) = 0.1;
  x0(1, 1) = 0.4;
  auto x = g.leaf(x0, true);
  auto y = g.add(x, x);
  auto p = g.softmax_rows(y);
  Tensor<double> t({2, 2}, 0.25);
  auto loss = g.neg_dot_log(t, p, 1e-12);
  g.backward(loss);

  const double h = 1e-6;
  for (int64_t i = 0; i < 4; ++i) {
    auto probe = [&](double d) {
      Graph<double> g2;
      Tensor<double> shifted = x0;
      shifted[i] += d;
      auto x2 = g2.leaf(shifted, true);
      auto p2 = g2.softmax_rows(g2.add(x2, x2));
      return g2.value(g2.neg_dot_log(t, p2, 1e-12))[0];
    };
    double fd = (probe(h) - probe(-h)) / (2 * h);
    CHECK(std::abs(fd - g.grad(x)[i]) < 1e-7);
  }
}

TEST_CASE("non-recording graph stores no adjoints and computes same values") {
  Rng rng(5);
  auto x0 = random_tensor(3, 4, rng);
  Graph<double> rec(true), inf(false);
  auto a = rec.leaf(x0, true);
  auto b = inf.leaf(x0, true); // needs_grad ignored when not recording
  auto ra = rec.softmax_rows(rec.matmul_nt(a, a));
  auto rb = inf.softmax_rows(inf.matmul_nt(b, b));
  CHECK(max_abs_diff(rec.value(ra), inf.value(rb)) == 0.0);
  CHECK(!inf.needs_grad(rb));
}
