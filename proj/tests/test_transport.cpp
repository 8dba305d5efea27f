#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dora/rng.hpp"
#include "dora/transport.hpp"

using namespace dora;

namespace {

// Brute-force float64 Sinkhorn in the direct domain: exp(scores/eps), then
// alternating row/column normalization until the marginals settle. Kept
// independent of the log-domain implementation it checks.
Tensor<double> oracle_sinkhorn(const Tensor<double>& scores, double eps,
                               double tol = 1e-12, int max_iters = 100000) {
  const int64_t k = scores.rows(), n = scores.cols();
  Tensor<double> m({k, n});
  double peak = -std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < scores.size(); ++i) peak = std::max(peak, scores[i]);
  for (int64_t i = 0; i < scores.size(); ++i) m[i] = std::exp((scores[i] - peak) / eps);

  for (int it = 0; it < max_iters; ++it) {
    for (int64_t i = 0; i < k; ++i) {
      double s = 0;
      for (int64_t j = 0; j < n; ++j) s += m(i, j);
      for (int64_t j = 0; j < n; ++j) m(i, j) *= (1.0 / k) / s;
    }
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t i = 0; i < k; ++i) s += m(i, j);
      for (int64_t i = 0; i < k; ++i) m(i, j) *= (1.0 / n) / s;
    }
    double worst = 0;
    for (int64_t i = 0; i < k; ++i) {
      double s = 0;
      for (int64_t j = 0; j < n; ++j) s += m(i, j);
      worst = std::max(worst, std::abs(s - 1.0 / k));
    }
    if (worst <= tol) break;
  }
  return m;
}

// independent summation loop for marginal_error
double oracle_marginal_error(const Tensor<double>& m) {
  double worst = 0;
  for (int64_t i = 0; i < m.rows(); ++i) {
    double s = 0;
    for (int64_t j = 0; j < m.cols(); ++j) s += m(i, j);
    worst = std::max(worst, std::abs(s - 1.0 / m.rows()));
  }
  for (int64_t j = 0; j < m.cols(); ++j) {
    double s = 0;
    for (int64_t i = 0; i < m.rows(); ++i) s += m(i, j);
    worst = std::max(worst, std::abs(s - 1.0 / m.cols()));
  }
  return worst;
}

Tensor<double> random_scores(int64_t k, int64_t n, Rng& rng, double spread) {
  Tensor<double> t({k, n});
  for (auto& v : t.data) v = rng.normal() * spread;
  return t;
}

}  // namespace

TEST_CASE("all-equal scores force the uniform plan") {
  Tensor<double> scores({2, 3}, 1.25);
  auto plan = sinkhorn(scores, {});
  REQUIRE(plan.converged);
  for (int64_t i = 0; i < plan.M.size(); ++i)
    CHECK(plan.M[i] == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
}

TEST_CASE("separated 2x2 scores concentrate on the diagonal") {
  Tensor<double> scores({2, 2});
  scores(0, 0) = 10.0;
  scores(0, 1) = 0.0;
  scores(1, 0) = 0.0;
  scores(1, 1) = 10.0;
  SinkhornConfig cfg;
  cfg.epsilon = 0.05;
  auto plan = sinkhorn(scores, cfg);
  REQUIRE(plan.converged);

  // frozen expectation: mass 0.5 on each diagonal entry, 0 off-diagonal
  CHECK(std::abs(plan.M(0, 0) - 0.5) < 1e-6);
  CHECK(std::abs(plan.M(1, 1) - 0.5) < 1e-6);
  CHECK(std::abs(plan.M(0, 1)) < 1e-6);
  CHECK(std::abs(plan.M(1, 0)) < 1e-6);

  auto oracle = oracle_sinkhorn(scores, cfg.epsilon);
  CHECK(max_abs_diff(plan.M, oracle) < 1e-6);
}

TEST_CASE("converged plans hit the uniform marginals") {
  Rng rng(100);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t k = 1 + rng.uniform_int(6);
    int64_t n = 1 + rng.uniform_int(30);
    auto scores = random_scores(k, n, rng, 2.0);
    SinkhornConfig cfg;
    auto plan = sinkhorn(scores, cfg);
    REQUIRE(plan.converged);
    for (int64_t i = 0; i < k; ++i) {
      double s = 0;
      for (int64_t j = 0; j < n; ++j) s += plan.M(i, j);
      CHECK(std::abs(s - 1.0 / static_cast<double>(k)) <= cfg.tolerance * 1.01);
    }
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t i = 0; i < k; ++i) s += plan.M(i, j);
      CHECK(std::abs(s - 1.0 / static_cast<double>(n)) <= cfg.tolerance * 1.01);
    }
    CHECK(plan.marginal_error <= cfg.tolerance);
  }
}

TEST_CASE("sinkhorn agrees with the float64 oracle on random instances") {
  Rng rng(200);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t k = 1 + rng.uniform_int(8);
    int64_t n = 1 + rng.uniform_int(64);
    auto scores = random_scores(k, n, rng, 3.0);
    SinkhornConfig cfg;
    cfg.tolerance = 1e-9;
    cfg.max_iterations = 5000;
    auto plan = sinkhorn(scores, cfg);
    REQUIRE(plan.converged);
    CHECK(max_abs_diff(plan.M, oracle_sinkhorn(scores, cfg.epsilon)) < 1e-6);
  }
}

TEST_CASE("additive constants in the scores cancel") {
  Rng rng(300);
  auto scores = random_scores(4, 9, rng, 1.5);
  auto shifted = scores;
  for (auto& v : shifted.data) v += 37.5;
  auto a = sinkhorn(scores, {});
  auto b = sinkhorn(shifted, {});
  CHECK(max_abs_diff(a.M, b.M) < 1e-8);
}

TEST_CASE("marginal error decreases monotonically across iterations") {
  Rng rng(400);
  for (int trial = 0; trial < 20; ++trial) {
    auto scores = random_scores(3, 12, rng, 2.5);
    std::vector<double> trace;
    SinkhornConfig cfg;
    cfg.tolerance = 1e-10;
    cfg.max_iterations = 200;
    sinkhorn(scores, cfg, &trace);
    REQUIRE(trace.size() > 1);
    for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] * (1 + 1e-12));
  }
}

TEST_CASE("large epsilon approaches the uniform plan, small epsilon sharpens") {
  Tensor<double> scores({2, 2});
  scores(0, 0) = 10.0;
  scores(1, 1) = 10.0;

  SinkhornConfig hot;
  hot.epsilon = 1e4;
  auto uniformish = sinkhorn(scores, hot);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(uniformish.M[i] == doctest::Approx(0.25).epsilon(1e-3));

  SinkhornConfig warm, cold;
  warm.epsilon = 1.0;
  cold.epsilon = 0.05;
  auto pw = sinkhorn(scores, warm);
  auto pc = sinkhorn(scores, cold);
  CHECK(pc.M(0, 0) > pw.M(0, 0)); // smaller eps concentrates the diagonal
}

TEST_CASE("log-domain survives scores that overflow the direct domain") {
  Tensor<double> scores({2, 3});
  scores(0, 0) = 500.0; // exp(500/0.05) = exp(10000) overflows everything
  scores(1, 2) = 400.0;
  auto plan = sinkhorn(scores, {});
  CHECK(plan.M.all_finite());
  CHECK(plan.converged);
}

TEST_CASE("non-finite scores are rejected") {
  Tensor<double> scores({2, 2});
  scores(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sinkhorn(scores, {}), std::invalid_argument);
}

TEST_CASE("unreachable tolerance reports non-convergence instead of failing") {
  Rng rng(500);
  auto scores = random_scores(3, 7, rng, 2.0);
  SinkhornConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-15;
  auto plan = sinkhorn(scores, cfg);
  CHECK(!plan.converged);
  CHECK(plan.iterations_used == 1);
  CHECK(plan.M.all_finite());
}

TEST_CASE("marginal_error examples and oracle cross-check") {
  SUBCASE("uniform plan has zero deviation") {
    Tensor<double> m({4, 6}, 1.0 / 24.0);
    CHECK(marginal_error(m) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("doubling one row deviates by 1/k") {
    int64_t k = 4, n = 6;
    Tensor<double> m({k, n}, 1.0 / static_cast<double>(k * n));
    for (int64_t j = 0; j < n; ++j) m(1, j) *= 2.0;
    CHECK(marginal_error(m) == doctest::Approx(1.0 / k).epsilon(1e-12));
  }
  SUBCASE("random 3x5 matrices match the naive summation loop") {
    Rng rng(600);
    for (int trial = 0; trial < 30; ++trial) {
      Tensor<double> m({3, 5});
      for (auto& v : m.data) v = rng.uniform();
      CHECK(marginal_error(m) == doctest::Approx(oracle_marginal_error(m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("float32 storage keeps oracle agreement within 1e-6") {
  Rng rng(700);
  for (int trial = 0; trial < 10; ++trial) {
    auto scores64 = random_scores(4, 16, rng, 2.0);
    auto scores32 = scores64.cast<float>();
    auto plan = sinkhorn(scores32, {});
    REQUIRE(plan.converged);
    auto oracle = oracle_sinkhorn(scores64, 0.05);
    CHECK(max_abs_diff(plan.M.cast<double>(), oracle) < 1e-6);
  }
}
