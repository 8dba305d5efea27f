#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dora/tensor.hpp"

namespace dora {

struct SinkhornConfig {
  double epsilon = 0.05;   // entropic coefficient
  double tolerance = 1e-6; // max allowed marginal deviation
  int max_iterations = 100;
};

/// Entropic transport plan between k prototypes and n patches.
/// Row sums are 1/k and column sums 1/n within `marginal_error` when
/// `converged` is set; otherwise the caller decides what to do with the
/// best plan found after max_iterations.
template <typename S>
struct TransportPlan {
  Tensor<S> M; // k x n, nonnegative
  int iterations_used = 0;
  S marginal_error = S(0);
  bool converged = false;
};

/// Max deviation of row sums from 1/k and column sums from 1/n.
template <typename S>
S marginal_error(const Tensor<S>& m) {
  require_rank2(m, "marginal_error");
  const int64_t k = m.rows(), n = m.cols();
  const double rk = 1.0 / static_cast<double>(k);
  const double rn = 1.0 / static_cast<double>(n);
  double worst = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += static_cast<double>(m(i, j));
    worst = std::max(worst, std::abs(s - rk));
  }
  for (int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < k; ++i) s += static_cast<double>(m(i, j));
    worst = std::max(worst, std::abs(s - rn));
  }
  return static_cast<S>(worst);
}

/// Sinkhorn-Knopp iteration on exp(scores / epsilon) toward uniform marginals
/// (1/k rows, 1/n columns). Runs in the log domain with max subtraction, so
/// large scores never overflow; internal arithmetic is float64 regardless of S.
///
/// Throws std::invalid_argument on non-finite scores. Failure to reach the
/// tolerance is not an error: the plan is returned with converged=false.
///
/// `error_trace`, when given, receives the marginal error after each
/// row+column sweep.
template <typename S>
TransportPlan<S> sinkhorn(const Tensor<S>& scores, const SinkhornConfig& cfg,
                          std::vector<double>* error_trace = nullptr) {
  require_rank2(scores, "sinkhorn scores");
  detail::check(cfg.epsilon > 0, "sinkhorn: epsilon must be > 0");
  detail::check(cfg.tolerance > 0, "sinkhorn: tolerance must be > 0");
  detail::check(cfg.max_iterations >= 1, "sinkhorn: max_iterations must be >= 1");
  if (!scores.all_finite())
    throw std::invalid_argument("sinkhorn: non-finite scores");

  const int64_t k = scores.rows(), n = scores.cols();
  const double log_rk = std::log(1.0 / static_cast<double>(k));
  const double log_rn = std::log(1.0 / static_cast<double>(n));

  // kernel in log domain
  std::vector<double> logk(static_cast<size_t>(k * n));
  for (int64_t i = 0; i < k * n; ++i)
    logk[i] = static_cast<double>(scores[i]) / cfg.epsilon;

  std::vector<double> f(k, 0.0), g(n, 0.0);

  auto lse_row = [&](int64_t i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) m = std::max(m, logk[i * n + j] + g[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += std::exp(logk[i * n + j] + g[j] - m);
    return m + std::log(s);
  };
  auto lse_col = [&](int64_t j) {
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < k; ++i) m = std::max(m, logk[i * n + j] + f[i]);
    double s = 0.0;
    for (int64_t i = 0; i < k; ++i) s += std::exp(logk[i * n + j] + f[i] - m);
    return m + std::log(s);
  };

  auto plan_entry = [&](int64_t i, int64_t j) {
    return std::exp(logk[i * n + j] + f[i] + g[j]);
  };
  auto current_error = [&] {
    double worst = 0.0;
    for (int64_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += plan_entry(i, j);
      worst = std::max(worst, std::abs(s - std::exp(log_rk)));
    }
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < k; ++i) s += plan_entry(i, j);
      worst = std::max(worst, std::abs(s - std::exp(log_rn)));
    }
    return worst;
  };

  TransportPlan<S> plan;
  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    for (int64_t i = 0; i < k; ++i) f[i] = log_rk - lse_row(i);
    for (int64_t j = 0; j < n; ++j) g[j] = log_rn - lse_col(j);
    err = current_error();
    if (error_trace) error_trace->push_back(err);
    if (err <= cfg.tolerance) {
      ++it;
      plan.converged = true;
      break;
    }
  }

  plan.M = Tensor<S>({k, n});
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < n; ++j)
      plan.M(i, j) = static_cast<S>(plan_entry(i, j));
  plan.iterations_used = it;
  plan.marginal_error = static_cast<S>(err);
  return plan;
}

}  // namespace dora
