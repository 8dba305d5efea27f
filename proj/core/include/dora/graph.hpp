#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include "dora/tensor.hpp"

namespace dora {

/// Reverse-mode tape over rank-2 tensors.
///
/// Ops append nodes in construction order, which is already topological, so
/// backward() is a single reverse sweep. A graph built with recording=false
/// (or whose leaves carry needs_grad=false) stores no adjoint closures and
/// doubles as the plain inference path: teacher and student share one forward
/// implementation.
template <typename S>
class Graph {
 public:
  using Var = int32_t;

  explicit Graph(bool recording = true) : recording_(recording) {}

  Var leaf(Tensor<S> value, bool needs_grad) {
    return push(std::move(value), needs_grad && recording_, {});
  }

  Var constant(Tensor<S> value) { return push(std::move(value), false, {}); }

  const Tensor<S>& value(Var v) const { return nodes_[v].value; }
  const Tensor<S>& grad(Var v) const { return nodes_[v].grad; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }
  size_t num_nodes() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    Var out = push(dora::matmul(value(a), value(b)), any_grad({a, b}), {a, b});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, b, out] {
        const Tensor<S>& g = nodes_[out].grad;
        if (nodes_[a].needs_grad) add_inplace(nodes_[a].grad, dora::matmul_nt(g, value(b)));
        if (nodes_[b].needs_grad) add_inplace(nodes_[b].grad, dora::matmul_tn(value(a), g));
      };
    }
    return out;
  }

  /// a @ b^T
  Var matmul_nt(Var a, Var b) {
    Var out = push(dora::matmul_nt(value(a), value(b)), any_grad({a, b}), {a, b});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, b, out] {
        const Tensor<S>& g = nodes_[out].grad;
        if (nodes_[a].needs_grad) add_inplace(nodes_[a].grad, dora::matmul(g, value(b)));
        if (nodes_[b].needs_grad) add_inplace(nodes_[b].grad, dora::matmul_tn(g, value(a)));
      };
    }
    return out;
  }

  Var add(Var a, Var b) {
    Var out = push(dora::add(value(a), value(b)), any_grad({a, b}), {a, b});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, b, out] {
        const Tensor<S>& g = nodes_[out].grad;
        if (nodes_[a].needs_grad) add_inplace(nodes_[a].grad, g);
        if (nodes_[b].needs_grad) add_inplace(nodes_[b].grad, g);
      };
    }
    return out;
  }

  /// (r x c) + broadcast row vector (1 x c)
  Var add_rowvec(Var a, Var b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    detail::check(B.rows() == 1 && B.cols() == A.cols(), "add_rowvec: bad shapes");
    Tensor<S> c = A;
    for (int64_t r = 0; r < c.rows(); ++r)
      for (int64_t j = 0; j < c.cols(); ++j) c(r, j) += B(0, j);
    Var out = push(std::move(c), any_grad({a, b}), {a, b});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, b, out] {
        const Tensor<S>& g = nodes_[out].grad;
        if (nodes_[a].needs_grad) add_inplace(nodes_[a].grad, g);
        if (nodes_[b].needs_grad) {
          Tensor<S>& gb = nodes_[b].grad;
          for (int64_t r = 0; r < g.rows(); ++r)
            for (int64_t j = 0; j < g.cols(); ++j) gb(0, j) += g(r, j);
        }
      };
    }
    return out;
  }

  Var scale(Var a, S s) {
    Var out = push(dora::scale(value(a), s), any_grad({a}), {a});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, s, out] {
        if (nodes_[a].needs_grad) add_inplace(nodes_[a].grad, nodes_[out].grad, s);
      };
    }
    return out;
  }

  Var slice_cols(Var a, int64_t c0, int64_t c1) {
    const Tensor<S>& A = value(a);
    detail::check(0 <= c0 && c0 < c1 && c1 <= A.cols(), "slice_cols: bad range");
    Tensor<S> c({A.rows(), c1 - c0});
    for (int64_t r = 0; r < A.rows(); ++r)
      for (int64_t j = c0; j < c1; ++j) c(r, j - c0) = A(r, j);
    Var out = push(std::move(c), any_grad({a}), {a});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, c0, out] {
        if (!nodes_[a].needs_grad) return;
        const Tensor<S>& g = nodes_[out].grad;
        Tensor<S>& ga = nodes_[a].grad;
        for (int64_t r = 0; r < g.rows(); ++r)
          for (int64_t j = 0; j < g.cols(); ++j) ga(r, c0 + j) += g(r, j);
      };
    }
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    detail::check(!parts.empty(), "concat_cols: empty");
    int64_t r = value(parts[0]).rows();
    int64_t c = 0;
    for (Var p : parts) {
      detail::check(value(p).rows() == r, "concat_cols: row mismatch");
      c += value(p).cols();
    }
    Tensor<S> out_t({r, c});
    int64_t off = 0;
    for (Var p : parts) {
      const Tensor<S>& P = value(p);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < P.cols(); ++j) out_t(i, off + j) = P(i, j);
      off += P.cols();
    }
    Var out = push(std::move(out_t), any_grad(parts), parts);
    if (tracked(out)) {
      nodes_[out].backward = [this, parts, out] {
        const Tensor<S>& g = nodes_[out].grad;
        int64_t off2 = 0;
        for (Var p : parts) {
          Tensor<S>& gp = nodes_[p].grad;
          int64_t pc = value(p).cols();
          if (nodes_[p].needs_grad)
            for (int64_t i = 0; i < g.rows(); ++i)
              for (int64_t j = 0; j < pc; ++j) gp(i, j) += g(i, off2 + j);
          off2 += pc;
        }
      };
    }
    return out;
  }

  Var slice_rows(Var a, int64_t r0, int64_t r1) {
    Var out = push(dora::slice_rows(value(a), r0, r1), any_grad({a}), {a});
    if (tracked(out)) {
      nodes_[out].backward = [this, a, r0, out] {
        if (!nodes_[a].needs_grad) return;
        const Tensor<S>& g = nodes_[out].grad;
        Tensor<S>& ga = nodes_[a].grad;
        for (int64_t r = 0; r < g.rows(); ++r)
          for (int64_t j = 0; j < g.cols(); ++j) ga(r0 + r, j) += g(r, j);
      };
    }
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    detail::check(!parts.empty(), "concat_rows: empty");
    int64_t c = value(parts[0]).cols();
    int64_t r = 0;
    for (Var p : parts) {
      detail::check(value(p).cols() == c, "concat_rows: col mismatch");
      r += value(p).rows();
    }
    Tensor<S> out_t({r, c});
    int64_t off = 0;
    for (Var p : parts) {
      const Tensor<S>& P = value(p);
      std::copy(P.data.begin(), P.data.end(), out_t.data.begin() + off * c);
      off += P.rows();
    }
    Var out = push(std::move(out_t), any_grad(parts), parts);
    if (tracked(out)) {
      nodes_[out].backward = [this, parts, out] {
        const Tensor<S>& g = nodes_[out].grad;
        int64_t off2 = 0;
        for (Var p : parts) {
          int64_t pr = value(p).rows();
          if (nodes_[p].needs_grad) {
            Tensor<S>& gp = nodes_[p].grad;
            for (int64_t i = 0; i < pr; ++i)
              for (int64_t j = 0; j < g.cols(); ++j) gp(i, j) += g(off2 + i, j);
          }
          off2 += pr;
        }
      };
    }
    return out;
  }

  /// Row-wise layer normalization: y = (x - mean) / sqrt(var + eps) * gain + bias.
  /// gain and bias are (1 x c).
  Var layernorm(Var x, Var gain, Var bias, S eps) {
    const Tensor<S>& X = value(x);
    const Tensor<S>& G = value(gain);
    const Tensor<S>& B = value(bias);
    detail::check(G.rows() == 1 && G.cols() == X.cols(), "layernorm: bad gain shape");
    detail::check(B.rows() == 1 && B.cols() == X.cols(), "layernorm: bad bias shape");
    int64_t c = X.cols();
    Tensor<S> y({X.rows(), c});
    for (int64_t r = 0; r < X.rows(); ++r) {
      S mu = S(0), var = S(0);
      for (int64_t j = 0; j < c; ++j) mu += X(r, j);
      mu /= S(c);
      for (int64_t j = 0; j < c; ++j) {
        S d = X(r, j) - mu;
        var += d * d;
      }
      var /= S(c);
      S inv = S(1) / std::sqrt(var + eps);
      for (int64_t j = 0; j < c; ++j)
        y(r, j) = (X(r, j) - mu) * inv * G(0, j) + B(0, j);
    }
    Var out = push(std::move(y), any_grad({x, gain, bias}), {x, gain, bias});
    if (tracked(out)) {
      nodes_[out].backward = [this, x, gain, bias, eps, out] {
        const Tensor<S>& g = nodes_[out].grad;
        const Tensor<S>& X2 = value(x);
        const Tensor<S>& G2 = value(gain);
        int64_t c2 = X2.cols();
        for (int64_t r = 0; r < X2.rows(); ++r) {
          // recompute per-row normalization
          S mu = S(0), var = S(0);
          for (int64_t j = 0; j < c2; ++j) mu += X2(r, j);
          mu /= S(c2);
          for (int64_t j = 0; j < c2; ++j) {
            S d = X2(r, j) - mu;
            var += d * d;
          }
          var /= S(c2);
          S inv = S(1) / std::sqrt(var + eps);

          S sum_gy = S(0), sum_gyx = S(0);
          for (int64_t j = 0; j < c2; ++j) {
            S xhat = (X2(r, j) - mu) * inv;
            S gy = g(r, j) * G2(0, j);
            sum_gy += gy;
            sum_gyx += gy * xhat;
          }
          for (int64_t j = 0; j < c2; ++j) {
            S xhat = (X2(r, j) - mu) * inv;
            if (nodes_[x].needs_grad) {
              S gy = g(r, j) * G2(0, j);
              nodes_[x].grad(r, j) +=
                  inv * (gy - sum_gy / S(c2) - xhat * sum_gyx / S(c2));
            }
            if (nodes_[gain].needs_grad)
              nodes_[gain].grad(0, j) += g(r, j) * xhat;
            if (nodes_[bias].needs_grad) nodes_[bias].grad(0, j) += g(r, j);
          }
        }
      };
    }
    return out;
  }

  /// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
  Var gelu(Var x) {
    const Tensor<S>& X = value(x);
    Tensor<S> y = X;
    for (auto& v : y.data)
      v = S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
    Var out = push(std::move(y), any_grad({x}), {x});
    if (tracked(out)) {
      nodes_[out].backward = [this, x, out] {
        if (!nodes_[x].needs_grad) return;
        const Tensor<S>& g = nodes_[out].grad;
        const Tensor<S>& X2 = value(x);
        Tensor<S>& gx = nodes_[x].grad;
        constexpr S inv_sqrt2pi = S(0.3989422804014326779399460599343818684);
        for (int64_t i = 0; i < X2.size(); ++i) {
          S v = X2[i];
          S cdf = S(0.5) * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
          S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
          gx[i] += g[i] * (cdf + v * pdf);
        }
      };
    }
    return out;
  }

  Var softmax_rows(Var x) {
    Var out = push(dora::softmax_rows(value(x)), any_grad({x}), {x});
    if (tracked(out)) {
      nodes_[out].backward = [this, x, out] {
        if (!nodes_[x].needs_grad) return;
        const Tensor<S>& p = nodes_[out].value;
        const Tensor<S>& g = nodes_[out].grad;
        Tensor<S>& gx = nodes_[x].grad;
        for (int64_t r = 0; r < p.rows(); ++r) {
          S dotv = S(0);
          for (int64_t j = 0; j < p.cols(); ++j) dotv += g(r, j) * p(r, j);
          for (int64_t j = 0; j < p.cols(); ++j)
            gx(r, j) += p(r, j) * (g(r, j) - dotv);
        }
      };
    }
    return out;
  }

  /// Scalar loss -sum_j t[j] * log(p[j] + eps) with constant target t.
  Var neg_dot_log(const Tensor<S>& target, Var p, S eps) {
    const Tensor<S>& P = value(p);
    detail::check(target.size() == P.size(), "neg_dot_log: size mismatch");
    S loss = S(0);
    for (int64_t i = 0; i < P.size(); ++i)
      loss -= target[i] * std::log(P[i] + eps);
    Var out = push(Tensor<S>({1, 1}, loss), any_grad({p}), {p});
    if (tracked(out)) {
      Tensor<S> t = target;
      nodes_[out].backward = [this, p, t, eps, out] {
        if (!nodes_[p].needs_grad) return;
        S g = nodes_[out].grad[0];
        Tensor<S>& gp = nodes_[p].grad;
        const Tensor<S>& P2 = value(p);
        for (int64_t i = 0; i < P2.size(); ++i)
          gp[i] -= g * t[i] / (P2[i] + eps);
      };
    }
    return out;
  }

  /// Accumulates d(loss)/d(leaf) into each tracked node's grad.
  void backward(Var loss) {
    detail::check(value(loss).size() == 1, "backward: loss must be scalar");
    for (auto& n : nodes_) {
      if (n.needs_grad) {
        n.grad = Tensor<S>(n.value.shape);
      }
    }
    detail::check(nodes_[loss].needs_grad,
                  "backward: loss does not depend on any differentiable leaf");
    nodes_[loss].grad[0] = S(1);
    for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].backward && nodes_[i].needs_grad) nodes_[i].backward();
    }
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  bool any_grad(const std::vector<Var>& parents) const {
    if (!recording_) return false;
    for (Var p : parents)
      if (nodes_[p].needs_grad) return true;
    return false;
  }

  bool tracked(Var v) const { return nodes_[v].needs_grad; }

  Var push(Tensor<S> value, bool needs_grad, const std::vector<Var>&) {
    nodes_.push_back(Node{std::move(value), {}, needs_grad, nullptr});
    return static_cast<Var>(nodes_.size() - 1);
  }

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace dora
