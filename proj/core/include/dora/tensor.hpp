#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dora/errors.hpp"

namespace dora {

/// Dense row-major tensor of rank 1..3. Rank-2 is the workhorse; frames are
/// rank-3 {height, width, channels}.
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::initializer_list<int64_t> dims, S fill = S(0))
      : shape(dims), data(count(shape), fill) {}
  explicit Tensor(std::vector<int64_t> dims, S fill = S(0))
      : shape(std::move(dims)), data(count(shape), fill) {}

  static int64_t count(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.at(1); }

  S& operator()(int64_t r, int64_t c) { return data[r * shape[1] + c]; }
  S operator()(int64_t r, int64_t c) const { return data[r * shape[1] + c]; }
  S& operator[](int64_t i) { return data[i]; }
  S operator[](int64_t i) const { return data[i]; }

  // rank-3 access: {h, w, c}
  S& at3(int64_t y, int64_t x, int64_t c) {
    return data[(y * shape[1] + x) * shape[2] + c];
  }
  S at3(int64_t y, int64_t x, int64_t c) const {
    return data[(y * shape[1] + x) * shape[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

namespace detail {
template <typename S>
using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<EigenMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const EigenMat<S>>;

template <typename S>
ConstMatMap<S> as_mat(const Tensor<S>& t) {
  return ConstMatMap<S>(t.data.data(), t.rows(), t.cols());
}
template <typename S>
MatMap<S> as_mat(Tensor<S>& t) {
  return MatMap<S>(t.data.data(), t.rows(), t.cols());
}

inline void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

template <typename S>
void require_rank2(const Tensor<S>& t, const char* name) {
  detail::check(t.rank() == 2, std::string(name) + ": rank-2 tensor expected");
}

/// C = A (r x m) * B (m x c)
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  detail::check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tensor<S> c({a.rows(), b.cols()});
  detail::as_mat(c).noalias() = detail::as_mat(a) * detail::as_mat(b);
  return c;
}

/// C = A (r x m) * B^T, with B (c x m)
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank2(a, "matmul_nt lhs");
  require_rank2(b, "matmul_nt rhs");
  detail::check(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Tensor<S> c({a.rows(), b.rows()});
  detail::as_mat(c).noalias() = detail::as_mat(a) * detail::as_mat(b).transpose();
  return c;
}

/// C = A^T (m x r) * B, with A (r x m), B (r x c)
template <typename S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank2(a, "matmul_tn lhs");
  require_rank2(b, "matmul_tn rhs");
  detail::check(a.rows() == b.rows(), "matmul_tn: inner dimensions differ");
  Tensor<S> c({a.cols(), b.cols()});
  detail::as_mat(c).noalias() = detail::as_mat(a).transpose() * detail::as_mat(b);
  return c;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.same_shape(b), "add: shape mismatch");
  Tensor<S> c = a;
  for (int64_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

template <typename S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b, S scale = S(1)) {
  detail::check(a.same_shape(b), "add_inplace: shape mismatch");
  for (int64_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

template <typename S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.same_shape(b), "hadamard: shape mismatch");
  Tensor<S> c = a;
  for (int64_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  Tensor<S> c = a;
  for (auto& v : c.data) v *= s;
  return c;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  require_rank2(a, "transpose");
  Tensor<S> c({a.cols(), a.rows()});
  detail::as_mat(c) = detail::as_mat(a).transpose();
  return c;
}

/// Row-wise softmax with max subtraction.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  require_rank2(a, "softmax_rows");
  Tensor<S> c = a;
  for (int64_t r = 0; r < a.rows(); ++r) {
    S m = c(r, 0);
    for (int64_t j = 1; j < a.cols(); ++j) m = std::max(m, c(r, j));
    S sum = S(0);
    for (int64_t j = 0; j < a.cols(); ++j) {
      c(r, j) = std::exp(c(r, j) - m);
      sum += c(r, j);
    }
    for (int64_t j = 0; j < a.cols(); ++j) c(r, j) /= sum;
  }
  return c;
}

template <typename S>
std::vector<S> row_sums(const Tensor<S>& a) {
  require_rank2(a, "row_sums");
  std::vector<S> out(a.rows(), S(0));
  for (int64_t r = 0; r < a.rows(); ++r)
    for (int64_t j = 0; j < a.cols(); ++j) out[r] += a(r, j);
  return out;
}

template <typename S>
std::vector<S> col_sums(const Tensor<S>& a) {
  require_rank2(a, "col_sums");
  std::vector<S> out(a.cols(), S(0));
  for (int64_t r = 0; r < a.rows(); ++r)
    for (int64_t j = 0; j < a.cols(); ++j) out[j] += a(r, j);
  return out;
}

/// Copy of rows [begin, end).
template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, int64_t begin, int64_t end) {
  require_rank2(a, "slice_rows");
  detail::check(0 <= begin && begin <= end && end <= a.rows(), "slice_rows: bad range");
  Tensor<S> c({end - begin, a.cols()});
  std::copy(a.data.begin() + begin * a.cols(), a.data.begin() + end * a.cols(),
            c.data.begin());
  return c;
}

template <typename S>
Tensor<S> row(const Tensor<S>& a, int64_t r) {
  return slice_rows(a, r, r + 1);
}

template <typename S>
S dot(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.size() == b.size(), "dot: size mismatch");
  S s = S(0);
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.size() == b.size(), "max_abs_diff: size mismatch");
  S m = S(0);
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename S>
S l2_norm(const Tensor<S>& a) {
  S s = S(0);
  for (S v : a.data) s += v * v;
  return std::sqrt(s);
}

/// Cosine similarity between two flat tensors; 0 if either is all-zero.
template <typename S>
S cosine_similarity(const Tensor<S>& a, const Tensor<S>& b) {
  S na = l2_norm(a), nb = l2_norm(b);
  if (na == S(0) || nb == S(0)) return S(0);
  return dot(a, b) / (na * nb);
}

}  // namespace dora
