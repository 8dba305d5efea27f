#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dora/encoder.hpp"
#include "dora/errors.hpp"
#include "dora/graph.hpp"
#include "dora/tensor.hpp"

namespace dora {

inline constexpr double kLogEps = 1e-12; // keeps -t*log(s) finite

enum class Role { student, teacher };

struct HeadConfig {
  int dim = 48;     // encoder embedding dim
  int out_dim = 256; // probability dimension D
  double tau_student = 0.1;
  double tau_teacher = 0.04;

  void validate() const {
    if (out_dim < 2) throw config_error("head config: out_dim must be >= 2");
    if (tau_student <= 0 || tau_teacher <= 0)
      throw config_error("head config: temperatures must be > 0");
    if (dim < 1) throw config_error("head config: dim must be >= 1");
  }
};

/// MLP d -> 4d -> d -> D followed by a scaled softmax. The teacher side keeps
/// a running center of its logits for collapse prevention.
template <typename S>
struct ProjectionHeadParams {
  Tensor<S> w1, b1, w2, b2, w3, b3;
  Tensor<S> center; // 1 x D, teacher state, not a learnable parameter
};

template <typename S, typename Fn>
void visit_params(ProjectionHeadParams<S>& p, Fn&& fn) {
  fn("w1", p.w1);
  fn("b1", p.b1);
  fn("w2", p.w2);
  fn("b2", p.b2);
  fn("w3", p.w3);
  fn("b3", p.b3);
}

template <typename S>
ProjectionHeadParams<S> init_head(const HeadConfig& cfg, Rng rng) {
  cfg.validate();
  ProjectionHeadParams<S> p;
  const int d = cfg.dim, hid = 4 * cfg.dim, out = cfg.out_dim;
  auto normal = [&rng](Tensor<S>& t, double std_dev) {
    for (auto& v : t.data) v = static_cast<S>(rng.normal() * std_dev);
  };
  p.w1 = Tensor<S>({d, hid});
  normal(p.w1, 0.02);
  p.b1 = Tensor<S>({1, hid});
  p.w2 = Tensor<S>({hid, d});
  normal(p.w2, 0.02);
  p.b2 = Tensor<S>({1, d});
  p.w3 = Tensor<S>({d, out});
  normal(p.w3, 0.02);
  p.b3 = Tensor<S>({1, out});
  p.center = Tensor<S>({1, out});
  return p;
}

template <typename S>
Tensor<S> head_logits(const ProjectionHeadParams<S>& p, const Tensor<S>& cls_embed) {
  if (!cls_embed.all_finite())
    throw numeric_error("head_forward: non-finite input");
  Tensor<S> h = add(matmul(cls_embed, p.w1), p.b1);
  for (auto& v : h.data)
    v = S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
  Tensor<S> b = add(matmul(h, p.w2), p.b2);
  for (auto& v : b.data)
    v = S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
  return add(matmul(b, p.w3), p.b3);
}

/// Probability vector over D outputs. Student: softmax(logits / tau_s).
/// Teacher: softmax((logits - center) / tau_t).
template <typename S>
Tensor<S> head_forward(const ProjectionHeadParams<S>& p, const Tensor<S>& cls_embed,
                       Role role, const HeadConfig& cfg) {
  Tensor<S> logits = head_logits(p, cls_embed);
  if (!logits.all_finite()) throw numeric_error("head_forward: non-finite logits");
  if (role == Role::teacher) {
    detail::check(p.center.same_shape(logits), "head_forward: center shape mismatch");
    for (int64_t i = 0; i < logits.size(); ++i) logits[i] -= p.center[i];
    return softmax_rows(scale(logits, S(1.0/ cfg.tau_teacher)));
  }
  return softmax_rows(scale(logits, S(1.0 / cfg.tau_student)));
}

// ---------------------------------------------------------------------------
// graph path (student side)

template <typename S>
struct HeadVars {
  using Var = typename Graph<S>::Var;
  Var w1, b1, w2, b2, w3, b3;
};

template <typename S>
HeadVars<S> lift_head(Graph<S>& g, const ProjectionHeadParams<S>& p, bool needs_grad) {
  HeadVars<S> v;
  v.w1 = g.leaf(p.w1, needs_grad);
  v.b1 = g.leaf(p.b1, needs_grad);
  v.w2 = g.leaf(p.w2, needs_grad);
  v.b2 = g.leaf(p.b2, needs_grad);
  v.w3 = g.leaf(p.w3, needs_grad);
  v.b3 = g.leaf(p.b3, needs_grad);
  return v;
}

template <typename S>
std::vector<typename Graph<S>::Var> head_leaf_list(const HeadVars<S>& v) {
  return {v.w1, v.b1, v.w2, v.b2, v.w3, v.b3};
}

template <typename S>
typename Graph<S>::Var student_prob_on_graph(Graph<S>& g, const HeadVars<S>& v,
                                             typename Graph<S>::Var cls_embed,
                                             double tau_student) {
  auto h = g.gelu(g.add_rowvec(g.matmul(cls_embed, v.w1), v.b1));
  auto b = g.gelu(g.add_rowvec(g.matmul(h, v.w2), v.b2));
  auto logits = g.add_rowvec(g.matmul(b, v.w3), v.b3);
  return g.softmax_rows(g.scale(logits, S(1.0 / tau_student)));
}

// ---------------------------------------------------------------------------
// teacher state updates

/// In-place EMA: t <- alpha * t + (1 - alpha) * s. The teacher never receives
/// gradients; this is its only update path.
template <typename S>
void ema_update_tensor(Tensor<S>& teacher, const Tensor<S>& student, S alpha) {
  detail::check(teacher.same_shape(student), "ema_update: shape mismatch");
  detail::check(alpha >= S(0) && alpha <= S(1), "ema_update: alpha must be in [0,1]");
  const double a = static_cast<double>(alpha);
  for (int64_t i = 0; i < teacher.size(); ++i)
    teacher[i] = static_cast<S>(a * static_cast<double>(teacher[i]) +
                                (1.0 - a) * static_cast<double>(student[i]));
}

/// Encoder plus projection head: the unit that EMA, the optimizer and the
/// checkpoint all operate on.
template <typename S>
struct ModelParams {
  EncoderParams<S> encoder;
  ProjectionHeadParams<S> head;
};

template <typename S, typename Fn>
void visit_params(ModelParams<S>& p, Fn&& fn) {
  visit_params(p.encoder, [&](const std::string& n, Tensor<S>& t) { fn("encoder." + n, t); });
  visit_params(p.head, [&](const std::string& n, Tensor<S>& t) { fn("head." + n, t); });
}

template <typename S>
void ema_update(ModelParams<S>& teacher, const ModelParams<S>& student, S alpha) {
  auto& student_mut = const_cast<ModelParams<S>&>(student);
  std::vector<Tensor<S>*> t_list, s_list;
  visit_params(teacher, [&](const std::string&, Tensor<S>& t) { t_list.push_back(&t); });
  visit_params(student_mut, [&](const std::string&, Tensor<S>& t) { s_list.push_back(&t); });
  detail::check(t_list.size() == s_list.size(), "ema_update: parameter count mismatch");
  for (size_t i = 0; i < t_list.size(); ++i)
    ema_update_tensor(*t_list[i], *s_list[i], alpha);
}

/// center <- m * center + (1 - m) * batch_mean
template <typename S>
void center_update(Tensor<S>& center, const Tensor<S>& teacher_batch_mean, S momentum) {
  detail::check(center.same_shape(teacher_batch_mean), "center_update: shape mismatch");
  detail::check(momentum >= S(0) && momentum <= S(1),
                "center_update: momentum must be in [0,1]");
  for (int64_t i = 0; i < center.size(); ++i)
    center[i] = momentum * center[i] + (S(1) - momentum) * teacher_batch_mean[i];
}

// ---------------------------------------------------------------------------
// losses

template <typename S>
void require_prob_vector(const Tensor<S>& p, const char* name) {
  double s = 0.0;
  for (int64_t i = 0; i < p.size(); ++i) {
    if (p[i] < S(0))
      throw std::invalid_argument(std::string(name) + ": negative probability");
    s += static_cast<double>(p[i]);
  }
  if (std::abs(s - 1.0) > 1e-5)
    throw std::invalid_argument(std::string(name) + ": probabilities must sum to 1");
}

/// H(teacher, student) = -sum_j t[j] * log(s[j] + eps).
template <typename S>
S cross_entropy(const Tensor<S>& teacher_p, const Tensor<S>& student_p) {
  detail::check(teacher_p.size() == student_p.size(), "cross_entropy: size mismatch");
  require_prob_vector(teacher_p, "cross_entropy teacher");
  require_prob_vector(student_p, "cross_entropy student");
  double loss = 0.0;
  for (int64_t i = 0; i < teacher_p.size(); ++i)
    loss -= static_cast<double>(teacher_p[i]) *
            std::log(static_cast<double>(student_p[i]) + kLogEps);
  return static_cast<S>(loss);
}

template <typename S>
struct LossValue {
  S value = S(0);
  int terms = 0;
};

/// Multi-object loss for one frame: for ordered view pairs (u, v), u != v,
/// the teacher output for view u supervises the student output for every
/// masked variant of view v. 2k terms for two views and k objects.
template <typename S>
LossValue<S> multi_object_loss(
    const std::vector<Tensor<S>>& teacher_per_view,
    const std::vector<std::vector<Tensor<S>>>& student_per_view_object) {
  detail::check(teacher_per_view.size() == student_per_view_object.size(),
                "multi_object_loss: view counts differ");
  detail::check(teacher_per_view.size() >= 2, "multi_object_loss: need two views");
  LossValue<S> out;
  const size_t n_views = teacher_per_view.size();
  for (size_t u = 0; u < n_views; ++u)
    for (size_t v = 0; v < n_views; ++v) {
      if (u == v) continue;
      detail::check(!student_per_view_object[v].empty(),
                    "multi_object_loss: missing student outputs for a view");
      for (const auto& sp : student_per_view_object[v]) {
        out.value += cross_entropy(teacher_per_view[u], sp);
        ++out.terms;
      }
    }
  return out;
}

/// Local-crop loss for one frame: every global-view teacher output supervises
/// every local-crop student output. 2m terms for two views and m crops.
template <typename S>
LossValue<S> local_loss(const std::vector<Tensor<S>>& teacher_per_view,
                        const std::vector<Tensor<S>>& student_locals) {
  detail::check(!teacher_per_view.empty(), "local_loss: missing teacher outputs");
  detail::check(!student_locals.empty(), "local_loss: missing student outputs");
  LossValue<S> out;
  for (const auto& tp : teacher_per_view)
    for (const auto& sp : student_locals) {
      out.value += cross_entropy(tp, sp);
      ++out.terms;
    }
  return out;
}

/// (1/T) * sum_t (object loss + local loss).
template <typename S>
S total_loss(const std::vector<S>& per_frame_obj, const std::vector<S>& per_frame_local) {
  detail::check(!per_frame_obj.empty(), "total_loss: empty clip");
  detail::check(per_frame_obj.size() == per_frame_local.size(),
                "total_loss: per-frame component counts differ");
  double sum = 0.0;
  for (size_t t = 0; t < per_frame_obj.size(); ++t)
    sum += static_cast<double>(per_frame_obj[t]) + static_cast<double>(per_frame_local[t]);
  return static_cast<S>(sum / static_cast<double>(per_frame_obj.size()));
}

}  // namespace dora
