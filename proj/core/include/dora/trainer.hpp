#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "dora/checkpoint.hpp"
#include "dora/config.hpp"
#include "dora/data.hpp"
#include "dora/distill.hpp"
#include "dora/encoder.hpp"
#include "dora/errors.hpp"
#include "dora/graph.hpp"
#include "dora/tracker.hpp"
#include "dora/transport.hpp"

namespace dora {

// ---------------------------------------------------------------------------
// learning-rate and EMA schedules

/// Linear warmup 0 -> lr_base over warmup_steps, then cosine decay to lr_min
/// at total_steps.
inline double lr_schedule(int64_t step, const TrainConfig& cfg) {
  detail::check(step >= 0 && step <= cfg.total_steps, "lr_schedule: step out of range");
  if (step < cfg.warmup_steps)
    return cfg.lr_base * static_cast<double>(step) / cfg.warmup_steps;
  if (cfg.total_steps == cfg.warmup_steps) return cfg.lr_base;
  double progress = static_cast<double>(step - cfg.warmup_steps) /
                    static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_base - cfg.lr_min) *
                          (1.0 + std::cos(std::numbers::pi * progress));
}

/// Constant alpha, or cosine ramp from the configured value toward 1.
inline double ema_alpha_at(int64_t step, const TrainConfig& cfg) {
  if (cfg.ema_schedule == "constant") return cfg.ema_alpha;
  double progress = std::min(1.0, static_cast<double>(step) / cfg.total_steps);
  return 1.0 - (1.0 - cfg.ema_alpha) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
struct OptSlot {
  Tensor<S> m; // first moment (adam) or momentum buffer (sgd)
  Tensor<S> v; // second moment (adam only)
};

template <typename S>
struct OptState {
  std::string kind = "adam"; // adam | sgd
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double sgd_momentum = 0.9;
  int64_t t = 0;
  std::vector<OptSlot<S>> slots;

  void init(const std::vector<Tensor<S>*>& params) {
    slots.clear();
    for (const Tensor<S>* p : params) {
      OptSlot<S> s;
      s.m = Tensor<S>(p->shape);
      if (kind == "adam") s.v = Tensor<S>(p->shape);
      slots.push_back(std::move(s));
    }
    t = 0;
  }
};

/// One optimizer step with decoupled weight decay. Throws numeric_error on
/// non-finite gradients.
template <typename S>
void optimizer_step(const std::vector<Tensor<S>*>& params,
                    const std::vector<Tensor<S>>& grads, double lr,
                    double weight_decay, OptState<S>& state) {
  detail::check(params.size() == grads.size(), "optimizer_step: grads size mismatch");
  detail::check(params.size() == state.slots.size(),
                "optimizer_step: state not initialized for these params");
  for (const auto& g : grads)
    if (!g.all_finite()) throw numeric_error("optimizer_step: non-finite gradients");

  state.t += 1;
  if (state.kind == "adam") {
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<S>& p = *params[i];
      const Tensor<S>& g = grads[i];
      detail::check(p.same_shape(g), "optimizer_step: grad shape mismatch");
      OptSlot<S>& s = state.slots[i];
      for (int64_t j = 0; j < p.size(); ++j) {
        double gj = static_cast<double>(g[j]);
        double mj = state.beta1 * s.m[j] + (1.0 - state.beta1) * gj;
        double vj = state.beta2 * s.v[j] + (1.0 - state.beta2) * gj * gj;
        s.m[j] = static_cast<S>(mj);
        s.v[j] = static_cast<S>(vj);
        double update = (mj / bc1) / (std::sqrt(vj / bc2) + state.eps);
        p[j] = static_cast<S>(p[j] - lr * update - lr * weight_decay * p[j]);
      }
    }
  } else {
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<S>& p = *params[i];
      const Tensor<S>& g = grads[i];
      detail::check(p.same_shape(g), "optimizer_step: grad shape mismatch");
      OptSlot<S>& s = state.slots[i];
      for (int64_t j = 0; j < p.size(); ++j) {
        double mj = state.sgd_momentum * s.m[j] + static_cast<double>(g[j]);
        s.m[j] = static_cast<S>(mj);
        p[j] = static_cast<S>(p[j] - lr * mj - lr * weight_decay * p[j]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// per-clip forward: teacher signals (constants) + student loss graph

template <typename S>
struct ClipViews {
  std::vector<ViewSet<S>> frames; // one ViewSet per clip frame
};

/// Base-crops every frame with one shared window, then builds the per-frame
/// multi-crop views.
template <typename S>
ClipViews<S> build_clip_views(const std::vector<Frame<S>>& frames, int crop_size,
                              const AugmentConfig& aug, Rng window_rng,
                              Rng augment_rng) {
  detail::check(!frames.empty(), "build_clip_views: empty clip");
  CropWindow window =
      choose_crop_window(frames[0].height, frames[0].width, crop_size, window_rng);
  ClipViews<S> out;
  for (size_t t = 0; t < frames.size(); ++t) {
    Frame<S> base = base_crop(frames[t], window);
    out.frames.push_back(make_views(base, aug, augment_rng.fork(static_cast<uint64_t>(t))));
  }
  return out;
}

/// Everything the student loss needs from the teacher, all constants with
/// respect to the student graph: per-view output probabilities, per-object
/// masks from refined cross-attention, and the raw logits for centering.
template <typename S>
struct TeacherSignals {
  std::vector<std::array<Tensor<S>, 2>> probs;              // [frame][view], 1 x D
  std::vector<std::array<std::vector<Tensor<S>>, 2>> masks; // [frame][view][object], h x w
  std::vector<Tensor<S>> logits;                            // every teacher head forward
  HeadSubset heads;
  double sk_error = 0.0;
  bool sk_converged = true;
};

/// Runs the teacher over all global views of a clip: discovers objects in the
/// first frame's first view, refines prototypes through the transport plan,
/// and tracks them into every (frame, view) pair's patch keys to produce the
/// masking maps.
template <typename S>
TeacherSignals<S> teacher_signals(const ModelParams<S>& teacher,
                                  const HeadConfig& hcfg, const ClipViews<S>& views,
                                  int k, uint64_t head_seed,
                                  const SinkhornConfig& sk_cfg) {
  detail::check(!views.frames.empty(), "teacher_signals: empty clip");
  const EncoderConfig& ecfg = teacher.encoder.cfg;
  TeacherSignals<S> out;

  // encode all global views
  std::vector<std::array<EncoderOutput<S>, 2>> enc(views.frames.size());
  for (size_t t = 0; t < views.frames.size(); ++t)
    for (int v = 0; v < 2; ++v)
      enc[t][v] = encode(teacher.encoder, views.frames[t].global[v].image);

  // object discovery on the first frame's first view
  const EncoderOutput<S>& ref = enc[0][0];
  out.heads = sample_heads(static_cast<int>(ref.attn.size()), k, head_seed);
  Tensor<S> a_cls = cls_attention(ref.attn);
  Tensor<S> a_subset({static_cast<int64_t>(k), a_cls.cols()});
  for (int i = 0; i < k; ++i)
    for (int64_t j = 0; j < a_cls.cols(); ++j)
      a_subset(i, j) = a_cls(out.heads.indices[i], j);
  ObjectPrototypes<S> raw = object_prototypes(a_subset, ref.patch_queries());
  auto [plan, refined] = refine_prototypes(raw, ref.patch_embeddings(), sk_cfg);
  out.sk_error = static_cast<double>(plan.marginal_error);
  out.sk_converged = plan.converged;

  const int gsize = views.frames[0].global[0].image.height;
  const int grid = gsize / ecfg.patch;

  out.probs.resize(views.frames.size());
  out.masks.resize(views.frames.size());
  for (size_t t = 0; t < views.frames.size(); ++t) {
    for (int v = 0; v < 2; ++v) {
      Tensor<S> logits = head_logits(teacher.head, enc[t][v].cls_embedding());
      out.logits.push_back(logits);
      Tensor<S> centered = logits;
      for (int64_t i = 0; i < centered.size(); ++i)
        centered[i] -= teacher.head.center[i];
      out.probs[t][v] =
          softmax_rows(scale(centered, S(1.0 / hcfg.tau_teacher)));

      CrossAttentionMap<S> track =
          cross_attention(refined, enc[t][v].patch_keys(), ecfg.dim, static_cast<int>(t));
      out.masks[t][v].reserve(k);
      for (int i = 0; i < k; ++i)
        out.masks[t][v].push_back(
            upsample_map(row(track.T, i), grid, grid, gsize, gsize));
    }
  }
  return out;
}

template <typename S>
struct ClipLossInfo {
  typename Graph<S>::Var loss{};      // scalar: (obj + local) / T
  double obj_value = 0.0;             // sum over frames of per-frame object loss
  double local_value = 0.0;           // sum over frames of per-frame local loss
  std::vector<int> obj_terms_per_frame;
  std::vector<int> local_terms_per_frame;
};

/// Records the student forward for one clip on `g`: per frame, the k masked
/// variants of each global view feed the multi-object loss against the
/// teacher's other-view output, and each local crop feeds the local loss
/// against both teacher views. Returns the scalar clip loss node.
template <typename S>
ClipLossInfo<S> build_clip_loss(Graph<S>& g, const EncoderVars<S>& enc_vars,
                                const HeadVars<S>& head_vars,
                                const EncoderConfig& ecfg, const HeadConfig& hcfg,
                                const ClipViews<S>& views,
                                const TeacherSignals<S>& sig) {
  using Var = typename Graph<S>::Var;
  const size_t T = views.frames.size();
  detail::check(sig.probs.size() == T && sig.masks.size() == T,
                "build_clip_loss: teacher signals do not match clip");

  ClipLossInfo<S> info;
  Var obj_sum{-1}, local_sum{-1};
  auto accumulate = [&g](Var& acc, Var term) {
    acc = (acc < 0) ? term : g.add(acc, term);
  };

  auto student_prob = [&](const Frame<S>& image) {
    EncodeVars<S> e = encode_on_graph(g, ecfg, enc_vars, image);
    Var cls = g.slice_rows(e.z, 0, 1);
    return student_prob_on_graph(g, head_vars, cls, hcfg.tau_student);
  };

  for (size_t t = 0; t < T; ++t) {
    int obj_terms = 0, local_terms = 0;

    for (int v = 0; v < 2; ++v) {
      const Frame<S>& view = views.frames[t].global[v].image;
      for (const Tensor<S>& mask : sig.masks[t][v]) {
        Var sp = student_prob(apply_mask(view, mask));
        for (int u = 0; u < 2; ++u) {
          if (u == v) continue;
          Var term = g.neg_dot_log(sig.probs[t][u], sp, static_cast<S>(kLogEps));
          info.obj_value += static_cast<double>(g.value(term)[0]);
          accumulate(obj_sum, term);
          ++obj_terms;
        }
      }
    }

    for (const auto& local : views.frames[t].local) {
      Var sp = student_prob(local.image);
      for (int v = 0; v < 2; ++v) {
        Var term = g.neg_dot_log(sig.probs[t][v], sp, static_cast<S>(kLogEps));
        info.local_value += static_cast<double>(g.value(term)[0]);
        accumulate(local_sum, term);
        ++local_terms;
      }
    }

    info.obj_terms_per_frame.push_back(obj_terms);
    info.local_terms_per_frame.push_back(local_terms);
  }

  Var total = g.add(obj_sum, local_sum);
  info.loss = g.scale(total, S(1.0 / static_cast<double>(T)));
  return info;
}

// ---------------------------------------------------------------------------
// training loop

struct StepMetrics {
  int64_t step = 0;
  double loss_total = 0.0;
  double loss_obj = 0.0;   // per-frame average over the batch
  double loss_local = 0.0; // per-frame average over the batch
  double lr = 0.0;
  double ema_alpha = 0.0;
  double sk_err = 0.0; // worst marginal error across the batch's plans
  std::vector<int> obj_terms_per_frame;
  std::vector<int> local_terms_per_frame;
};

inline std::string metrics_csv_header() {
  return "step,loss_total,loss_obj,loss_local,lr,ema_alpha,sk_err";
}

inline std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(m.step), m.loss_total, m.loss_obj,
                m.loss_local, m.lr, m.ema_alpha, m.sk_err);
  return buf;
}

/// Produces the raw frames of one clip given a derived seed.
using ClipSampler = std::function<std::vector<Frame<float>>(uint64_t seed)>;

class Trainer {
 public:
  Trainer(TrainConfig cfg, ClipSampler sampler)
      : cfg_(std::move(cfg)), sampler_(std::move(sampler)) {
    cfg_.validate();
    Rng master(cfg_.seed);
    student_.encoder = init_encoder<float>(cfg_.encoder_config(), master.fork("init_encoder"));
    student_.head = init_head<float>(head_config(), master.fork("init_head"));
    teacher_ = student_;
    init_optimizer();
  }

  HeadConfig head_config() const {
    HeadConfig h;
    h.dim = cfg_.dim;
    h.out_dim = cfg_.head_out_dim;
    h.tau_student = cfg_.tau_student;
    h.tau_teacher = cfg_.tau_teacher;
    return h;
  }

  AugmentConfig augment_config() const {
    AugmentConfig a;
    a.global_size = cfg_.global_size;
    a.local_size = cfg_.local_size;
    a.n_local = cfg_.n_local;
    a.global_scale_min = cfg_.global_scale_min;
    a.global_scale_max = cfg_.global_scale_max;
    a.local_scale_min = cfg_.local_scale_min;
    a.local_scale_max = cfg_.local_scale_max;
    return a;
  }

  SinkhornConfig sinkhorn_config() const {
    return SinkhornConfig{cfg_.sk_epsilon, cfg_.sk_tolerance, cfg_.sk_max_iterations};
  }

  StepMetrics step() {
    StepMetrics metrics;
    metrics.step = step_;
    metrics.lr = lr_schedule(step_, cfg_);
    metrics.ema_alpha = ema_alpha_at(step_, cfg_);

    std::vector<Tensor<float>*> params = student_param_ptrs();
    std::vector<Tensor<float>> grads;
    grads.reserve(params.size());
    for (auto* p : params) grads.emplace_back(p->shape);

    Tensor<float> logit_sum({1, static_cast<int64_t>(cfg_.head_out_dim)});
    int64_t logit_count = 0;

    Rng master(cfg_.seed);
    const double inv_batch = 1.0 / cfg_.batch_clips;

    for (int c = 0; c < cfg_.batch_clips; ++c) {
      uint64_t clip_salt = static_cast<uint64_t>(step_) * 0x10000 + c;
      std::vector<Frame<float>> frames =
          sampler_(master.fork("data").fork(clip_salt).next_u64());
      detail::check(static_cast<int>(frames.size()) == cfg_.clip_frames,
                    "trainer: sampler returned wrong clip length");

      ClipViews<float> views = build_clip_views(
          frames, cfg_.crop_size, augment_config(), master.fork("window").fork(clip_salt),
          master.fork("augment").fork(clip_salt));

      TeacherSignals<float> sig = teacher_signals(
          teacher_, head_config(), views, cfg_.k_objects,
          master.fork("heads").fork(clip_salt).next_u64(), sinkhorn_config());

      Graph<float> g;
      EncoderVars<float> enc_vars = lift_encoder(g, student_.encoder, true);
      HeadVars<float> head_vars = lift_head(g, student_.head, true);
      ClipLossInfo<float> info =
          build_clip_loss(g, enc_vars, head_vars, cfg_.encoder_config(), head_config(),
                          views, sig);
      g.backward(info.loss);

      std::vector<typename Graph<float>::Var> leaves = encoder_leaf_list(enc_vars);
      for (auto v : head_leaf_list(head_vars)) leaves.push_back(v);
      detail::check(leaves.size() == params.size(), "trainer: leaf/param mismatch");
      for (size_t i = 0; i < leaves.size(); ++i)
        add_inplace(grads[i], g.grad(leaves[i]), static_cast<float>(inv_batch));

      const double T = cfg_.clip_frames;
      metrics.loss_total += static_cast<double>(g.value(info.loss)[0]) * inv_batch;
      metrics.loss_obj += info.obj_value / T * inv_batch;
      metrics.loss_local += info.local_value / T * inv_batch;
      metrics.sk_err = std::max(metrics.sk_err, sig.sk_error);
      metrics.obj_terms_per_frame = info.obj_terms_per_frame;
      metrics.local_terms_per_frame = info.local_terms_per_frame;

      for (const auto& l : sig.logits) {
        add_inplace(logit_sum, l);
        ++logit_count;
      }
    }

    optimizer_step(params, grads, metrics.lr, cfg_.weight_decay, opt_);
    ema_update(teacher_, student_, static_cast<float>(metrics.ema_alpha));
    center_update(teacher_.head.center,
                  scale(logit_sum, 1.0f / static_cast<float>(logit_count)),
                  static_cast<float>(cfg_.center_momentum));
    ++step_;
    return metrics;
  }

  int64_t current_step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const ModelParams<float>& student() const { return student_; }
  const ModelParams<float>& teacher() const { return teacher_; }
  ModelParams<float>& mutable_student() { return student_; }
  ModelParams<float>& mutable_teacher() { return teacher_; }
  const OptState<float>& optimizer_state() const { return opt_; }

  /// Teacher parameter tensors are disjoint from what the optimizer updates;
  /// returns the number of aliased tensors (always expected to be 0).
  int teacher_aliasing_violations() {
    std::vector<Tensor<float>*> student_ptrs = student_param_ptrs();
    std::vector<Tensor<float>*> teacher_ptrs;
    visit_params(teacher_, [&](const std::string&, Tensor<float>& t) {
      teacher_ptrs.push_back(&t);
    });
    int violations = 0;
    for (auto* s : student_ptrs)
      for (auto* t : teacher_ptrs)
        if (s == t) ++violations;
    return violations;
  }

  void save(const std::string& path) const {
    TensorFile file;
    auto push_scalar = [&file](const std::string& name, double v) {
      Tensor<float> t({1});
      t[0] = static_cast<float>(v);
      file.emplace_back(name, std::move(t));
    };
    push_scalar("meta.step", static_cast<double>(step_));
    push_scalar("meta.opt_t", static_cast<double>(opt_.t));
    std::string cfg_text = config_to_string(cfg_);
    Tensor<float> cfg_tensor({static_cast<int64_t>(cfg_text.size())});
    for (size_t i = 0; i < cfg_text.size(); ++i)
      cfg_tensor[i] = static_cast<float>(static_cast<unsigned char>(cfg_text[i]));
    file.emplace_back("meta.config", std::move(cfg_tensor));

    auto& self = const_cast<Trainer&>(*this);
    visit_params(self.student_, [&](const std::string& n, Tensor<float>& t) {
      file.emplace_back("student." + n, t);
    });
    visit_params(self.teacher_, [&](const std::string& n, Tensor<float>& t) {
      file.emplace_back("teacher." + n, t);
    });
    file.emplace_back("teacher.center", teacher_.head.center);
    for (size_t i = 0; i < opt_.slots.size(); ++i) {
      file.emplace_back("opt.m." + std::to_string(i), opt_.slots[i].m);
      if (opt_.kind == "adam")
        file.emplace_back("opt.v." + std::to_string(i), opt_.slots[i].v);
    }
    save_tensor_file(path, file);
  }

  static Trainer load(const std::string& path, ClipSampler sampler) {
    TensorFile file = load_tensor_file(path);
    std::map<std::string, Tensor<float>*> index;
    for (auto& [name, tensor] : file) index[name] = &tensor;

    auto need = [&index, &path](const std::string& name) -> Tensor<float>& {
      auto it = index.find(name);
      if (it == index.end())
        throw data_error(path + ": checkpoint missing tensor '" + name + "'");
      return *it->second;
    };

    const Tensor<float>& cfg_tensor = need("meta.config");
    std::string cfg_text(cfg_tensor.size(), '\0');
    for (int64_t i = 0; i < cfg_tensor.size(); ++i)
      cfg_text[static_cast<size_t>(i)] =
          static_cast<char>(static_cast<unsigned char>(cfg_tensor[i]));
    TrainConfig cfg = parse_config_string(cfg_text);

    Trainer trainer(cfg, std::move(sampler));
    trainer.step_ = static_cast<int64_t>(need("meta.step")[0]);
    trainer.opt_.t = static_cast<int64_t>(need("meta.opt_t")[0]);

    auto restore = [&need, &path](ModelParams<float>& params, const std::string& prefix) {
      visit_params(params, [&](const std::string& n, Tensor<float>& t) {
        Tensor<float>& src = need(prefix + n);
        if (!t.same_shape(src))
          throw data_error(path + ": checkpoint tensor shape mismatch for " + prefix + n);
        t = src;
      });
    };
    restore(trainer.student_, "student.");
    restore(trainer.teacher_, "teacher.");
    trainer.teacher_.head.center = need("teacher.center");
    for (size_t i = 0; i < trainer.opt_.slots.size(); ++i) {
      trainer.opt_.slots[i].m = need("opt.m." + std::to_string(i));
      if (trainer.opt_.kind == "adam")
        trainer.opt_.slots[i].v = need("opt.v." + std::to_string(i));
    }
    return trainer;
  }

  std::vector<Tensor<float>*> student_param_ptrs() {
    std::vector<Tensor<float>*> out;
    visit_params(student_, [&](const std::string&, Tensor<float>& t) { out.push_back(&t); });
    return out;
  }

 private:
  void init_optimizer() {
    opt_.kind = cfg_.optimizer;
    opt_.sgd_momentum = cfg_.sgd_momentum;
    opt_.init(student_param_ptrs());
  }

  TrainConfig cfg_;
  ClipSampler sampler_;
  ModelParams<float> student_;
  ModelParams<float> teacher_;
  OptState<float> opt_;
  int64_t step_ = 0;
};

/// Model snapshot from a checkpoint, without optimizer state. Enough for
/// tracking and evaluation.
struct LoadedModel {
  TrainConfig cfg;
  ModelParams<float> teacher;
  ModelParams<float> student;
  int64_t step = 0;
};

inline LoadedModel load_model(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  std::map<std::string, Tensor<float>*> index;
  for (auto& [name, tensor] : file) index[name] = &tensor;
  auto need = [&index, &path](const std::string& name) -> Tensor<float>& {
    auto it = index.find(name);
    if (it == index.end())
      throw data_error(path + ": checkpoint missing tensor '" + name + "'");
    return *it->second;
  };

  const Tensor<float>& cfg_tensor = need("meta.config");
  std::string cfg_text(cfg_tensor.size(), '\0');
  for (int64_t i = 0; i < cfg_tensor.size(); ++i)
    cfg_text[static_cast<size_t>(i)] =
        static_cast<char>(static_cast<unsigned char>(cfg_tensor[i]));

  LoadedModel out;
  out.cfg = parse_config_string(cfg_text);
  out.step = static_cast<int64_t>(need("meta.step")[0]);

  Rng master(out.cfg.seed);
  out.student.encoder =
      init_encoder<float>(out.cfg.encoder_config(), master.fork("init_encoder"));
  HeadConfig hcfg;
  hcfg.dim = out.cfg.dim;
  hcfg.out_dim = out.cfg.head_out_dim;
  hcfg.tau_student = out.cfg.tau_student;
  hcfg.tau_teacher = out.cfg.tau_teacher;
  out.student.head = init_head<float>(hcfg, master.fork("init_head"));
  out.teacher = out.student;

  auto restore = [&need, &path](ModelParams<float>& params, const std::string& prefix) {
    visit_params(params, [&](const std::string& n, Tensor<float>& t) {
      Tensor<float>& src = need(prefix + n);
      if (!t.same_shape(src))
        throw data_error(path + ": checkpoint tensor shape mismatch for " + prefix + n);
      t = src;
    });
  };
  restore(out.student, "student.");
  restore(out.teacher, "teacher.");
  out.teacher.head.center = need("teacher.center");
  return out;
}

/// Clip sampler over a synthetic dataset directory (clips/<id>/... plus
/// manifest). Each draw picks a clip uniformly and a valid start within it.
inline ClipSampler dataset_clip_sampler(const std::string& dataset_dir, int frames,
                                        int stride = 1) {
  auto entries = std::make_shared<std::vector<ManifestEntry>>(read_manifest(dataset_dir));
  return [dataset_dir, entries, frames, stride](uint64_t seed) {
    Rng rng(seed);
    const ManifestEntry& e =
        (*entries)[rng.uniform_int(static_cast<int64_t>(entries->size()))];
    VideoSource src =
        VideoSource::open(dataset_dir + "/clips/" + std::to_string(e.clip_id));
    ClipSpec spec = sample_clip(src, frames, stride, rng.next_u64());
    std::vector<Frame<float>> out;
    for (int idx : spec.frame_indices()) out.push_back(src.load_frame(idx));
    return out;
  };
}

/// Clip sampler over a single long video directory, cut-aware when a cut list
/// is present.
inline ClipSampler video_clip_sampler(const std::string& video_dir, int frames,
                                      int stride, const std::string& cut_file = "") {
  auto src = std::make_shared<VideoSource>(VideoSource::open(video_dir, cut_file));
  return [src, frames, stride](uint64_t seed) {
    ClipSpec spec = src->cuts.empty()
                        ? sample_clip(*src, frames, stride, seed)
                        : sample_clip_cut_aware(*src, frames, stride, seed);
    std::vector<Frame<float>> out;
    for (int idx : spec.frame_indices()) out.push_back(src->load_frame(idx));
    return out;
  };
}

}  // namespace dora
