#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dora/encoder.hpp"
#include "dora/errors.hpp"
#include "dora/frame.hpp"
#include "dora/rng.hpp"
#include "dora/tensor.hpp"
#include "dora/transport.hpp"

namespace dora {

/// k distinct attention-head indices used for object discovery.
struct HeadSubset {
  std::vector<int> indices;
  uint64_t seed = 0;
};

template <typename S>
struct ObjectPrototypes {
  Tensor<S> P; // k x d
  bool refined = false;
};

template <typename S>
struct CrossAttentionMap {
  Tensor<S> T; // k x n, rows are probability vectors
  int frame_index = 0;
  bool refined = false;
};

/// Full-resolution per-object attention map, values in [0,1].
template <typename S>
using ObjectMaskImage = Tensor<S>; // rank-2 {h, w}

template <typename S>
bool is_row_stochastic(const Tensor<S>& m, double tol = 1e-5) {
  for (int64_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < m.cols(); ++j) {
      if (m(r, j) < S(0)) return false;
      s += static_cast<double>(m(r, j));
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

/// Per-head attention from the [cls] token to the n patch tokens: the first
/// row of each attention matrix restricted to the patch columns. Output is
/// h x n, one row per head.
template <typename S>
Tensor<S> cls_attention(const std::vector<Tensor<S>>& attn) {
  detail::check(!attn.empty(), "cls_attention: empty attention stack");
  const int64_t nt = attn[0].rows();
  detail::check(nt >= 2, "cls_attention: need at least one patch token");
  Tensor<S> out({static_cast<int64_t>(attn.size()), nt - 1});
  for (size_t h = 0; h < attn.size(); ++h) {
    const Tensor<S>& a = attn[h];
    detail::check(a.rows() == nt && a.cols() == nt,
                  "cls_attention: attention matrices must be square and equally sized");
    if (!is_row_stochastic(a))
      throw std::invalid_argument("cls_attention: attention matrix " +
                                  std::to_string(h) + " is not row-stochastic");
    for (int64_t j = 1; j < nt; ++j) out(h, j - 1) = a(0, j);
  }
  return out;
}

/// Draws k distinct head indices uniformly without replacement.
template <typename SeedT = uint64_t>
inline HeadSubset sample_heads(int h, int k, uint64_t seed) {
  if (k < 1 || k > h)
    throw config_error(
        "sample_heads: need 1 <= k <= h; for k > h reconfigure the final "
        "attention block with heads_last >= k");
  Rng rng(seed);
  std::vector<int> all(h);
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.uniform_int(h - i));
    std::swap(all[i], all[j]);
  }
  HeadSubset s;
  s.indices.assign(all.begin(), all.begin() + k);
  s.seed = seed;
  return s;
}

/// Object prototypes as attention-weighted pooling of patch queries:
/// P = A_I * Q_patches.
template <typename S>
ObjectPrototypes<S> object_prototypes(const Tensor<S>& a_subset,
                                      const Tensor<S>& q_patches) {
  detail::check(a_subset.cols() == q_patches.rows(),
                "object_prototypes: patch counts differ");
  ObjectPrototypes<S> p;
  p.P = matmul(a_subset, q_patches);
  p.refined = false;
  return p;
}

/// Refines prototypes through the entropic transport plan:
/// M* = sinkhorn(P * Z_patches^T / eps), P' = M* * Z_patches.
template <typename S>
std::pair<TransportPlan<S>, ObjectPrototypes<S>> refine_prototypes(
    const ObjectPrototypes<S>& p, const Tensor<S>& z_patches,
    const SinkhornConfig& cfg) {
  detail::check(p.P.cols() == z_patches.cols(),
                "refine_prototypes: embedding dims differ");
  Tensor<S> scores = matmul_nt(p.P, z_patches);
  TransportPlan<S> plan = sinkhorn(scores, cfg);
  ObjectPrototypes<S> refined;
  refined.P = matmul(plan.M, z_patches);
  refined.refined = true;
  return {std::move(plan), std::move(refined)};
}

/// Tracks prototypes into a frame's patch keys:
/// T = row-softmax(P * K_patches^T / sqrt(d)).
template <typename S>
CrossAttentionMap<S> cross_attention(const ObjectPrototypes<S>& prototypes,
                                     const Tensor<S>& k_patches, int dim,
                                     int frame_index = 0) {
  detail::check(prototypes.P.cols() == k_patches.cols(),
                "cross_attention: embedding dims differ");
  detail::check(dim >= 1, "cross_attention: dim must be >= 1");
  Tensor<S> scores =
      scale(matmul_nt(prototypes.P, k_patches), S(1) / std::sqrt(static_cast<S>(dim)));
  CrossAttentionMap<S> m;
  m.T = softmax_rows(scores);
  m.frame_index = frame_index;
  m.refined = prototypes.refined;
  return m;
}

/// Reshapes one map row to the token grid, bilinearly upsamples to the target
/// resolution and rescales so the peak value is 1 (an all-zero row stays
/// all-zero). Sampling uses half-pixel centers with edge clamping.
template <typename S>
ObjectMaskImage<S> upsample_map(const Tensor<S>& map_row, int grid_rows,
                                int grid_cols, int target_h, int target_w) {
  detail::check(map_row.size() == static_cast<int64_t>(grid_rows) * grid_cols,
                "upsample_map: row length does not match grid");
  detail::check(target_h % grid_rows == 0 && target_w % grid_cols == 0,
                "upsample_map: target dims must be multiples of grid dims");
  Tensor<S> out({target_h, target_w});
  const double sy = static_cast<double>(grid_rows) / target_h;
  const double sx = static_cast<double>(grid_cols) / target_w;
  auto at_grid = [&](int r, int c) {
    return static_cast<double>(map_row[static_cast<int64_t>(r) * grid_cols + c]);
  };
  for (int y = 0; y < target_h; ++y) {
    double gy = (y + 0.5) * sy - 0.5;
    gy = std::clamp(gy, 0.0, static_cast<double>(grid_rows - 1));
    int y0 = static_cast<int>(gy);
    int y1 = std::min(y0 + 1, grid_rows - 1);
    double fy = gy - y0;
    for (int x = 0; x < target_w; ++x) {
      double gx = (x + 0.5) * sx - 0.5;
      gx = std::clamp(gx, 0.0, static_cast<double>(grid_cols - 1));
      int x0 = static_cast<int>(gx);
      int x1 = std::min(x0 + 1, grid_cols - 1);
      double fx = gx - x0;
      double v = (1 - fy) * ((1 - fx) * at_grid(y0, x0) + fx * at_grid(y0, x1)) +
                 fy * ((1 - fx) * at_grid(y1, x0) + fx * at_grid(y1, x1));
      out(y, x) = static_cast<S>(v);
    }
  }
  S peak = S(0);
  for (S v : out.data) peak = std::max(peak, v);
  if (peak > S(0))
    for (auto& v : out.data) v /= peak;
  return out;
}

/// Hadamard product of a view with a per-object map, broadcast across channels.
template <typename S>
Frame<S> apply_mask(const Frame<S>& view, const ObjectMaskImage<S>& mask) {
  detail::check(mask.rank() == 2 && mask.rows() == view.height &&
                    mask.cols() == view.width,
                "apply_mask: spatial dims differ");
  Frame<S> out = view;
  for (int y = 0; y < view.height; ++y)
    for (int x = 0; x < view.width; ++x) {
      S m = mask(y, x);
      for (int c = 0; c < view.channels; ++c) out.at(y, x, c) *= m;
    }
  return out;
}

template <typename S>
struct TrackResult {
  HeadSubset heads;
  ObjectPrototypes<S> raw;
  ObjectPrototypes<S> refined;
  TransportPlan<S> plan;
  std::vector<CrossAttentionMap<S>> raw_maps;     // per frame
  std::vector<CrossAttentionMap<S>> refined_maps; // per frame
  int grid_rows = 0, grid_cols = 0;
};

/// Discovers k objects in the first clip frame and tracks them across all
/// frames by cross-attention. A clip of length 1 is the single-image mode:
/// discovery and tracking use the same image's keys.
template <typename S>
TrackResult<S> track_clip(const EncoderParams<S>& teacher,
                          const std::vector<Frame<S>>& clip, int k,
                          uint64_t seed, const SinkhornConfig& sk_cfg) {
  detail::check(!clip.empty(), "track_clip: empty clip");
  TrackResult<S> out;

  EncoderOutput<S> first = encode(teacher, clip[0]);
  const int h_src = static_cast<int>(first.attn.size());
  out.heads = sample_heads(h_src, k, seed);

  Tensor<S> a_cls = cls_attention(first.attn);
  Tensor<S> a_subset({static_cast<int64_t>(k), a_cls.cols()});
  for (int i = 0; i < k; ++i)
    for (int64_t j = 0; j < a_cls.cols(); ++j)
      a_subset(i, j) = a_cls(out.heads.indices[i], j);

  out.raw = object_prototypes(a_subset, first.patch_queries());
  auto [plan, refined] = refine_prototypes(out.raw, first.patch_embeddings(), sk_cfg);
  out.plan = std::move(plan);
  out.refined = std::move(refined);

  out.grid_rows = clip[0].height / teacher.cfg.patch;
  out.grid_cols = clip[0].width / teacher.cfg.patch;

  for (size_t t = 0; t < clip.size(); ++t) {
    const EncoderOutput<S> enc = (t == 0) ? first : encode(teacher, clip[t]);
    Tensor<S> keys = enc.patch_keys();
    out.raw_maps.push_back(
        cross_attention(out.raw, keys, teacher.cfg.dim, static_cast<int>(t)));
    out.refined_maps.push_back(
        cross_attention(out.refined, keys, teacher.cfg.dim, static_cast<int>(t)));
  }
  return out;
}

/// Mean pairwise cosine similarity between the k rows of a map; the
/// separation diagnostic (lower = better separated objects).
template <typename S>
double mean_pairwise_row_cosine(const Tensor<S>& t) {
  const int64_t k = t.rows();
  if (k < 2) return 0.0;
  double sum = 0.0;
  int64_t pairs = 0;
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = i + 1; j < k; ++j) {
      sum += static_cast<double>(cosine_similarity(row(t, i), row(t, j)));
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

}  // namespace dora
