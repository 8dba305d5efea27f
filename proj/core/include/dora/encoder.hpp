#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dora/errors.hpp"
#include "dora/frame.hpp"
#include "dora/graph.hpp"
#include "dora/rng.hpp"
#include "dora/tensor.hpp"

namespace dora {

/// Per-head feature dimension. Also validates the reconfiguration of the
/// final attention block when more heads than the default are requested.
inline int head_dims(int dim, int heads) {
  if (heads < 1) throw config_error("head_dims: heads must be >= 1");
  if (dim % heads != 0)
    throw config_error("head_dims: dim " + std::to_string(dim) +
                       " not divisible by head count " + std::to_string(heads));
  return dim / heads;
}

enum class TrackerLayer { last, second_last };

struct EncoderConfig {
  int dim = 48;
  int heads = 6;
  int heads_last = 6; // final block head count; raised when tracking k > heads objects
  int depth = 3;
  int patch = 8;
  int channels = 3;
  std::vector<int> resolutions = {64, 32}; // square input sizes with learned pos tables
  TrackerLayer tracker_layer = TrackerLayer::last;

  int mlp_hidden() const { return 4 * dim; }

  int source_block() const {
    if (tracker_layer == TrackerLayer::last) return depth - 1;
    if (depth < 2)
      throw config_error("tracker_layer=second_last requires depth >= 2");
    return depth - 2;
  }

  int heads_of_block(int block) const {
    return block == depth - 1 ? heads_last : heads;
  }

  void validate() const {
    if (dim < 1 || depth < 1 || patch < 1)
      throw config_error("encoder config: dim, depth, patch must be >= 1");
    if (channels != 1 && channels != 3)
      throw config_error("encoder config: channels must be 1 or 3");
    head_dims(dim, heads);
    head_dims(dim, heads_last);
    if (resolutions.empty())
      throw config_error("encoder config: at least one resolution required");
    for (int r : resolutions)
      if (r % patch != 0)
        throw config_error("encoder config: resolution " + std::to_string(r) +
                           " not divisible by patch " + std::to_string(patch));
    source_block();
  }
};

/// Frame cut into n = hw/p^2 non-overlapping patches, raster order.
template <typename S>
struct PatchGrid {
  int64_t n = 0;
  int p = 0;
  int rows = 0;
  int cols = 0;
  Tensor<S> patch_vectors; // n x (p*p*c)
};

template <typename S>
PatchGrid<S> patchify(const Frame<S>& frame, int p) {
  if (p < 1 || frame.height % p != 0 || frame.width % p != 0)
    throw std::invalid_argument(
        "patchify: frame dimensions must be divisible by patch size");
  PatchGrid<S> g;
  g.p = p;
  g.rows = frame.height / p;
  g.cols = frame.width / p;
  g.n = static_cast<int64_t>(g.rows) * g.cols;
  const int64_t pv = static_cast<int64_t>(p) * p * frame.channels;
  g.patch_vectors = Tensor<S>({g.n, pv});
  for (int gr = 0; gr < g.rows; ++gr)
    for (int gc = 0; gc < g.cols; ++gc) {
      int64_t idx = static_cast<int64_t>(gr) * g.cols + gc;
      int64_t off = 0;
      for (int y = gr * p; y < (gr + 1) * p; ++y)
        for (int x = gc * p; x < (gc + 1) * p; ++x)
          for (int c = 0; c < frame.channels; ++c)
            g.patch_vectors(idx, off++) = frame.at(y, x, c);
    }
  return g;
}

/// Inverse of patchify; tokenization is lossless before projection.
template <typename S>
Frame<S> unpatchify(const PatchGrid<S>& g, int channels) {
  Frame<S> f(g.rows * g.p, g.cols * g.p, channels);
  for (int gr = 0; gr < g.rows; ++gr)
    for (int gc = 0; gc < g.cols; ++gc) {
      int64_t idx = static_cast<int64_t>(gr) * g.cols + gc;
      int64_t off = 0;
      for (int y = gr * g.p; y < (gr + 1) * g.p; ++y)
        for (int x = gc * g.p; x < (gc + 1) * g.p; ++x)
          for (int c = 0; c < channels; ++c) f.at(y, x, c) = g.patch_vectors(idx, off++);
    }
  return f;
}

template <typename S>
struct BlockParams {
  Tensor<S> ln1_g, ln1_b;
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<S> ln2_g, ln2_b;
  Tensor<S> w1, b1, w2, b2;
};

/// Positional table for one token grid.
template <typename S>
struct PosTable {
  int rows = 0, cols = 0;
  Tensor<S> table; // (n+1) x d
};

template <typename S>
struct EncoderParams {
  EncoderConfig cfg;
  Tensor<S> patch_w, patch_b; // (p*p*c) x d, 1 x d
  Tensor<S> cls;              // 1 x d
  std::vector<PosTable<S>> pos;
  std::vector<BlockParams<S>> blocks;
  Tensor<S> lnf_g, lnf_b;
};

/// Applies fn(name, tensor) to every learnable tensor, in a fixed order.
template <typename S, typename Fn>
void visit_params(EncoderParams<S>& p, Fn&& fn) {
  fn("patch.w", p.patch_w);
  fn("patch.b", p.patch_b);
  fn("cls", p.cls);
  for (auto& pt : p.pos)
    fn("pos." + std::to_string(pt.rows) + "x" + std::to_string(pt.cols), pt.table);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    std::string pre = "blocks." + std::to_string(i) + ".";
    fn(pre + "ln1.g", b.ln1_g);
    fn(pre + "ln1.b", b.ln1_b);
    fn(pre + "wq", b.wq);
    fn(pre + "bq", b.bq);
    fn(pre + "wk", b.wk);
    fn(pre + "bk", b.bk);
    fn(pre + "wv", b.wv);
    fn(pre + "bv", b.bv);
    fn(pre + "wo", b.wo);
    fn(pre + "bo", b.bo);
    fn(pre + "ln2.g", b.ln2_g);
    fn(pre + "ln2.b", b.ln2_b);
    fn(pre + "w1", b.w1);
    fn(pre + "b1", b.b1);
    fn(pre + "w2", b.w2);
    fn(pre + "b2", b.b2);
  }
  fn("lnf.g", p.lnf_g);
  fn("lnf.b", p.lnf_b);
}

/// Fan-in scaled random init with identity-aligned query/key projections.
/// The identity component keeps queries, keys and output embeddings in a
/// common space at initialization, so attention is content-matching from
/// step 0 and a freshly initialized encoder already produces structured,
/// non-degenerate attention maps at desk scale.
template <typename S>
EncoderParams<S> init_encoder(const EncoderConfig& cfg, Rng rng) {
  cfg.validate();
  EncoderParams<S> p;
  p.cfg = cfg;
  const int d = cfg.dim;
  const int64_t pv = static_cast<int64_t>(cfg.patch) * cfg.patch * cfg.channels;

  auto normal = [&rng](Tensor<S>& t, double std_dev) {
    for (auto& v : t.data) v = static_cast<S>(rng.normal() * std_dev);
  };
  auto identity_plus_noise = [&rng](Tensor<S>& t, double gain, double noise) {
    for (int64_t i = 0; i < t.rows(); ++i)
      for (int64_t j = 0; j < t.cols(); ++j)
        t(i, j) = static_cast<S>((i == j ? gain : 0.0) + rng.normal() * noise);
  };
  const double fan = 1.0 / std::sqrt(static_cast<double>(d));
  const double pos_std = 0.5;
  const double qk_gain = 0.6, qk_noise = 0.05;

  p.patch_w = Tensor<S>({pv, d});
  normal(p.patch_w, 1.0 / std::sqrt(static_cast<double>(pv)));
  p.patch_b = Tensor<S>({1, d});
  p.cls = Tensor<S>({1, d});
  normal(p.cls, pos_std);
  for (int r : cfg.resolutions) {
    PosTable<S> pt;
    pt.rows = pt.cols = r / cfg.patch;
    pt.table = Tensor<S>({static_cast<int64_t>(pt.rows) * pt.cols + 1, d});
    normal(pt.table, pos_std);
    p.pos.push_back(std::move(pt));
  }
  p.blocks.resize(cfg.depth);
  for (auto& b : p.blocks) {
    b.ln1_g = Tensor<S>({1, d}, S(1));
    b.ln1_b = Tensor<S>({1, d});
    b.wq = Tensor<S>({d, d});
    identity_plus_noise(b.wq, qk_gain, qk_noise);
    b.bq = Tensor<S>({1, d});
    b.wk = Tensor<S>({d, d});
    identity_plus_noise(b.wk, qk_gain, qk_noise);
    b.bk = Tensor<S>({1, d});
    b.wv = Tensor<S>({d, d});
    normal(b.wv, fan);
    b.bv = Tensor<S>({1, d});
    b.wo = Tensor<S>({d, d});
    normal(b.wo, fan);
    b.bo = Tensor<S>({1, d});
    b.ln2_g = Tensor<S>({1, d}, S(1));
    b.ln2_b = Tensor<S>({1, d});
    b.w1 = Tensor<S>({d, cfg.mlp_hidden()});
    normal(b.w1, fan);
    b.b1 = Tensor<S>({1, cfg.mlp_hidden()});
    b.w2 = Tensor<S>({cfg.mlp_hidden(), d});
    normal(b.w2, 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden())));
    b.b2 = Tensor<S>({1, d});
  }
  p.lnf_g = Tensor<S>({1, d}, S(1));
  p.lnf_b = Tensor<S>({1, d});
  return p;
}

// ---------------------------------------------------------------------------
// forward pass, shared between inference (no-record graph) and training

template <typename S>
struct BlockVars {
  using Var = typename Graph<S>::Var;
  Var ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  Var ln2_g, ln2_b, w1, b1, w2, b2;
};

template <typename S>
struct EncoderVars {
  using Var = typename Graph<S>::Var;
  Var patch_w, patch_b, cls;
  std::vector<std::pair<std::pair<int, int>, Var>> pos; // (rows, cols) -> table
  std::vector<BlockVars<S>> blocks;
  Var lnf_g, lnf_b;
};

/// Registers every encoder parameter as a graph leaf. Lift once per graph and
/// reuse across all encodes recorded on it.
template <typename S>
EncoderVars<S> lift_encoder(Graph<S>& g, const EncoderParams<S>& p, bool needs_grad) {
  EncoderVars<S> v;
  v.patch_w = g.leaf(p.patch_w, needs_grad);
  v.patch_b = g.leaf(p.patch_b, needs_grad);
  v.cls = g.leaf(p.cls, needs_grad);
  for (const auto& pt : p.pos)
    v.pos.push_back({{pt.rows, pt.cols}, g.leaf(pt.table, needs_grad)});
  for (const auto& b : p.blocks) {
    BlockVars<S> bv;
    bv.ln1_g = g.leaf(b.ln1_g, needs_grad);
    bv.ln1_b = g.leaf(b.ln1_b, needs_grad);
    bv.wq = g.leaf(b.wq, needs_grad);
    bv.bq = g.leaf(b.bq, needs_grad);
    bv.wk = g.leaf(b.wk, needs_grad);
    bv.bk = g.leaf(b.bk, needs_grad);
    bv.wv = g.leaf(b.wv, needs_grad);
    bv.bv = g.leaf(b.bv, needs_grad);
    bv.wo = g.leaf(b.wo, needs_grad);
    bv.bo = g.leaf(b.bo, needs_grad);
    bv.ln2_g = g.leaf(b.ln2_g, needs_grad);
    bv.ln2_b = g.leaf(b.ln2_b, needs_grad);
    bv.w1 = g.leaf(b.w1, needs_grad);
    bv.b1 = g.leaf(b.b1, needs_grad);
    bv.w2 = g.leaf(b.w2, needs_grad);
    bv.b2 = g.leaf(b.b2, needs_grad);
    v.blocks.push_back(bv);
  }
  v.lnf_g = g.leaf(p.lnf_g, needs_grad);
  v.lnf_b = g.leaf(p.lnf_b, needs_grad);
  return v;
}

/// Lifted grad-requiring leaves in visit_params order, for optimizers and
/// finite-difference probes.
template <typename S>
std::vector<typename Graph<S>::Var> encoder_leaf_list(const EncoderVars<S>& v) {
  std::vector<typename Graph<S>::Var> out = {v.patch_w, v.patch_b, v.cls};
  for (const auto& pt : v.pos) out.push_back(pt.second);
  for (const auto& b : v.blocks) {
    for (auto var : {b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv,
                     b.wo, b.bo, b.ln2_g, b.ln2_b, b.w1, b.b1, b.w2, b.b2})
      out.push_back(var);
  }
  out.push_back(v.lnf_g);
  out.push_back(v.lnf_b);
  return out;
}

template <typename S>
struct EncodeVars {
  using Var = typename Graph<S>::Var;
  Var z;                     // (n+1) x d, final layer-norm applied
  Var q_src, k_src;          // (n+1) x d queries/keys of the tracker source block
  std::vector<Var> attn_src; // per-head (n+1) x (n+1) attention of that block
  int64_t n = 0;
};

/// ViT forward: patch projection, [cls] prepend, learned positional
/// embeddings, pre-norm attention/MLP blocks, final layer norm.
/// Throws numeric_error with the block index if activations go non-finite.
template <typename S>
EncodeVars<S> encode_on_graph(Graph<S>& g, const EncoderConfig& cfg,
                              const EncoderVars<S>& vars, const Frame<S>& frame) {
  using Var = typename Graph<S>::Var;
  const S ln_eps = S(1e-6);

  PatchGrid<S> grid = patchify(frame, cfg.patch);
  if (grid.patch_vectors.cols() != static_cast<int64_t>(cfg.patch) * cfg.patch * cfg.channels)
    throw std::invalid_argument("encode: frame channel count does not match config");

  Var pos = -1;
  for (const auto& [rc, var] : vars.pos)
    if (rc.first == grid.rows && rc.second == grid.cols) pos = var;
  if (pos < 0)
    throw config_error("encode: no positional table for token grid " +
                       std::to_string(grid.rows) + "x" + std::to_string(grid.cols));

  Var patches = g.constant(std::move(grid.patch_vectors));
  Var tokens = g.add_rowvec(g.matmul(patches, vars.patch_w), vars.patch_b);
  Var x = g.concat_rows({vars.cls, tokens});
  x = g.add(x, pos);

  EncodeVars<S> out;
  out.n = grid.n;
  const int64_t nt = grid.n + 1;
  const int src = cfg.source_block();

  for (int bi = 0; bi < cfg.depth; ++bi) {
    const auto& b = vars.blocks[bi];
    const int h = cfg.heads_of_block(bi);
    const int dh = head_dims(cfg.dim, h);
    const S att_scale = S(1) / std::sqrt(static_cast<S>(dh));

    Var xn = g.layernorm(x, b.ln1_g, b.ln1_b, ln_eps);
    Var q = g.add_rowvec(g.matmul(xn, b.wq), b.bq);
    Var k = g.add_rowvec(g.matmul(xn, b.wk), b.bk);
    Var v = g.add_rowvec(g.matmul(xn, b.wv), b.bv);

    std::vector<Var> head_outs;
    std::vector<Var> head_attn;
    head_outs.reserve(h);
    for (int hi = 0; hi < h; ++hi) {
      Var qi = g.slice_cols(q, hi * dh, (hi + 1) * dh);
      Var ki = g.slice_cols(k, hi * dh, (hi + 1) * dh);
      Var vi = g.slice_cols(v, hi * dh, (hi + 1) * dh);
      Var a = g.softmax_rows(g.scale(g.matmul_nt(qi, ki), att_scale));
      head_attn.push_back(a);
      head_outs.push_back(g.matmul(a, vi));
    }
    Var attn_out = g.add_rowvec(g.matmul(g.concat_cols(head_outs), b.wo), b.bo);
    x = g.add(x, attn_out);

    Var yn = g.layernorm(x, b.ln2_g, b.ln2_b, ln_eps);
    Var m = g.gelu(g.add_rowvec(g.matmul(yn, b.w1), b.b1));
    Var mlp_out = g.add_rowvec(g.matmul(m, b.w2), b.b2);
    x = g.add(x, mlp_out);

    if (!g.value(x).all_finite())
      throw numeric_error("encode: non-finite activations in block " +
                              std::to_string(bi), bi);

    if (bi == src) {
      out.q_src = q;
      out.k_src = k;
      out.attn_src = head_attn;
    }
  }

  out.z = g.layernorm(x, vars.lnf_g, vars.lnf_b, ln_eps);
  if (!g.value(out.z).all_finite())
    throw numeric_error("encode: non-finite final output", cfg.depth - 1);
  (void)nt;
  return out;
}

/// Per-frame token embeddings plus the tracker-source attention internals.
template <typename S>
struct EncoderOutput {
  Tensor<S> z;                    // (n+1) x d; row 0 is the [cls] embedding
  Tensor<S> q_last, k_last;       // (n+1) x d
  std::vector<Tensor<S>> attn;    // h matrices, each (n+1) x (n+1)
  int64_t n = 0;

  Tensor<S> cls_embedding() const { return slice_rows(z, 0, 1); }
  Tensor<S> patch_embeddings() const { return slice_rows(z, 1, z.rows()); }
  Tensor<S> patch_queries() const { return slice_rows(q_last, 1, q_last.rows()); }
  Tensor<S> patch_keys() const { return slice_rows(k_last, 1, k_last.rows()); }
};

/// Pure inference encode; deterministic given (params, frame).
template <typename S>
EncoderOutput<S> encode(const EncoderParams<S>& params, const Frame<S>& frame) {
  Graph<S> g(false);
  EncoderVars<S> vars = lift_encoder(g, params, false);
  EncodeVars<S> ev = encode_on_graph(g, params.cfg, vars, frame);
  EncoderOutput<S> out;
  out.z = g.value(ev.z);
  out.q_last = g.value(ev.q_src);
  out.k_last = g.value(ev.k_src);
  out.attn.reserve(ev.attn_src.size());
  for (auto a : ev.attn_src) out.attn.push_back(g.value(a));
  out.n = ev.n;
  return out;
}

}  // namespace dora
