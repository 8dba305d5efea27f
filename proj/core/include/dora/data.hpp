#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "dora/errors.hpp"
#include "dora/eval.hpp"
#include "dora/frame.hpp"
#include "dora/image_io.hpp"
#include "dora/rng.hpp"

namespace dora {

// ---------------------------------------------------------------------------
// frame sources and clip sampling

/// A directory of numbered frames (`frame_%06d.ppm`) plus an optional sorted
/// cut list (one frame index per line).
struct VideoSource {
  std::string dir;
  int frame_count = 0;
  double fps = 30.0;
  std::vector<int> cuts;

  static std::string frame_path(const std::string& dir, int index) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.ppm", index);
    return dir + "/" + name;
  }

  static VideoSource open(const std::string& dir, const std::string& cut_file = "") {
    VideoSource src;
    src.dir = dir;
    while (std::filesystem::exists(frame_path(dir, src.frame_count))) ++src.frame_count;
    if (src.frame_count == 0) throw data_error(dir + ": no frames found");
    if (!cut_file.empty()) src.cuts = read_cut_list(cut_file, src.frame_count);
    return src;
  }

  static std::vector<int> read_cut_list(const std::string& path, int frame_count) {
    std::ifstream in(path);
    if (!in) throw data_error(path + ": cannot open cut list");
    std::vector<int> cuts;
    int v = 0;
    while (in >> v) {
      if (v < 0 || v >= frame_count)
        throw data_error(path + ": cut index out of range");
      if (!cuts.empty() && v <= cuts.back())
        throw data_error(path + ": cut indices must be strictly increasing");
      cuts.push_back(v);
    }
    return cuts;
  }

  Frame<float> load_frame(int index) const {
    if (index < 0 || index >= frame_count)
      throw data_error(dir + ": frame index out of range");
    return read_ppm(frame_path(dir, index));
  }
};

struct ClipSpec {
  int start = 0;
  int frames = 0; // T
  int stride = 1;

  int last_frame() const { return start + (frames - 1) * stride; }
  std::vector<int> frame_indices() const {
    std::vector<int> idx(frames);
    for (int t = 0; t < frames; ++t) idx[t] = start + t * stride;
    return idx;
  }
};

inline int max_clip_start(const VideoSource& src, int frames, int stride) {
  return src.frame_count - 1 - (frames - 1) * stride;
}

inline ClipSpec sample_clip(const VideoSource& src, int frames, int stride, uint64_t seed) {
  detail::check(frames >= 1 && stride >= 1, "sample_clip: frames and stride must be >= 1");
  int max_start = max_clip_start(src, frames, stride);
  if (max_start < 0)
    throw data_error("sample_clip: video too short for requested clip");
  Rng rng(seed);
  return ClipSpec{static_cast<int>(rng.uniform_int(max_start + 1)), frames, stride};
}

/// A clip crosses a cut when any cut index lies in [start, last_frame].
inline bool clip_crosses_cut(const VideoSource& src, const ClipSpec& spec) {
  for (int c : src.cuts)
    if (c >= spec.start && c <= spec.last_frame()) return true;
  return false;
}

/// Rejection-samples clips that do not intersect any cut. If rejection fails
/// within the retry budget the valid starts are enumerated outright; an empty
/// set is an exhaustion error.
inline ClipSpec sample_clip_cut_aware(const VideoSource& src, int frames, int stride,
                                      uint64_t seed, int max_retries = 10000) {
  detail::check(frames >= 1 && stride >= 1,
                "sample_clip_cut_aware: frames and stride must be >= 1");
  int max_start = max_clip_start(src, frames, stride);
  if (max_start < 0)
    throw data_error("sample_clip_cut_aware: video too short for requested clip");
  Rng rng(seed);
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    ClipSpec spec{static_cast<int>(rng.uniform_int(max_start + 1)), frames, stride};
    if (!clip_crosses_cut(src, spec)) return spec;
  }
  std::vector<int> valid;
  for (int s = 0; s <= max_start; ++s) {
    ClipSpec spec{s, frames, stride};
    if (!clip_crosses_cut(src, spec)) valid.push_back(s);
  }
  if (valid.empty())
    throw data_error("sample_clip_cut_aware: no clip avoids the cuts");
  return ClipSpec{valid[rng.uniform_int(static_cast<int64_t>(valid.size()))], frames,
                  stride};
}

// ---------------------------------------------------------------------------
// crops, resizing, views

/// Bilinear resize with half-pixel centers and edge clamping.
template <typename S>
Frame<S> resize_frame(const Frame<S>& in, int out_h, int out_w) {
  detail::check(out_h >= 1 && out_w >= 1, "resize_frame: bad output size");
  Frame<S> out(out_h, out_w, in.channels);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double gy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    int y0 = static_cast<int>(gy);
    int y1 = std::min(y0 + 1, in.height - 1);
    double fy = gy - y0;
    for (int x = 0; x < out_w; ++x) {
      double gx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      int x0 = static_cast<int>(gx);
      int x1 = std::min(x0 + 1, in.width - 1);
      double fx = gx - x0;
      for (int c = 0; c < in.channels; ++c) {
        double v = (1 - fy) * ((1 - fx) * in.at(y0, x0, c) + fx * in.at(y0, x1, c)) +
                   fy * ((1 - fx) * in.at(y1, x0, c) + fx * in.at(y1, x1, c));
        out.at(y, x, c) = static_cast<S>(v);
      }
    }
  }
  return out;
}

struct CropWindow {
  int x0 = 0, y0 = 0, size = 0;
};

/// Picks the base-crop window for a clip; the same window is reused for every
/// frame of the clip so cross-frame tracking stays geometrically aligned.
inline CropWindow choose_crop_window(int frame_h, int frame_w, int size, Rng& rng) {
  if (frame_h < size || frame_w < size)
    throw data_error("base_crop: frame smaller than crop size");
  CropWindow w;
  w.size = size;
  w.x0 = static_cast<int>(rng.uniform_int(frame_w - size + 1));
  w.y0 = static_cast<int>(rng.uniform_int(frame_h - size + 1));
  return w;
}

template <typename S>
Frame<S> base_crop(const Frame<S>& frame, const CropWindow& w) {
  if (frame.height < w.y0 + w.size || frame.width < w.x0 + w.size)
    throw data_error("base_crop: window exceeds frame");
  Frame<S> out(w.size, w.size, frame.channels);
  for (int y = 0; y < w.size; ++y)
    for (int x = 0; x < w.size; ++x)
      for (int c = 0; c < frame.channels; ++c)
        out.at(y, x, c) = frame.at(w.y0 + y, w.x0 + x, c);
  return out;
}

/// Square random-resized-crop geometry inside the base crop, plus the flip
/// flag; enough to map any view pixel back to base-crop coordinates.
struct CropGeometry {
  int x0 = 0, y0 = 0, side = 0; // window inside the base crop
  int out_size = 0;             // view resolution after resize
  bool flipped = false;
};

/// Maps a view pixel center to base-crop coordinates (y, x).
inline std::pair<double, double> view_to_base(const CropGeometry& g, double vy,
                                              double vx) {
  if (g.flipped) vx = (g.out_size - 1) - vx;
  double scale = static_cast<double>(g.side) / g.out_size;
  return {g.y0 + (vy + 0.5) * scale - 0.5, g.x0 + (vx + 0.5) * scale - 0.5};
}

struct AugmentConfig {
  int global_size = 64;
  int local_size = 32;
  int n_local = 6;
  double global_scale_min = 0.4, global_scale_max = 1.0;
  double local_scale_min = 0.05, local_scale_max = 0.4;
  double jitter_prob = 0.8;
  double jitter_brightness = 0.4, jitter_contrast = 0.4, jitter_saturation = 0.2;
  double grayscale_prob = 0.2;
  double flip_prob = 0.5;
};

template <typename S>
struct AugmentedView {
  Frame<S> image;
  CropGeometry geom;
};

template <typename S>
struct ViewSet {
  std::vector<AugmentedView<S>> global; // exactly 2
  std::vector<AugmentedView<S>> local;  // m views
};

namespace detail {

template <typename S>
void color_jitter(Frame<S>& f, const AugmentConfig& cfg, Rng& rng) {
  // draws happen unconditionally to keep the stream layout stable
  double b = 1.0 + cfg.jitter_brightness * (2.0 * rng.uniform() - 1.0);
  double c = 1.0 + cfg.jitter_contrast * (2.0 * rng.uniform() - 1.0);
  double s = 1.0 + cfg.jitter_saturation * (2.0 * rng.uniform() - 1.0);
  bool apply = rng.uniform() < cfg.jitter_prob;
  if (!apply) return;

  double mean = 0.0;
  for (S v : f.pix) mean += static_cast<double>(v);
  mean /= static_cast<double>(f.pix.size());

  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      double gray = 0.0;
      if (f.channels == 3)
        gray = 0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
      for (int ch = 0; ch < f.channels; ++ch) {
        double v = f.at(y, x, ch);
        v *= b;
        v = (v - mean) * c + mean;
        if (f.channels == 3) v = gray + s * (v - gray);
        f.at(y, x, ch) = static_cast<S>(std::clamp(v, 0.0, 1.0));
      }
    }
}

template <typename S>
void to_grayscale(Frame<S>& f) {
  if (f.channels != 3) return;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      S gray = static_cast<S>(0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) +
                              0.114 * f.at(y, x, 2));
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = gray;
    }
}

template <typename S>
void hflip(Frame<S>& f) {
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width / 2; ++x)
      for (int c = 0; c < f.channels; ++c)
        std::swap(f.at(y, x, c), f.at(y, f.width - 1 - x, c));
}

template <typename S>
AugmentedView<S> make_one_view(const Frame<S>& base, int out_size, double scale_min,
                               double scale_max, const AugmentConfig& cfg, Rng& rng) {
  double area = rng.uniform(scale_min, scale_max);
  int side = std::max(1, static_cast<int>(std::lround(std::sqrt(area) * base.height)));
  side = std::min(side, std::min(base.height, base.width));
  AugmentedView<S> v;
  v.geom.side = side;
  v.geom.out_size = out_size;
  v.geom.x0 = static_cast<int>(rng.uniform_int(base.width - side + 1));
  v.geom.y0 = static_cast<int>(rng.uniform_int(base.height - side + 1));

  Frame<S> crop(side, side, base.channels);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < base.channels; ++c)
        crop.at(y, x, c) = base.at(v.geom.y0 + y, v.geom.x0 + x, c);

  v.image = resize_frame(crop, out_size, out_size);
  v.geom.flipped = rng.uniform() < cfg.flip_prob;
  if (v.geom.flipped) hflip(v.image);
  color_jitter(v.image, cfg, rng);
  if (rng.uniform() < cfg.grayscale_prob) to_grayscale(v.image);
  return v;
}

}  // namespace detail

/// Two global views and m local views of one base crop, with recorded crop
/// geometry and deterministic augmentation given the rng stream.
template <typename S>
ViewSet<S> make_views(const Frame<S>& base, const AugmentConfig& cfg, Rng rng) {
  ViewSet<S> out;
  for (int i = 0; i < 2; ++i)
    out.global.push_back(detail::make_one_view(base, cfg.global_size,
                                               cfg.global_scale_min,
                                               cfg.global_scale_max, cfg, rng));
  for (int i = 0; i < cfg.n_local; ++i)
    out.local.push_back(detail::make_one_view(base, cfg.local_size,
                                              cfg.local_scale_min,
                                              cfg.local_scale_max, cfg, rng));
  return out;
}

// ---------------------------------------------------------------------------
// synthetic moving-shapes clips

enum class ShapeKind { disc = 0, square = 1, triangle = 2 };

template <typename S>
struct SyntheticClip {
  std::vector<Frame<S>> frames;
  // [frame][object]; masks are pairwise disjoint per frame (later objects
  // occlude earlier ones)
  std::vector<std::vector<BinaryMask>> masks;
  std::vector<std::vector<BoxRect>> boxes;
  std::vector<ShapeKind> kinds; // per object
};

namespace detail {

inline bool inside_shape(ShapeKind kind, double cx, double cy, double r, int x, int y) {
  double dx = x - cx, dy = y - cy;
  switch (kind) {
    case ShapeKind::disc:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::square:
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::triangle:
      // upward triangle inscribed in the radius-r box
      return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) / 2.0;
  }
  return false;
}

}  // namespace detail

struct SynthMotion {
  double min_speed = 0.5;
  double max_speed = 2.5;
  double max_curve = 0.05;

  static SynthMotion none() { return {0.0, 0.0, 0.0}; }
};

/// Distinct-colored moving shapes over a low-contrast textured background,
/// with per-frame ground-truth masks and tight boxes. Shape kinds cycle as
/// (seed + object index) mod 3, so labels are recoverable from the seed; the
/// colors are drawn independently of the kind.
template <typename S>
SyntheticClip<S> gen_synthetic_clip(int n_objects, int size, int frames, uint64_t seed,
                                    const SynthMotion& motion = {}) {
  detail::check(n_objects >= 1, "gen_synthetic_clip: n_objects must be >= 1");
  detail::check(frames >= 1, "gen_synthetic_clip: frames must be >= 1");
  const double radius = size / 6.5;
  if (2.0 * radius + 4.0 >= size)
    throw std::invalid_argument("gen_synthetic_clip: objects do not fit in frame");
  if (n_objects > 5)
    throw std::invalid_argument("gen_synthetic_clip: overcrowded configuration");

  Rng root(seed);
  Rng bg_rng = root.fork("background");

  // textured background: a few low-amplitude sinusoids plus hash noise
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i)
    waves.push_back({bg_rng.uniform(0.02, 0.12), bg_rng.uniform(0.02, 0.12),
                     bg_rng.uniform(0.0, 2.0 * std::numbers::pi),
                     bg_rng.uniform(0.02, 0.05)});
  const uint64_t noise_salt = bg_rng.next_u64();
  auto background_at = [&](int x, int y, int c) {
    double v = 0.35 + 0.05 * c;
    for (const auto& w : waves)
      v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
    uint64_t hsh = noise_salt ^ (static_cast<uint64_t>(y) * 0x9e3779b1u + x * 0x85ebca6bu + c);
    hsh ^= hsh >> 33;
    hsh *= 0xff51afd7ed558ccdull;
    hsh ^= hsh >> 33;
    v += (static_cast<double>(hsh & 0xffff) / 65535.0 - 0.5) * 0.04;
    return std::clamp(v, 0.0, 1.0);
  };

  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng obj_rng = root.fork("objects").fork(static_cast<uint64_t>(attempt));
    struct Obj {
      ShapeKind kind;
      double x0, y0, vx, vy, ax, ay;
      std::array<double, 3> color;
    };
    std::vector<Obj> objs;
    const double margin = radius + 2.0;
    for (int j = 0; j < n_objects; ++j) {
      Obj o;
      o.kind = static_cast<ShapeKind>((seed + static_cast<uint64_t>(j)) % 3);
      o.x0 = obj_rng.uniform(margin, size - margin);
      o.y0 = obj_rng.uniform(margin, size - margin);
      double speed = obj_rng.uniform(motion.min_speed, motion.max_speed);
      double angle = obj_rng.uniform(0.0, 2.0 * std::numbers::pi);
      o.vx = speed * std::cos(angle);
      o.vy = speed * std::sin(angle);
      o.ax = obj_rng.uniform(-motion.max_curve, motion.max_curve);
      o.ay = obj_rng.uniform(-motion.max_curve, motion.max_curve);
      o.color = {obj_rng.uniform(0.1, 1.0), obj_rng.uniform(0.1, 1.0),
                 obj_rng.uniform(0.1, 1.0)};
      objs.push_back(o);
    }

    SyntheticClip<S> clip;
    for (const auto& o : objs) clip.kinds.push_back(o.kind);
    bool ok = true;

    for (int t = 0; t < frames && ok; ++t) {
      Frame<S> frame(size, size, 3);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          for (int c = 0; c < 3; ++c)
            frame.at(y, x, c) = static_cast<S>(background_at(x, y, c));

      // occupancy: which object owns each pixel after occlusion
      Tensor<int32_t> owner({size, size}, -1);
      for (int j = 0; j < n_objects; ++j) {
        const auto& o = objs[j];
        double cx = std::clamp(o.x0 + o.vx * t + o.ax * t * t, margin, size - margin);
        double cy = std::clamp(o.y0 + o.vy * t + o.ay * t * t, margin, size - margin);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            if (detail::inside_shape(o.kind, cx, cy, radius, x, y)) {
              owner(y, x) = j;
              for (int c = 0; c < 3; ++c)
                frame.at(y, x, c) = static_cast<S>(o.color[c]);
            }
      }

      std::vector<BinaryMask> frame_masks;
      std::vector<BoxRect> frame_boxes;
      for (int j = 0; j < n_objects; ++j) {
        BinaryMask mask({size, size}, uint8_t(0));
        BoxRect box{size, size, -1, -1};
        int64_t count = 0;
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            if (owner(y, x) == j) {
              mask(y, x) = 1;
              ++count;
              box.x0 = std::min(box.x0, x);
              box.x1 = std::max(box.x1, x);
              box.y0 = std::min(box.y0, y);
              box.y1 = std::max(box.y1, y);
            }
        // each object must stay visible in every frame; min pixels scales
        // with the shape size so tiny test frames still generate
        const int64_t min_visible =
            std::max<int64_t>(3, static_cast<int64_t>(radius * radius / 3.0));
        if (count < min_visible) {
          ok = false;
          break;
        }
        frame_masks.push_back(std::move(mask));
        frame_boxes.push_back(box);
      }
      if (!ok) break;
      clip.frames.push_back(std::move(frame));
      clip.masks.push_back(std::move(frame_masks));
      clip.boxes.push_back(std::move(frame_boxes));
    }

    if (ok) return clip;
  }
  throw std::invalid_argument(
      "gen_synthetic_clip: overcrowded configuration, objects keep occluding");
}

/// Writes `n_clips` synthetic clips in the on-disk dataset layout:
/// clips/<id>/frame_%06d.ppm, clips/<id>/mask_obj<j>_%06d.pgm and a
/// manifest.txt of `clip_id n_objects T seed` lines.
inline void write_synthetic_dataset(const std::string& out_dir, int n_clips,
                                    int n_objects, int size, int frames,
                                    uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/clips");
  std::ofstream manifest(out_dir + "/manifest.txt");
  if (!manifest) throw data_error(out_dir + ": cannot write manifest");
  for (int i = 0; i < n_clips; ++i) {
    uint64_t clip_seed = Rng(seed).fork("synth").fork(static_cast<uint64_t>(i)).next_u64();
    auto clip = gen_synthetic_clip<float>(n_objects, size, frames, clip_seed);
    std::string dir = out_dir + "/clips/" + std::to_string(i);
    fs::create_directories(dir);
    char name[48];
    for (int t = 0; t < frames; ++t) {
      std::snprintf(name, sizeof(name), "/frame_%06d.ppm", t);
      write_ppm(dir + name, clip.frames[t]);
      for (int j = 0; j < n_objects; ++j) {
        std::snprintf(name, sizeof(name), "/mask_obj%d_%06d.pgm", j, t);
        Tensor<float> m({size, size});
        for (int64_t p = 0; p < m.size(); ++p)
          m[p] = clip.masks[t][j][p] ? 1.0f : 0.0f;
        write_pgm(dir + name, m);
      }
    }
    manifest << i << " " << n_objects << " " << frames << " " << clip_seed << "\n";
  }
}

struct ManifestEntry {
  int clip_id = 0;
  int n_objects = 0;
  int frames = 0;
  uint64_t seed = 0;

  /// Shape kind of object j, as produced by gen_synthetic_clip.
  int kind_of(int j) const { return static_cast<int>((seed + j) % 3); }
};

inline std::vector<ManifestEntry> read_manifest(const std::string& dataset_dir) {
  std::ifstream in(dataset_dir + "/manifest.txt");
  if (!in) throw data_error(dataset_dir + ": cannot open manifest.txt");
  std::vector<ManifestEntry> entries;
  ManifestEntry e;
  while (in >> e.clip_id >> e.n_objects >> e.frames >> e.seed) entries.push_back(e);
  if (entries.empty()) throw data_error(dataset_dir + ": empty manifest");
  return entries;
}

}  // namespace dora
