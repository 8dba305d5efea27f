#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <vector>

#include "dora/errors.hpp"
#include "dora/tensor.hpp"

namespace dora {

/// Inclusive pixel bounds.
struct BoxRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int64_t area() const {
    return static_cast<int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
  }
  bool valid() const { return x0 <= x1 && y0 <= y1; }
};

inline double iou(const BoxRect& a, const BoxRect& b) {
  detail::check(a.valid() && b.valid(), "iou: invalid box");
  int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  if (ix0 > ix1 || iy0 > iy1) return 0.0;
  int64_t inter = static_cast<int64_t>(ix1 - ix0 + 1) * (iy1 - iy0 + 1);
  int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

using BinaryMask = Tensor<uint8_t>; // rank-2 {h, w}, 0/1

/// |P and G| / |P or G|; both-empty is defined as 1.0 (they agree that
/// nothing is there).
inline double jaccard(const BinaryMask& pred, const BinaryMask& gt) {
  detail::check(pred.same_shape(gt), "jaccard: dim mismatch");
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Percentage of images whose single predicted box reaches IoU >= 0.5 with at
/// least one ground-truth box.
inline double corloc(const std::vector<BoxRect>& predictions,
                     const std::vector<std::vector<BoxRect>>& gts) {
  detail::check(predictions.size() == gts.size(), "corloc: length mismatch");
  detail::check(!predictions.empty(), "corloc: empty input");
  int correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    for (const auto& g : gts[i]) {
      if (iou(predictions[i], g) >= 0.5) {
        ++correct;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

/// Keeps the highest values until `mass` of the total is retained: the
/// smallest descending-sorted prefix whose cumulative sum reaches
/// mass * total. Equal values are taken lowest-index-first; the Reached
/// comparison carries a 1e-12 relative slack so exact-fraction cases are
/// stable under floating-point summation.
template <typename S>
BinaryMask attention_to_mask(const Tensor<S>& map, double mass = 0.8) {
  detail::check(mass > 0.0 && mass <= 1.0, "attention_to_mask: mass must be in (0,1]");
  double total = 0.0;
  for (int64_t i = 0; i < map.size(); ++i) {
    detail::check(map[i] >= S(0), "attention_to_mask: negative values");
    total += static_cast<double>(map[i]);
  }
  if (total <= 0.0)
    throw std::invalid_argument("attention_to_mask: zero-total map");

  std::vector<int64_t> order(map.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return map[a] > map[b];
  });

  BinaryMask out;
  out.shape = map.shape;
  out.data.assign(map.data.size(), 0);
  // The positive entries alone always reach the target, so zero entries are
  // never marked (mass 1.0 keeps exactly the positive support).
  const double target = mass * total - 1e-12 * total;
  double cum = 0.0;
  for (int64_t i : order) {
    out[i] = 1;
    cum += static_cast<double>(map[i]);
    if (cum >= target) break;
  }
  return out;
}

/// Tight box over the largest 4-connected component; raster-first wins ties.
inline BoxRect bounding_box(const BinaryMask& mask) {
  detail::check(mask.rank() == 2, "bounding_box: rank-2 mask expected");
  const int64_t h = mask.rows(), w = mask.cols();
  std::vector<int32_t> label(static_cast<size_t>(h * w), -1);
  int32_t next = 0;
  int64_t best_size = 0;
  BoxRect best;
  bool found = false;

  for (int64_t sy = 0; sy < h; ++sy)
    for (int64_t sx = 0; sx < w; ++sx) {
      if (mask(sy, sx) == 0 || label[sy * w + sx] >= 0) continue;
      // BFS one component
      std::deque<std::pair<int64_t, int64_t>> queue{{sy, sx}};
      label[sy * w + sx] = next;
      int64_t count = 0;
      BoxRect box{static_cast<int>(sx), static_cast<int>(sy),
                  static_cast<int>(sx), static_cast<int>(sy)};
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        ++count;
        box.x0 = std::min(box.x0, static_cast<int>(x));
        box.x1 = std::max(box.x1, static_cast<int>(x));
        box.y0 = std::min(box.y0, static_cast<int>(y));
        box.y1 = std::max(box.y1, static_cast<int>(y));
        const int64_t dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          int64_t ny = y + dy[d], nx = x + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (mask(ny, nx) == 0 || label[ny * w + nx] >= 0) continue;
          label[ny * w + nx] = next;
          queue.push_back({ny, nx});
        }
      }
      if (count > best_size) {
        best_size = count;
        best = box;
        found = true;
      }
      ++next;
    }

  if (!found) throw std::invalid_argument("bounding_box: empty mask");
  return best;
}

/// Frozen-feature bank for nearest-neighbour classification. Features are
/// L2-normalized on insertion.
struct FeatureBank {
  std::vector<std::vector<float>> features;
  std::vector<int> labels;
  bool normalized = true;

  void add(const Tensor<float>& feature, int label) {
    std::vector<float> f(feature.data.begin(), feature.data.end());
    if (!features.empty() && f.size() != features.front().size())
      throw std::invalid_argument("feature bank: inconsistent dimensionality");
    double norm = 0.0;
    for (float v : f) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& v : f) v = static_cast<float>(v / norm);
    features.push_back(std::move(f));
    labels.push_back(label);
  }

  size_t size() const { return features.size(); }
};

/// Majority label among the k nearest neighbours by cosine distance.
/// Vote ties break by smaller mean distance, then lower class id.
inline int knn_classify(const FeatureBank& bank, const Tensor<float>& query, int k = 20) {
  if (static_cast<int>(bank.size()) < k)
    throw std::invalid_argument("knn_classify: bank smaller than k");
  std::vector<float> q(query.data.begin(), query.data.end());
  double norm = 0.0;
  for (float v : q) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (auto& v : q) v = static_cast<float>(v / norm);

  std::vector<std::pair<double, size_t>> dist(bank.size());
  for (size_t i = 0; i < bank.size(); ++i) {
    double dp = 0.0;
    const auto& f = bank.features[i];
    if (f.size() != q.size())
      throw std::invalid_argument("knn_classify: query dimensionality mismatch");
    for (size_t j = 0; j < q.size(); ++j) dp += static_cast<double>(f[j]) * q[j];
    dist[i] = {1.0 - dp, i};
  }
  std::sort(dist.begin(), dist.end());

  std::map<int, std::pair<int, double>> votes; // label -> (count, dist sum)
  for (int i = 0; i < k; ++i) {
    int label = bank.labels[dist[i].second];
    auto& v = votes[label];
    v.first += 1;
    v.second += dist[i].first;
  }
  int best_label = -1;
  int best_count = -1;
  double best_mean = 0.0;
  for (const auto& [label, v] : votes) {
    double mean = v.second / v.first;
    bool wins = v.first > best_count ||
                (v.first == best_count && mean < best_mean) ||
                (v.first == best_count && mean == best_mean && label < best_label);
    if (wins) {
      best_label = label;
      best_count = v.first;
      best_mean = mean;
    }
  }
  return best_label;
}

}  // namespace dora
