#pragma once

// Edgeness of a box: contour mass enclosed by the box, with contours that
// reach the box boundary discarded.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/flow.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"

namespace propsel {

inline constexpr double kDefaultEdgeThreshold = 0.1;
inline constexpr double kBoundaryRing = 2.0;

/// Gradient magnitude scaled by its 99th percentile and clamped to [0, 1].
inline EdgeMap edge_map(const Image& img) {
  const GradientField g = gradients(img);
  EdgeMap m(img.width(), img.height());
  std::vector<float> sorted = g.magnitude;
  const std::size_t k = static_cast<std::size_t>(std::floor(0.99 * (sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  float ref = sorted[k];
  if (!(ref > 0.0f)) ref = *std::max_element(g.magnitude.begin(), g.magnitude.end());
  if (!(ref > 0.0f)) return m;
  for (std::size_t i = 0; i < m.response.size(); ++i)
    m.response[i] = std::min(1.0f, g.magnitude[i] / ref);
  return m;
}

struct ContourMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // 0 = background, contours 1..count
  int count = 0;

  std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-connected components of {response >= threshold}.
inline ContourMap label_contours(const EdgeMap& edges, double threshold) {
  if (!(threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "edge threshold must be >= 0");
  ContourMap c{edges.width, edges.height, std::vector<std::int32_t>(edges.response.size(), 0), 0};
  std::vector<std::size_t> stack;
  for (int y = 0; y < edges.height; ++y) {
    for (int x = 0; x < edges.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * edges.width + x;
      if (c.labels[i] != 0 || edges.response[i] < threshold) continue;
      const std::int32_t id = ++c.count;
      c.labels[i] = id;
      stack.push_back(i);
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        const int cx = static_cast<int>(cur % edges.width), cy = static_cast<int>(cur / edges.width);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= edges.width || ny >= edges.height) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * edges.width + nx;
            if (c.labels[j] == 0 && edges.response[j] >= threshold) {
              c.labels[j] = id;
              stack.push_back(j);
            }
          }
        }
      }
    }
  }
  return c;
}

/// Sum of contour response strictly enclosed by the box, per unit box area.
/// A contour is discarded when any of its pixels lies in the ring of width 2
/// just outside the box polygon.
inline double edgeness_score(const EdgeMap& edges, const ContourMap& contours, const RotatedBox& box) {
  if (!box.valid()) throw Error(ErrorCode::Degenerate, "edgeness box is degenerate");
  if (contours.width != edges.width || contours.height != edges.height)
    throw Error(ErrorCode::SizeMismatch, "contour map does not match edge map");
  const RotatedBox outer{box.cx, box.cy, box.w + 2 * kBoundaryRing, box.h + 2 * kBoundaryRing, box.angle};
  const Rect r = bounding_rect(outer);
  const int x0 = std::max(0, static_cast<int>(std::floor(r.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(r.y)));
  const int x1 = std::min(edges.width - 1, static_cast<int>(std::ceil(r.x + r.w)));
  const int y1 = std::min(edges.height - 1, static_cast<int>(std::ceil(r.y + r.h)));
  if (x0 > x1 || y0 > y1) return 0.0;
  std::vector<char> touched(static_cast<std::size_t>(contours.count) + 1, 0);
  std::vector<std::pair<std::size_t, std::int32_t>> inside;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const std::int32_t id = contours.at(x, y);
      if (id == 0) continue;
      const Point l = box.to_local({static_cast<double>(x), static_cast<double>(y)});
      const bool in = std::abs(l.x) <= box.w / 2 && std::abs(l.y) <= box.h / 2;
      if (in) {
        inside.emplace_back(static_cast<std::size_t>(y) * edges.width + x, id);
      } else if (std::abs(l.x) <= box.w / 2 + kBoundaryRing && std::abs(l.y) <= box.h / 2 + kBoundaryRing) {
        touched[static_cast<std::size_t>(id)] = 1;
      }
    }
  }
  double sum = 0.0;
  for (const auto& [i, id] : inside)
    if (!touched[static_cast<std::size_t>(id)]) sum += edges.response[i];
  return sum / box.area();
}

/// Scores of the previously selected proposals, last five frames.
class CueHistory {
 public:
  static constexpr std::size_t kCapacity = 5;

  void push(double score) {
    values_.push_back(score);
    if (values_.size() > kCapacity) values_.pop_front();
  }
  std::size_t size() const { return values_.size(); }
  bool full() const { return values_.size() == kCapacity; }
  const std::deque<double>& values() const { return values_; }

  double mean() const {
    if (values_.empty()) return 0.0;
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
  }
  /// Population variance.
  double variance() const {
    if (values_.empty()) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values_) s += (v - m) * (v - m);
    return s / static_cast<double>(values_.size());
  }

 private:
  std::deque<double> values_;
};

inline constexpr double kGateEpsilon = 1e-6;

/// Cue is trusted only with a full history and when the best candidate's
/// score deviates from the history mean by less than twice its variance.
inline bool temporal_gate(const CueHistory& hist, double best_candidate_score) {
  if (!hist.full()) return false;
  return std::abs(best_candidate_score - hist.mean()) < 2.0 * hist.variance() + kGateEpsilon;
}

}  // namespace propsel
