#pragma once

// 31-channel HOG (Felzenszwalb layout) over a fixed cell template.
//
// Descriptor layout, cells in row-major order (cell_y outer, cell_x inner),
// 31 contiguous values per cell:
//   [0, 18)   contrast-sensitive orientation bins; bin o is centered on o * 20
//             degrees of the signed gradient direction atan2(dy, dx), image
//             axes (x right, y down)
//   [18, 27)  contrast-insensitive bins; bin o sums directions o*20 and o*20+180
//   [27, 31)  gradient energy under the four 2x2 block normalizations, blocks
//             ordered (x-1,y-1), (x,y-1), (x-1,y), (x,y) by their top-left cell
// Orientation values are the mean over the four block normalizations of
// min(h * n_block, 0.2), so each lies in [0, 0.2]. Energy values are
// 0.2357 * sum over the 18 signed bins of min(h * n_block, 0.2).
// n_block = 1 / sqrt(sum of the block's cell energies + 1e-4); a cell's
// energy is the squared norm of its 9 insensitive bins. Cells outside the
// template contribute zero energy. Pixels are hard-assigned to the nearest
// signed bin and to the cell that contains them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"

namespace propsel {

inline constexpr int kHogChannels = 31;
inline constexpr int kHogSignedBins = 18;
inline constexpr double kHogTruncation = 0.2;

struct HogTemplate {
  int cells_x = 8;
  int cells_y = 8;
  int cell_size = 8;

  int pixel_width() const { return cells_x * cell_size; }
  int pixel_height() const { return cells_y * cell_size; }
  std::size_t descriptor_size() const {
    return static_cast<std::size_t>(cells_x) * static_cast<std::size_t>(cells_y) * kHogChannels;
  }
  friend bool operator==(const HogTemplate&, const HogTemplate&) = default;
};

struct HogDescriptor {
  HogTemplate tmpl;
  std::vector<double> values;
};

/// Longer side gets 8 cells; the shorter side is proportional, at least 3.
inline HogTemplate make_template(double box_w, double box_h) {
  if (!(box_w > 0.0) || !(box_h > 0.0))
    throw Error(ErrorCode::InvalidArgument, "template box must have positive size");
  constexpr int kLong = 8;
  HogTemplate t;
  if (box_w >= box_h) {
    t.cells_x = kLong;
    t.cells_y = std::max(3, static_cast<int>(std::lround(kLong * box_h / box_w)));
  } else {
    t.cells_y = kLong;
    t.cells_x = std::max(3, static_cast<int>(std::lround(kLong * box_w / box_h)));
  }
  return t;
}

namespace hog {

/// Per-pixel signed-bin integral histograms over a sampled grid.
class CellIntegral {
 public:
  CellIntegral() = default;

  // `grid` pixels at the border have no central difference and get zero magnitude.
  explicit CellIntegral(const Image& grid) : w_(grid.width()), h_(grid.height()) {
    const std::size_t stride = static_cast<std::size_t>(w_ + 1) * kHogSignedBins;
    sums_.assign(static_cast<std::size_t>(h_ + 1) * stride, 0.0);
    std::array<double, kHogSignedBins> row{};
    for (int y = 0; y < h_; ++y) {
      row.fill(0.0);
      double* dst = &sums_[static_cast<std::size_t>(y + 1) * stride];
      const double* above = &sums_[static_cast<std::size_t>(y) * stride];
      for (int x = 0; x < w_; ++x) {
        if (x > 0 && y > 0 && x + 1 < w_ && y + 1 < h_) {
          const double dx = 0.5 * (grid(x + 1, y) - grid(x - 1, y));
          const double dy = 0.5 * (grid(x, y + 1) - grid(x, y - 1));
          const double mag = std::hypot(dx, dy);
          if (mag > 0.0) {
            double ang = std::atan2(dy, dx) * (kHogSignedBins / (2.0 * std::numbers::pi));
            int bin = static_cast<int>(std::lround(ang));
            bin = ((bin % kHogSignedBins) + kHogSignedBins) % kHogSignedBins;
            row[bin] += mag;
          }
        }
        const std::size_t o = static_cast<std::size_t>(x + 1) * kHogSignedBins;
        for (int b = 0; b < kHogSignedBins; ++b) dst[o + b] = above[o + b] + row[b];
      }
    }
  }

  int width() const { return w_; }
  int height() const { return h_; }

  /// Adds the histogram of pixels [x0, x1) x [y0, y1) into `out`; cancellation
  /// residue below zero is dropped.
  void accumulate(int x0, int y0, int x1, int y1, double* out) const {
    const std::size_t stride = static_cast<std::size_t>(w_ + 1) * kHogSignedBins;
    const double* a = &sums_[static_cast<std::size_t>(y0) * stride + static_cast<std::size_t>(x0) * kHogSignedBins];
    const double* b = &sums_[static_cast<std::size_t>(y0) * stride + static_cast<std::size_t>(x1) * kHogSignedBins];
    const double* c = &sums_[static_cast<std::size_t>(y1) * stride + static_cast<std::size_t>(x0) * kHogSignedBins];
    const double* d = &sums_[static_cast<std::size_t>(y1) * stride + static_cast<std::size_t>(x1) * kHogSignedBins];
    for (int k = 0; k < kHogSignedBins; ++k) out[k] += std::max(0.0, d[k] - b[k] - c[k] + a[k]);
  }

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<double> sums_;
};

/// Scratch space reused across windows.
struct Workspace {
  std::vector<double> hist;
  std::vector<double> energy;
};

/// Writes the descriptor of the window whose first interior pixel is grid
/// pixel (ox, oy). Requires a one-pixel grid margin around the window.
inline void descriptor_at(const CellIntegral& integral, int ox, int oy, const HogTemplate& t,
                          std::span<double> out, Workspace& ws) {
  const int cx = t.cells_x, cy = t.cells_y, cs = t.cell_size;
  ws.hist.assign(static_cast<std::size_t>(cx) * cy * kHogSignedBins, 0.0);
  ws.energy.assign(static_cast<std::size_t>(cx) * cy, 0.0);
  for (int j = 0; j < cy; ++j) {
    for (int i = 0; i < cx; ++i) {
      double* h = &ws.hist[(static_cast<std::size_t>(j) * cx + i) * kHogSignedBins];
      const int x0 = ox + i * cs, y0 = oy + j * cs;
      integral.accumulate(x0, y0, x0 + cs, y0 + cs, h);
      double e = 0.0;
      for (int o = 0; o < 9; ++o) {
        const double u = h[o] + h[o + 9];
        e += u * u;
      }
      ws.energy[static_cast<std::size_t>(j) * cx + i] = e;
    }
  }
  auto energy = [&](int i, int j) -> double {
    if (i < 0 || j < 0 || i >= cx || j >= cy) return 0.0;
    return ws.energy[static_cast<std::size_t>(j) * cx + i];
  };
  for (int j = 0; j < cy; ++j) {
    for (int i = 0; i < cx; ++i) {
      double n[4];
      int k = 0;
      for (int bj = j - 1; bj <= j; ++bj)
        for (int bi = i - 1; bi <= i; ++bi)
          n[k++] = 1.0 / std::sqrt(energy(bi, bj) + energy(bi + 1, bj) + energy(bi, bj + 1) +
                                   energy(bi + 1, bj + 1) + 1e-4);
      const double* h = &ws.hist[(static_cast<std::size_t>(j) * cx + i) * kHogSignedBins];
      double* dst = &out[(static_cast<std::size_t>(j) * cx + i) * kHogChannels];
      double tex[4] = {0, 0, 0, 0};
      for (int o = 0; o < kHogSignedBins; ++o) {
        double sum = 0.0;
        for (int b = 0; b < 4; ++b) {
          const double v = std::min(h[o] * n[b], kHogTruncation);
          sum += v;
          tex[b] += v;
        }
        dst[o] = 0.25 * sum;
      }
      for (int o = 0; o < 9; ++o) {
        const double u = h[o] + h[o + 9];
        double sum = 0.0;
        for (int b = 0; b < 4; ++b) sum += std::min(u * n[b], kHogTruncation);
        dst[kHogSignedBins + o] = 0.25 * sum;
      }
      for (int b = 0; b < 4; ++b) dst[27 + b] = 0.2357 * tex[b];
    }
  }
}

/// Samples a grid whose pixel (i, j) sits at frame point
/// center + R(angle) * (origin + ((i + 0.5) / fx, (j + 0.5) / fy)).
/// `origin` is relative to `center` in the rotated frame.
inline Image sample_grid(const Image& img, Point center, double angle, Point origin, double fx,
                         double fy, int gw, int gh) {
  Image grid(gw, gh);
  const double c = std::cos(deg2rad(angle));
  const double s = std::sin(deg2rad(angle));
  for (int j = 0; j < gh; ++j) {
    const double ly = origin.y + (j + 0.5) / fy;
    for (int i = 0; i < gw; ++i) {
      const double lx = origin.x + (i + 0.5) / fx;
      grid(i, j) = static_cast<float>(
          sample_zero(img, center.x + c * lx - s * ly, center.y + s * lx + c * ly));
    }
  }
  return grid;
}

}  // namespace hog

/// Descriptor of an oriented window: the window is sampled in its own frame
/// onto the template raster (zero outside the image).
inline HogDescriptor compute_hog(const Image& img, const RotatedBox& window, const HogTemplate& tmpl) {
  if (!(window.w > 0.0) || !(window.h > 0.0) || !window.valid())
    throw Error(ErrorCode::Degenerate, "HOG window has zero area");
  const int pw = tmpl.pixel_width(), ph = tmpl.pixel_height();
  const double fx = pw / window.w;
  const double fy = ph / window.h;
  // One margin pixel on each side so border gradients see real context.
  const Point origin{-window.w / 2 - 1.0 / fx, -window.h / 2 - 1.0 / fy};
  const Image grid = hog::sample_grid(img, window.center(), window.angle, origin, fx, fy, pw + 2, ph + 2);
  const hog::CellIntegral integral(grid);
  HogDescriptor d{tmpl, std::vector<double>(tmpl.descriptor_size())};
  hog::Workspace ws;
  hog::descriptor_at(integral, 1, 1, tmpl, d.values, ws);
  return d;
}

inline HogDescriptor compute_hog(const Image& img, const Rect& window, const HogTemplate& tmpl) {
  if (!(window.w > 0.0) || !(window.h > 0.0))
    throw Error(ErrorCode::Degenerate, "HOG window has zero area");
  return compute_hog(img, window.as_box(), tmpl);
}

}  // namespace propsel
