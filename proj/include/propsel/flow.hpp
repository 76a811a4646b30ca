#pragma once

// Optical flow: pyramidal Lucas-Kanade, Middlebury .flo and EMAP file I/O,
// in-box flow statistics and motion-boundary maps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"

namespace propsel {

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;  // frame t-1 -> t, row-major
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.f), v(u) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<float> response;  // >= 0, row-major

  EdgeMap() = default;
  EdgeMap(int w, int h) : width(w), height(h), response(static_cast<std::size_t>(w) * h, 0.f) {}

  float at(int x, int y) const { return response[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const EdgeMap&, const EdgeMap&) = default;
};

// ---------------------------------------------------------------------------
// Pyramidal Lucas-Kanade

namespace flow_detail {

// 5-tap binomial blur (edge replicated) followed by 2x decimation.
inline Image half(const Image& img) {
  static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  const int sw = img.width(), sh = img.height();
  Image tmp(sw, sh);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x) {
      double s = 0;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * img(std::clamp(x + t, 0, sw - 1), y);
      tmp(x, y) = static_cast<float>(s);
    }
  const int w = std::max(1, (sw + 1) / 2);
  const int h = std::max(1, (sh + 1) / 2);
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * tmp(std::min(2 * x, sw - 1), std::clamp(2 * y + t, 0, sh - 1));
      out(x, y) = static_cast<float>(s);
    }
  return out;
}

// Separable box sum with a (2r+1) window, zero outside.
inline std::vector<double> box_sum(const std::vector<double>& in, int w, int h, int r) {
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    double acc = 0;
    const double* row = &in[static_cast<std::size_t>(y) * w];
    for (int x = 0; x <= std::min(r, w - 1); ++x) acc += row[x];
    for (int x = 0; x < w; ++x) {
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
      if (x + r + 1 < w) acc += row[x + r + 1];
      if (x - r >= 0) acc -= row[x - r];
    }
  }
  for (int x = 0; x < w; ++x) {
    double acc = 0;
    for (int y = 0; y <= std::min(r, h - 1); ++y) acc += tmp[static_cast<std::size_t>(y) * w + x];
    for (int y = 0; y < h; ++y) {
      out[static_cast<std::size_t>(y) * w + x] = acc;
      if (y + r + 1 < h) acc += tmp[static_cast<std::size_t>(y + r + 1) * w + x];
      if (y - r >= 0) acc -= tmp[static_cast<std::size_t>(y - r) * w + x];
    }
  }
  return out;
}

/// Gauss-Newton iterations of windowed LK at every pixel. Each window is
/// warped rigidly by the flow of its center pixel.
inline void refine_level(const Image& prev, const Image& cur, FlowField& f, int radius, int iterations) {
  const int w = prev.width(), h = prev.height();
  const std::size_t n = prev.size();
  std::vector<double> ix(n), iy(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ix[i] = (prev(xr, y) - prev(xl, y)) / std::max(1, xr - xl);
      iy[i] = (prev(x, yd) - prev(x, yu)) / std::max(1, yd - yu);
    }
  }
  std::vector<double> xx(n), xy(n), yy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = ix[i] * ix[i];
    xy[i] = ix[i] * iy[i];
    yy[i] = iy[i] * iy[i];
  }
  const auto gxx = box_sum(xx, w, h, radius);
  const auto gxy = box_sum(xy, w, h, radius);
  const auto gyy = box_sum(yy, w, h, radius);
  auto at = [&](int x, int y) { return static_cast<double>(cur(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1))); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double a = gxx[i], b = gxy[i], d = gyy[i];
      const double det = a * d - b * b;
      const double tr = a + d;
      // Skip windows whose smaller eigenvalue is negligible (aperture problem).
      const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det)));
      if (min_eig < 1e-6) continue;
      double u = f.u[i], v = f.v[i];
      for (int it = 0; it < iterations; ++it) {
        const double fx = std::floor(u), fy = std::floor(v);
        const int ox = static_cast<int>(fx), oy = static_cast<int>(fy);
        const double ax = u - fx, ay = v - fy;
        double sbx = 0, sby = 0;
        for (int wy = std::max(0, y - radius); wy <= std::min(h - 1, y + radius); ++wy) {
          for (int wx = std::max(0, x - radius); wx <= std::min(w - 1, x + radius); ++wx) {
            const int sx = wx + ox, sy = wy + oy;
            const double c = (1 - ay) * ((1 - ax) * at(sx, sy) + ax * at(sx + 1, sy)) +
                             ay * ((1 - ax) * at(sx, sy + 1) + ax * at(sx + 1, sy + 1));
            const std::size_t j = static_cast<std::size_t>(wy) * w + wx;
            const double r = c - prev(wx, wy);
            sbx += ix[j] * r;
            sby += iy[j] * r;
          }
        }
        const double du = -(d * sbx - b * sby) / det;
        const double dv = -(-b * sbx + a * sby) / det;
        u += std::clamp(du, -4.0, 4.0);
        v += std::clamp(dv, -4.0, 4.0);
      }
      f.u[i] = static_cast<float>(u);
      f.v[i] = static_cast<float>(v);
    }
  }
}

inline FlowField upsample(const FlowField& coarse, int w, int h) {
  FlowField f(w, h);
  const double rx = static_cast<double>(coarse.width) / w;
  const double ry = static_cast<double>(coarse.height) / h;
  const Image cu(coarse.width, coarse.height, coarse.u);
  const Image cv(coarse.width, coarse.height, coarse.v);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = (x + 0.5) * rx - 0.5, sy = (y + 0.5) * ry - 0.5;
      f.u[f.index(x, y)] = static_cast<float>(sample_clamp(cu, sx, sy) / rx);
      f.v[f.index(x, y)] = static_cast<float>(sample_clamp(cv, sx, sy) / ry);
    }
  }
  return f;
}

}  // namespace flow_detail

inline int auto_pyramid_levels(int width, int height) {
  const double m = std::min(width, height) / 16.0;
  return std::max(1, static_cast<int>(std::floor(std::log2(std::max(m, 1.0)))));
}

/// Dense coarse-to-fine Lucas-Kanade with a 7x7 window and 3 warps per level.
/// `levels` <= 0 picks floor(log2(min(w, h) / 16)).
inline FlowField compute_flow(const Image& prev, const Image& cur, int levels = 0) {
  if (prev.width() != cur.width() || prev.height() != cur.height())
    throw Error(ErrorCode::SizeMismatch, "flow frames differ in size");
  if (prev.width() < 32 || prev.height() < 32)
    throw Error(ErrorCode::InvalidArgument, "flow needs frames of at least 32x32");
  if (levels <= 0) levels = auto_pyramid_levels(prev.width(), prev.height());
  std::vector<Image> pp{prev}, pc{cur};
  for (int l = 1; l < levels; ++l) {
    if (pp.back().width() < 8 || pp.back().height() < 8) break;
    pp.push_back(flow_detail::half(pp.back()));
    pc.push_back(flow_detail::half(pc.back()));
  }
  FlowField f(pp.back().width(), pp.back().height());
  for (int l = static_cast<int>(pp.size()) - 1; l >= 0; --l) {
    if (f.width != pp[l].width() || f.height != pp[l].height())
      f = flow_detail::upsample(f, pp[l].width(), pp[l].height());
    flow_detail::refine_level(pp[l], pc[l], f, 3, 3);
  }
  return f;
}

// ---------------------------------------------------------------------------
// File formats

static_assert(std::endian::native == std::endian::little, "flow I/O assumes a little-endian host");

namespace flow_detail {

template <typename T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& bytes, std::size_t& pos, const std::string& path) {
  if (bytes.size() - pos < sizeof(T) || pos > bytes.size())
    throw Error(ErrorCode::TruncatedPayload, path);
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace flow_detail

inline constexpr float kFloMagic = 202021.25f;

inline void write_flo(const FlowField& f, const std::string& path) {
  std::string buf;
  flow_detail::put(buf, kFloMagic);
  flow_detail::put(buf, static_cast<std::int32_t>(f.width));
  flow_detail::put(buf, static_cast<std::int32_t>(f.height));
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    flow_detail::put(buf, f.u[i]);
    flow_detail::put(buf, f.v[i]);
  }
  detail::write_file(path, buf);
}

inline FlowField read_flo(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::size_t pos = 0;
  const float magic = flow_detail::get<float>(bytes, pos, path);
  if (magic != kFloMagic) throw Error(ErrorCode::BadMagic, ".flo magic mismatch: " + path);
  const auto w = flow_detail::get<std::int32_t>(bytes, pos, path);
  const auto h = flow_detail::get<std::int32_t>(bytes, pos, path);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16))
    throw Error(ErrorCode::Format, ".flo dimensions out of range: " + path);
  FlowField f(w, h);
  if (bytes.size() - pos < f.u.size() * 8) throw Error(ErrorCode::TruncatedPayload, path);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = flow_detail::get<float>(bytes, pos, path);
    f.v[i] = flow_detail::get<float>(bytes, pos, path);
  }
  return f;
}

inline void write_emap(const EdgeMap& m, const std::string& path) {
  std::string buf = "EMAP";
  flow_detail::put(buf, static_cast<std::int32_t>(m.width));
  flow_detail::put(buf, static_cast<std::int32_t>(m.height));
  for (float r : m.response) flow_detail::put(buf, r);
  detail::write_file(path, buf);
}

inline EdgeMap read_emap(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "EMAP", 4) != 0)
    throw Error(ErrorCode::BadMagic, "EMAP magic mismatch: " + path);
  std::size_t pos = 4;
  const auto w = flow_detail::get<std::int32_t>(bytes, pos, path);
  const auto h = flow_detail::get<std::int32_t>(bytes, pos, path);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16))
    throw Error(ErrorCode::Format, "EMAP dimensions out of range: " + path);
  EdgeMap m(w, h);
  if (bytes.size() - pos < m.response.size() * 4) throw Error(ErrorCode::TruncatedPayload, path);
  for (auto& r : m.response) {
    r = flow_detail::get<float>(bytes, pos, path);
    if (!(r >= 0.0f) || !std::isfinite(r)) throw Error(ErrorCode::Format, "negative EMAP response: " + path);
  }
  return m;
}

// ---------------------------------------------------------------------------

/// Pixel indices whose centers fall inside the box polygon (clipped to the raster).
inline std::vector<std::pair<int, int>> pixels_in_box(const RotatedBox& box, int width, int height) {
  const Rect r = bounding_rect(box);
  const int x0 = std::max(0, static_cast<int>(std::floor(r.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(r.y)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(r.x + r.w)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(r.y + r.h)));
  std::vector<std::pair<int, int>> out;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (box.contains({static_cast<double>(x), static_cast<double>(y)})) out.emplace_back(x, y);
  return out;
}

inline double mean_flow_magnitude(const FlowField& f, const RotatedBox& box) {
  const auto px = pixels_in_box(box, f.width, f.height);
  if (px.empty()) throw Error(ErrorCode::InsufficientData, "no flow pixels inside the box");
  double s = 0.0;
  for (const auto& [x, y] : px) {
    const std::size_t i = f.index(x, y);
    s += std::hypot(static_cast<double>(f.u[i]), static_cast<double>(f.v[i]));
  }
  return s / static_cast<double>(px.size());
}

/// sqrt(|grad u|^2 + |grad v|^2); central differences, one-sided at borders.
inline EdgeMap motion_boundary_map(const FlowField& f) {
  EdgeMap m(f.width, f.height);
  auto diff = [&](const std::vector<float>& c, int x, int y, bool along_x) -> double {
    if (along_x) {
      if (f.width < 2) return 0.0;
      const int a = std::max(0, x - 1), b = std::min(f.width - 1, x + 1);
      return (static_cast<double>(c[f.index(b, y)]) - c[f.index(a, y)]) / (b - a);
    }
    if (f.height < 2) return 0.0;
    const int a = std::max(0, y - 1), b = std::min(f.height - 1, y + 1);
    return (static_cast<double>(c[f.index(x, b)]) - c[f.index(x, a)]) / (b - a);
  };
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const double ux = diff(f.u, x, y, true), uy = diff(f.u, x, y, false);
      const double vx = diff(f.v, x, y, true), vy = diff(f.v, x, y, false);
      m.response[f.index(x, y)] = static_cast<float>(std::sqrt(ux * ux + uy * uy + vx * vx + vy * vy));
    }
  }
  return m;
}

}  // namespace propsel
