#pragma once

// Single-channel intensity images in [0,1], file I/O and the resampling
// primitives shared by the feature, flow and rendering code.
//
// Pixel (x, y) has its center at the continuous coordinate (x, y).

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "propsel/error.hpp"

namespace propsel {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Rotates `p` by `deg` degrees (x right, y down).
inline Point rotate(Point p, double deg) {
  const double c = std::cos(deg2rad(deg));
  const double s = std::sin(deg2rad(deg));
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f)
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}
  Image(int width, int height, std::vector<float> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height))
      throw Error(ErrorCode::SizeMismatch, "image data length does not match dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  float operator()(int x, int y) const { return data_[index(x, y)]; }
  float& operator()(int x, int y) { return data_[index(x, y)]; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width <= 0 || height <= 0)
      throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// Bilinear sample with zero padding outside the raster.
inline double sample_zero(const Image& img, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto at = [&](int xi, int yi) -> double { return img.contains(xi, yi) ? img(xi, yi) : 0.0; };
  if (x0 >= 0 && y0 >= 0 && x0 + 1 < img.width() && y0 + 1 < img.height()) {
    const double v00 = img(x0, y0), v10 = img(x0 + 1, y0);
    const double v01 = img(x0, y0 + 1), v11 = img(x0 + 1, y0 + 1);
    return (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
  }
  return (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x0 + 1, y0)) +
         ay * ((1 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
}

/// Bilinear sample with edge replication.
inline double sample_clamp(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = std::min(static_cast<int>(x), img.width() - 1);
  const int y0 = std::min(static_cast<int>(y), img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  return (1 - ay) * ((1 - ax) * img(x0, y0) + ax * img(x1, y0)) +
         ay * ((1 - ax) * img(x0, y1) + ax * img(x1, y1));
}

// ---------------------------------------------------------------------------
// File I/O

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::MissingFile, "write failed: " + path);
}

inline bool is_png(const std::vector<unsigned char>& bytes) {
  static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::equal(std::begin(sig), std::end(sig), bytes.begin());
}

inline unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Parses a P5 header; returns the payload offset.
inline std::size_t parse_pgm_header(const std::vector<unsigned char>& bytes, int& w, int& h,
                                    int& maxval, const std::string& path) {
  std::size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw Error(ErrorCode::UnsupportedFormat, "malformed PGM header: " + path);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 24)) throw Error(ErrorCode::UnsupportedFormat, "PGM header value too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  w = read_int();
  h = read_int();
  maxval = read_int();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw Error(ErrorCode::TruncatedPayload, "PGM header not terminated: " + path);
  return pos + 1;
}

}  // namespace detail

/// Loads an 8-bit binary PGM (P5) or an 8-bit grayscale/RGB(A) PNG.
inline Image load_image(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    int w = 0, h = 0, maxval = 0;
    const std::size_t off = detail::parse_pgm_header(bytes, w, h, maxval, path);
    if (w <= 0 || h <= 0) throw Error(ErrorCode::UnsupportedFormat, "PGM with zero size: " + path);
    if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "PGM maxval must be 255: " + path);
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - off < n) throw Error(ErrorCode::TruncatedPayload, path);
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(bytes[off + i]) / 255.0f;
    return Image(w, h, std::move(data));
  }
  if (detail::is_png(bytes)) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
      throw Error(ErrorCode::UnsupportedFormat, "unreadable PNG header: " + path);
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    if (PNG_IMAGE_SAMPLE_COMPONENT_SIZE(png.format) != 1) {
      png_image_free(&png);
      throw Error(ErrorCode::UnsupportedFormat, "only 8-bit PNG is supported: " + path);
    }
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int w = static_cast<int>(png.width);
    const int h = static_cast<int>(png.height);
    std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
      png_image_free(&png);
      throw Error(ErrorCode::TruncatedPayload, "PNG decode failed: " + path);
    }
    std::vector<float> data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (color) {
        const double r = raw[3 * i], g = raw[3 * i + 1], b = raw[3 * i + 2];
        data[i] = static_cast<float>((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
      } else {
        data[i] = static_cast<float>(raw[i]) / 255.0f;
      }
    }
    return Image(w, h, std::move(data));
  }
  throw Error(ErrorCode::UnsupportedFormat, "neither P5 PGM nor PNG: " + path);
}

inline void save_pgm(const Image& img, const std::string& path) {
  std::ostringstream out;
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::string payload(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i)
    payload[i] = static_cast<char>(detail::to_byte(img.data()[i]));
  detail::write_file(path, out.str() + payload);
}

/// Writes interleaved 8-bit RGB.
inline void save_png_rgb(const std::string& path, int width, int height,
                         const std::vector<unsigned char>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)
    throw Error(ErrorCode::SizeMismatch, "RGB buffer size");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(width);
  png.height = static_cast<png_uint_32>(height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw Error(ErrorCode::MissingFile, "PNG write failed: " + path);
}

inline void save_png(const Image& img, const std::string& path) {
  std::vector<unsigned char> rgb(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = detail::to_byte(img.data()[i]);
  save_png_rgb(path, img.width(), img.height(), rgb);
}

// ---------------------------------------------------------------------------
// Gradients

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<float> magnitude;
  std::vector<float> orientation;  // degrees in [0, 180)
  std::vector<float> dx;
  std::vector<float> dy;
};

/// Central differences in the interior, one-sided at the borders.
inline GradientField gradients(const Image& img) {
  const int w = img.width(), h = img.height();
  if (w < 3 || h < 3) throw Error(ErrorCode::InvalidArgument, "gradients need at least 3x3");
  GradientField g;
  g.width = w;
  g.height = h;
  const std::size_t n = img.size();
  g.magnitude.resize(n);
  g.orientation.resize(n);
  g.dx.resize(n);
  g.dy.resize(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx, gy;
      if (x == 0) gx = img(1, y) - img(0, y);
      else if (x == w - 1) gx = img(w - 1, y) - img(w - 2, y);
      else gx = 0.5 * (img(x + 1, y) - img(x - 1, y));
      if (y == 0) gy = img(x, 1) - img(x, 0);
      else if (y == h - 1) gy = img(x, h - 1) - img(x, h - 2);
      else gy = 0.5 * (img(x, y + 1) - img(x, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.dx[i] = static_cast<float>(gx);
      g.dy[i] = static_cast<float>(gy);
      g.magnitude[i] = static_cast<float>(std::hypot(gx, gy));
      double ang = rad2deg(std::atan2(gy, gx));
      if (ang < 0) ang += 180.0;
      if (ang >= 180.0) ang -= 180.0;
      g.orientation[i] = static_cast<float>(ang);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Geometric resampling

/// Each output pixel p takes the input at center + R(-angle)(p - center);
/// out-of-bounds samples are zero.
inline Image rectify(const Image& img, double angle, Point center) {
  if (!(angle > -180.0 && angle <= 180.0))
    throw Error(ErrorCode::InvalidArgument, "rectify angle outside (-180, 180]");
  if (angle == 0.0) return img;
  Image out(img.width(), img.height());
  const double c = std::cos(deg2rad(-angle));
  const double s = std::sin(deg2rad(-angle));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double px = x - center.x, py = y - center.y;
      const double sx = center.x + c * px - s * py;
      const double sy = center.y + s * px + c * py;
      out(x, y) = static_cast<float>(sample_zero(img, sx, sy));
    }
  }
  return out;
}

/// Bilinear rescale to (round(w*scale), round(h*scale)), edge-replicated.
inline Image resample(const Image& img, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "resample scale must be positive");
  const long ow = std::lround(img.width() * scale);
  const long oh = std::lround(img.height() * scale);
  if (ow < 1 || oh < 1) throw Error(ErrorCode::Degenerate, "resample output is empty");
  if (ow == img.width() && oh == img.height()) return img;
  Image out(static_cast<int>(ow), static_cast<int>(oh));
  const double rx = static_cast<double>(img.width()) / static_cast<double>(ow);
  const double ry = static_cast<double>(img.height()) / static_cast<double>(oh);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out(x, y) = static_cast<float>(sample_clamp(img, (x + 0.5) * rx - 0.5, (y + 0.5) * ry - 0.5));
  return out;
}

}  // namespace propsel
