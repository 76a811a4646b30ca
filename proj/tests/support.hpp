#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <gtest/gtest.h>

#include "propsel/error.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline void expect_error(propsel::ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << propsel::to_string(code);
  } catch (const propsel::Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("propsel_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// Smooth random texture: a sum of Gaussian blobs on a mid-gray base.
inline propsel::Image smooth_texture(int w, int h, unsigned seed, int blobs = 60, double smin = 2.0,
                                     double smax = 6.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(0, w), uy(0, h), us(smin, smax), ua(-0.3, 0.3);
  struct B {
    double x, y, s, a;
  };
  std::vector<B> bs;
  for (int i = 0; i < blobs; ++i) bs.push_back({ux(rng), uy(rng), us(rng), ua(rng)});
  propsel::Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.5;
      for (const auto& b : bs) v += b.a * std::exp(-((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (2 * b.s * b.s));
      img(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

// Pixel-grid IoU at spacing `step`, sampled over the joint bounding rectangle.
inline double raster_iou(const propsel::RotatedBox& a, const propsel::RotatedBox& b, double step = 0.1) {
  const auto ra = propsel::bounding_rect(a), rb = propsel::bounding_rect(b);
  const double x0 = std::min(ra.x, rb.x), y0 = std::min(ra.y, rb.y);
  const double x1 = std::max(ra.x + ra.w, rb.x + rb.w), y1 = std::max(ra.y + ra.h, rb.y + rb.h);
  long both = 0, either = 0;
  for (double y = y0 + step / 2; y < y1; y += step)
    for (double x = x0 + step / 2; x < x1; x += step) {
      const bool ia = a.contains({x, y}), ib = b.contains({x, y});
      both += ia && ib;
      either += ia || ib;
    }
  return either ? static_cast<double>(both) / static_cast<double>(either) : 0.0;
}

// Filled axis-aligned rectangle of value `fg` over `bg`, covering pixel centers in [x0, x1) x [y0, y1).
inline propsel::Image rect_image(int w, int h, int x0, int y0, int x1, int y1, float fg = 1.0f, float bg = 0.0f) {
  propsel::Image img(w, h, bg);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img(x, y) = fg;
  return img;
}

}  // namespace testing_support
