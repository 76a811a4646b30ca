#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "propsel/hog.hpp"
#include "support.hpp"

using namespace propsel;
using testing_support::expect_error;

namespace {

// Straightforward reimplementation of the documented layout for a window
// whose template pixels land exactly on image pixels starting at (x0, y0).
std::vector<double> naive_hog(const Image& img, int x0, int y0, const HogTemplate& t) {
  const int cx = t.cells_x, cy = t.cells_y, cs = t.cell_size;
  std::vector<std::array<double, 18>> hist(static_cast<std::size_t>(cx * cy));
  for (auto& h : hist) h.fill(0.0);
  for (int py = 0; py < t.pixel_height(); ++py)
    for (int px = 0; px < t.pixel_width(); ++px) {
      const int x = x0 + px, y = y0 + py;
      const double dx = 0.5 * (img(x + 1, y) - img(x - 1, y));
      const double dy = 0.5 * (img(x, y + 1) - img(x, y - 1));
      const double mag = std::hypot(dx, dy);
      if (mag == 0.0) continue;
      double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
      int bin = static_cast<int>(std::lround(deg / 20.0));
      bin = (bin % 18 + 18) % 18;
      hist[static_cast<std::size_t>((py / cs) * cx + px / cs)][static_cast<std::size_t>(bin)] += mag;
    }
  auto unsigned_bin = [&](int i, int j, int o) {
    const auto& h = hist[static_cast<std::size_t>(j * cx + i)];
    return h[static_cast<std::size_t>(o)] + h[static_cast<std::size_t>(o + 9)];
  };
  auto energy = [&](int i, int j) {
    if (i < 0 || j < 0 || i >= cx || j >= cy) return 0.0;
    double e = 0;
    for (int o = 0; o < 9; ++o) e += unsigned_bin(i, j, o) * unsigned_bin(i, j, o);
    return e;
  };
  std::vector<double> out;
  for (int j = 0; j < cy; ++j)
    for (int i = 0; i < cx; ++i) {
      const int bx[4] = {i - 1, i, i - 1, i}, by[4] = {j - 1, j - 1, j, j};
      double n[4];
      for (int b = 0; b < 4; ++b)
        n[b] = 1.0 / std::sqrt(energy(bx[b], by[b]) + energy(bx[b] + 1, by[b]) + energy(bx[b], by[b] + 1) +
                               energy(bx[b] + 1, by[b] + 1) + 1e-4);
      const auto& h = hist[static_cast<std::size_t>(j * cx + i)];
      for (int o = 0; o < 18; ++o) {
        double s = 0;
        for (double nb : n) s += std::min(h[static_cast<std::size_t>(o)] * nb, 0.2);
        out.push_back(s / 4);
      }
      for (int o = 0; o < 9; ++o) {
        double s = 0;
        for (double nb : n) s += std::min(unsigned_bin(i, j, o) * nb, 0.2);
        out.push_back(s / 4);
      }
      for (double nb : n) {
        double s = 0;
        for (int o = 0; o < 18; ++o) s += std::min(h[static_cast<std::size_t>(o)] * nb, 0.2);
        out.push_back(0.2357 * s);
      }
    }
  return out;
}

// Rect whose template raster coincides with image pixels x0.. and y0..
Rect pixel_rect(int x0, int y0, const HogTemplate& t) {
  return {x0 - 0.5, y0 - 0.5, static_cast<double>(t.pixel_width()), static_cast<double>(t.pixel_height())};
}

Image periodic(int w, int h, int period) {
  Image img(w, h);
  const double k = 2 * std::numbers::pi / period;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img(x, y) = static_cast<float>(0.5 + 0.2 * std::sin(k * x) + 0.15 * std::cos(k * y + 0.7) +
                                     0.1 * std::sin(k * (x + 2 * y)));
  return img;
}

}  // namespace

TEST(MakeTemplate, Examples) {
  EXPECT_EQ(make_template(64, 64), (HogTemplate{8, 8, 8}));
  EXPECT_EQ(make_template(64, 32), (HogTemplate{8, 4, 8}));
  EXPECT_EQ(make_template(100, 10), (HogTemplate{8, 3, 8}));
  EXPECT_EQ(make_template(10, 100), (HogTemplate{3, 8, 8}));
  EXPECT_EQ(make_template(30, 64).descriptor_size(), 4u * 8u * 31u);
  expect_error(ErrorCode::InvalidArgument, [] { make_template(0, 5); });
}

TEST(ComputeHog, MatchesNaiveLayout) {
  const Image img = testing_support::smooth_texture(90, 80, 17, 80, 1.5, 4.0);
  for (const HogTemplate t : {HogTemplate{8, 8, 8}, HogTemplate{8, 5, 8}, HogTemplate{3, 8, 8}}) {
    const auto d = compute_hog(img, pixel_rect(7, 5, t), t);
    const auto ref = naive_hog(img, 7, 5, t);
    ASSERT_EQ(d.values.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(d.values[i], ref[i], 1e-6) << "index " << i;
  }
}

TEST(ComputeHog, ConstantWindowHasZeroOrientation) {
  const HogTemplate t{8, 8, 8};
  const auto d = compute_hog(Image(100, 100, 0.4f), Rect{10, 10, 64, 64}, t);
  for (std::size_t c = 0; c < d.values.size(); ++c) EXPECT_EQ(d.values[c], 0.0);
}

TEST(ComputeHog, PeriodicShiftByOneCellIsIdentical) {
  const HogTemplate t{8, 6, 8};
  const Image img = periodic(120, 100, 8);
  const auto a = compute_hog(img, pixel_rect(4, 4, t), t);
  const auto b = compute_hog(img, pixel_rect(12, 4, t), t);
  const auto c = compute_hog(img, pixel_rect(4, 12, t), t);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
    EXPECT_NEAR(a.values[i], c.values[i], 1e-6);
  }
}

TEST(ComputeHog, VerticalStepVotesZeroDegreeBin) {
  const HogTemplate t{8, 8, 8};
  // Window raster starts at pixel 10; cell (3, 3) spans pixels 34..41, step between 37 and 38.
  const Image img = testing_support::rect_image(100, 100, 38, 0, 100, 100);
  const auto d = compute_hog(img, pixel_rect(10, 10, t), t);
  const double* cell = &d.values[(3 * 8 + 3) * kHogChannels];
  int best = 18;
  for (int o = 18; o < 27; ++o)
    if (cell[o] > cell[best]) best = o;
  EXPECT_EQ(best, 18);
  EXPECT_GT(cell[18], 0.0);
  // Dark-to-bright along +x is the 0 degree signed bin.
  EXPECT_GT(cell[0], 0.0);
  EXPECT_EQ(cell[9], 0.0);
}

TEST(ComputeHog, InvariantToIntensityOffset) {
  const HogTemplate t{8, 7, 8};
  Image img = testing_support::smooth_texture(100, 90, 4);
  Image brighter = img;
  for (auto& v : brighter.data()) v += 0.125f;
  const RotatedBox w{50, 45, 60, 52, 17};
  const auto a = compute_hog(img, w, t), b = compute_hog(brighter, w, t);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
}

TEST(ComputeHog, StableUnderJointRescaling) {
  const HogTemplate t{8, 8, 8};
  const Image img = testing_support::smooth_texture(120, 120, 6, 50, 6.0, 12.0);
  const Image big = resample(img, 2.0);
  const Rect w{28, 30, 64, 64};
  // Input pixel p sits at 2p + 0.5 in the upsampled raster.
  const Rect w2{2 * w.x + 0.5, 2 * w.y + 0.5, 2 * w.w, 2 * w.h};
  const auto a = compute_hog(img, w, t), b = compute_hog(big, w2, t);
  double d2 = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) d2 += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  EXPECT_LT(std::sqrt(d2), 0.05);
}

TEST(ComputeHog, ValueRanges) {
  const HogTemplate t{8, 6, 8};
  const Image img = testing_support::smooth_texture(100, 100, 12, 120, 1.0, 3.0);
  const auto d = compute_hog(img, RotatedBox{50, 50, 70, 40, -33}, t);
  ASSERT_EQ(d.values.size(), t.descriptor_size());
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    const std::size_t ch = i % kHogChannels;
    ASSERT_TRUE(std::isfinite(d.values[i]));
    EXPECT_GE(d.values[i], 0.0);
    if (ch < 27) { EXPECT_LE(d.values[i], kHogTruncation + 1e-12); }
  }
}

TEST(ComputeHog, WindowOutsideImageIsZeroPadded) {
  const HogTemplate t{4, 4, 8};
  const auto d = compute_hog(Image(20, 20, 1.0f), Rect{-200, -200, 32, 32}, t);
  for (double v : d.values) EXPECT_EQ(v, 0.0);
}

TEST(ComputeHog, DegenerateWindowRejected) {
  expect_error(ErrorCode::Degenerate, [] { compute_hog(Image(20, 20), Rect{0, 0, 0, 5}, HogTemplate{}); });
}
