#include <gtest/gtest.h>

#include <random>

#include "propsel/geometry.hpp"
#include "support.hpp"

using namespace propsel;
using testing_support::expect_error;
using testing_support::raster_iou;

namespace {

void expect_similarity(const Similarity& t, double s, double theta, double tx, double ty) {
  EXPECT_NEAR(t.s, s, 1e-12);
  EXPECT_NEAR(angle_diff(t.theta, theta), 0.0, 1e-10);
  EXPECT_NEAR(t.tx, tx, 1e-12);
  EXPECT_NEAR(t.ty, ty, 1e-12);
}

void expect_box_near(const RotatedBox& a, const RotatedBox& b, double tol) {
  EXPECT_NEAR(a.cx, b.cx, tol);
  EXPECT_NEAR(a.cy, b.cy, tol);
  EXPECT_NEAR(a.w, b.w, tol);
  EXPECT_NEAR(a.h, b.h, tol);
  EXPECT_NEAR(angle_diff(a.angle, b.angle), 0.0, tol);
}

RotatedBox random_box(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> c(-spread, spread), sz(2.0, 20.0), ang(-179.9, 180.0);
  return {c(rng), c(rng), sz(rng), sz(rng), ang(rng)};
}

}  // namespace

TEST(SimilarityFromPair, Identity) {
  expect_similarity(similarity_from_pair({{0, 0}, {0, 0}}, {{10, 0}, {10, 0}}), 1, 0, 0, 0);
}

TEST(SimilarityFromPair, QuarterTurn) {
  expect_similarity(similarity_from_pair({{0, 0}, {0, 0}}, {{10, 0}, {0, 10}}), 1, 90, 0, 0);
}

TEST(SimilarityFromPair, ScaleAndTranslate) {
  expect_similarity(similarity_from_pair({{0, 0}, {5, 5}}, {{10, 0}, {25, 5}}), 2, 0, 5, 5);
}

TEST(SimilarityFromPair, CoincidentSourcesRejected) {
  expect_error(ErrorCode::Degenerate, [] { similarity_from_pair({{3, 3}, {0, 0}}, {{3, 3}, {1, 1}}); });
}

TEST(SimilarityFromPair, MapsBothCorrespondencesExactly) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 200; ++i) {
    const Correspondence a{{u(rng), u(rng)}, {u(rng), u(rng)}};
    const Correspondence b{{u(rng), u(rng)}, {u(rng), u(rng)}};
    const Similarity t = similarity_from_pair(a, b);
    EXPECT_LT(norm(t.apply(a.p) - a.q), 1e-9);
    EXPECT_LT(norm(t.apply(b.p) - b.q), 1e-9);
    EXPECT_GT(t.s, 0.0);
  }
}

TEST(ApplySimilarity, IdentityKeepsBox) {
  const RotatedBox b{3, 4, 5, 6, 33};
  EXPECT_EQ(apply_similarity({}, b), b);
}

TEST(ApplySimilarity, ScalesComponentwise) {
  const RotatedBox out = apply_similarity({2, 0, 0, 0}, {10, 10, 4, 6, 0});
  expect_box_near(out, {20, 20, 8, 12, 0}, 1e-12);
}

TEST(ApplySimilarity, InverseRestoresBox) {
  const Similarity t{1, 30, 1, -1};
  const RotatedBox b{12, -7, 9, 4, 170};
  const Similarity inv = inverse(t);
  // Analytic inverse (1/s, -theta, -R(-theta) t / s).
  const Point r = rotate({t.tx, t.ty}, -t.theta);
  expect_similarity(inv, 1 / t.s, -t.theta, -r.x / t.s, -r.y / t.s);
  expect_box_near(apply_similarity(inv, apply_similarity(t, b)), b, 1e-9);
}

TEST(ApplySimilarity, AngleRenormalized) {
  const RotatedBox out = apply_similarity({1, 30, 0, 0}, {0, 0, 2, 2, 170});
  EXPECT_NEAR(out.angle, -160.0, 1e-12);
}

TEST(ApplySimilarity, CompositionMatchesSequentialApplication) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.5, 2.0), th(-180, 180), t(-20, 20);
  for (int i = 0; i < 100; ++i) {
    const Similarity t1{s(rng), th(rng), t(rng), t(rng)}, t2{s(rng), th(rng), t(rng), t(rng)};
    const RotatedBox b = random_box(rng, 30);
    const auto a = apply_similarity(t2, apply_similarity(t1, b)).corners();
    const auto c = apply_similarity(compose(t2, t1), b).corners();
    for (int k = 0; k < 4; ++k) EXPECT_LT(norm(a[k] - c[k]), 1e-6);
  }
}

TEST(NormalizeAngle, HalfOpenRange) {
  EXPECT_EQ(normalize_angle(-180.0), 180.0);
  EXPECT_EQ(normalize_angle(180.0), 180.0);
  EXPECT_NEAR(normalize_angle(540.0), 180.0, 1e-12);
  EXPECT_NEAR(normalize_angle(-190.0), 170.0, 1e-12);
  EXPECT_NEAR(normalize_angle(370.0), 10.0, 1e-12);
}

TEST(RotatedBox, CornersCounterClockwisePositiveArea) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const RotatedBox b = random_box(rng, 10);
    const auto c = b.corners();
    EXPECT_NEAR(polygon_area({c.begin(), c.end()}), b.area(), 1e-9 * b.area());
  }
}

TEST(PolygonIou, IdenticalIsOne) {
  const RotatedBox b{1.5, 2.5, 7, 3, 41};
  EXPECT_EQ(polygon_iou(b, b), 1.0);
  // The same polygon described with a rotated parameterization.
  EXPECT_EQ(polygon_iou({0, 0, 4, 2, 0}, {0, 0, 2, 4, 90}), 1.0);
}

TEST(PolygonIou, DisjointIsZero) {
  EXPECT_EQ(polygon_iou({0, 0, 4, 4, 0}, {10, 0, 4, 4, 30}), 0.0);
  EXPECT_EQ(polygon_iou({0, 0, 4, 4, 0}, {4, 0, 4, 4, 0}), 0.0);
}

TEST(PolygonIou, OffsetSquares) {
  const RotatedBox a{0, 0, 10, 10, 0}, b{5, 0, 10, 10, 0};
  EXPECT_NEAR(polygon_iou(a, b), 50.0 / 150.0, 1e-9);
  EXPECT_NEAR(raster_iou(a, b), 1.0 / 3.0, 0.01);
}

TEST(PolygonIou, SymmetricBoundedAndMatchesRaster) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 150; ++i) {
    const RotatedBox a = random_box(rng, 8), b = random_box(rng, 8);
    const double ab = polygon_iou(a, b), ba = polygon_iou(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, raster_iou(a, b, 0.1), 0.01);
  }
}

TEST(PolygonIou, OneOnlyForCoincidentPolygons) {
  const RotatedBox a{0, 0, 10, 6, 20};
  EXPECT_LT(polygon_iou(a, {0, 0, 10, 6, 20.001}), 1.0);
  EXPECT_LT(polygon_iou(a, {0.0001, 0, 10, 6, 20}), 1.0);
}

TEST(TextFormats, PolygonRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const RotatedBox b = random_box(rng, 200);
    const RotatedBox back = parse_box(format_polygon(b));
    expect_box_near(back, b, 1e-9);
    expect_box_near(parse_box(format_polygon(back)), back, 1e-9);
  }
}

TEST(TextFormats, RectRoundTrip) {
  const Rect r{10.25, -3.5, 40, 17.75};
  const RotatedBox b = parse_box(format_rect(r));
  expect_box_near(b, r.as_box(), 0.0);
  const Rect back = bounding_rect(b);
  EXPECT_EQ(format_rect(back), format_rect(r));
}

TEST(TextFormats, AcceptsSpacesAndTabs) {
  const RotatedBox b = parse_box("1 2\t3,4\r");
  expect_box_near(b, {2.5, 4, 3, 4, 0}, 1e-12);
}

TEST(TextFormats, NoisyPolygonFitsNearestRectangle) {
  const RotatedBox b{50, 40, 30, 10, 25};
  auto c = b.corners();
  c[0].x += 0.2;
  c[2].y -= 0.2;
  const RotatedBox fit = fit_rotated_box(c);
  EXPECT_NEAR(fit.cx, b.cx, 0.1);
  EXPECT_NEAR(fit.cy, b.cy, 0.1);
  EXPECT_NEAR(fit.w, b.w, 0.3);
  EXPECT_NEAR(fit.h, b.h, 0.3);
  EXPECT_NEAR(fit.angle, b.angle, 1.0);
}

TEST(TextFormats, MalformedLinesRejected) {
  expect_error(ErrorCode::Format, [] { parse_box("1,2,3"); });
  expect_error(ErrorCode::Format, [] { parse_box("1,2,x,4"); });
  expect_error(ErrorCode::Format, [] { parse_box("1,2,0,4"); });
  expect_error(ErrorCode::Format, [] { parse_box(""); });
  expect_error(ErrorCode::Degenerate, [] { parse_box("0,0,0,0,0,0,0,0"); });
}
