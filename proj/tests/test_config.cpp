#include <gtest/gtest.h>

#include <fstream>

#include "propsel/config.hpp"
#include "support.hpp"

using namespace propsel;
using testing_support::expect_error;
using testing_support::TempDir;

namespace {

RunConfig from_text(std::string_view text) {
  RunConfig c;
  apply_config_text(c, text);
  return c;
}

}  // namespace

TEST(Config, DefaultsMatchTrackerDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.tracker.variant, "ms-rot-em");
  EXPECT_EQ(c.tracker.inconclusive_ratio, 0.99);
  EXPECT_EQ(c.tracker.detector.svm_c, 0.1);
}

TEST(Config, UnknownKeyRejected) {
  expect_error(ErrorCode::Format, [] { from_text("tracker.edgez = true\n"); });
  RunConfig c;
  expect_error(ErrorCode::Format, [&] { apply_setting(c, "nope", "1"); });
}

TEST(Config, MalformedLinesAndValues) {
  expect_error(ErrorCode::Format, [] { from_text("tracker.edges\n"); });
  expect_error(ErrorCode::Format, [] { from_text("tracker.flow_levels = two\n"); });
  expect_error(ErrorCode::Format, [] { from_text("tracker.edges = yes\n"); });
  expect_error(ErrorCode::Format, [] { from_text("tracker.variant = fancy\n"); });
  expect_error(ErrorCode::Format, [] { from_text("detector.scales = 1,-2\n"); });
  expect_error(ErrorCode::Format, [] { from_text("detector.scales = \n"); });
}

TEST(Config, CommentsAndWhitespace) {
  const RunConfig c = from_text("# header\n\n  hough.pair_count =  250  # trailing\r\ntracker.edges=0\n");
  EXPECT_EQ(c.tracker.hough.pair_count, 250);
  EXPECT_FALSE(c.tracker.edges);
}

TEST(Config, VariantAppliesBeforeSwitches) {
  const RunConfig c = from_text("tracker.edges = false\ntracker.variant = ms-rot-em\n");
  EXPECT_TRUE(c.tracker.motion_boundaries);
  EXPECT_FALSE(c.tracker.edges);
  EXPECT_EQ(c.tracker.variant, "ms-rot-em");
}

TEST(Config, ValidationRejectsUnusableValues) {
  expect_error(ErrorCode::Format, [] { from_text("tracker.inconclusive_ratio = 0\n"); });
  expect_error(ErrorCode::Format, [] { from_text("tracker.inconclusive_ratio = 1.5\n"); });
  expect_error(ErrorCode::Format, [] { from_text("detector.svm_c = 0\n"); });
  expect_error(ErrorCode::Format, [] { from_text("hough.bin_angle = -1\n"); });
  expect_error(ErrorCode::Format, [] { from_text("detector.search_pad = 0.5\n"); });
  EXPECT_NO_THROW(from_text("tracker.inconclusive_ratio = 1\n"));
}

TEST(Config, SeedReachesDetectorAndSampler) {
  const RunConfig c = from_text("seed = 9\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.tracker.detector.seed, 9u);
  EXPECT_EQ(c.tracker.hough.rng_seed, 9u);
}

TEST(Config, EchoListsEveryKeyOnceAndRoundTrips) {
  RunConfig c = from_text("seed=5\ntracker.variant=ms\ndetector.scales=0.9,1,1.1\nhough.bin_tx=2.5\n");
  const std::string echo = echo_config(c);
  std::size_t lines = 0;
  for (char ch : echo) lines += ch == '\n';
  EXPECT_EQ(lines, config_detail::keys().size());
  EXPECT_NE(echo.find("tracker.variant=ms\n"), std::string::npos);
  EXPECT_NE(echo.find("detector.scales=0.9,1,1.1\n"), std::string::npos);
  EXPECT_NE(echo.find("tracker.geometry=false\n"), std::string::npos);
  EXPECT_EQ(echo_config(from_text(echo)), echo);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  std::ofstream(dir.file("run.cfg")) << "tracker.variant = ss\nseed = 3\n";
  const RunConfig c = load_config(dir.file("run.cfg"));
  EXPECT_FALSE(c.tracker.multiscale);
  EXPECT_EQ(c.seed, 3u);
  expect_error(ErrorCode::MissingFile, [&] { load_config(dir.file("absent.cfg")); });
}
