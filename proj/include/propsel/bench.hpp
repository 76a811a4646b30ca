#pragma once

// Synthetic sequences with exact ground truth and flow, and the two
// evaluation protocols: VOT-style restarts and OTB-style curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/flow.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"
#include "propsel/tracker.hpp"

namespace propsel {

// ---------------------------------------------------------------------------
// Synthesis

struct SynthConfig {
  int width = 320;
  int height = 240;
  std::uint64_t texture_seed = 7;
  RotatedBox object{160.0, 120.0, 64.0, 48.0, 0.0};
  // One step per transition, applied about the current object center:
  // p -> s R(theta) (p - c) + c + (tx, ty).
  std::vector<Similarity> script;
  double clutter_density = 4.0;  // blobs per 10^4 px
  double noise_sigma = 0.0;
};

struct SynthSequence {
  std::vector<Image> frames;
  std::vector<RotatedBox> gt;
  std::vector<FlowField> flow;  // flow[t]: frame t -> t+1
};

inline constexpr double kSynthMinInside = 0.6;

/// Step about `c` as an image-frame similarity.
inline Similarity about_center(const Similarity& step, Point c) {
  const Point sc = Similarity{step.s, step.theta, 0.0, 0.0}.apply(c);
  return {step.s, normalize_angle(step.theta), c.x + step.tx - sc.x, c.y + step.ty - sc.y};
}

inline std::vector<Similarity> constant_script(std::size_t transitions, const Similarity& step) {
  return std::vector<Similarity>(transitions, step);
}

namespace bench_detail {

struct Blob {
  double x, y, sx, sy, cos_a, sin_a, amp;
};

inline double blob_sum(const std::vector<Blob>& blobs, double x, double y) {
  double v = 0.0;
  for (const auto& b : blobs) {
    const double dx = x - b.x, dy = y - b.y;
    const double u = (b.cos_a * dx + b.sin_a * dy) / b.sx;
    const double w = (-b.sin_a * dx + b.cos_a * dy) / b.sy;
    const double r = u * u + w * w;
    if (r < 16.0) v += b.amp * std::exp(-0.5 * r);
  }
  return v;
}

inline std::vector<Blob> random_blobs(std::mt19937_64& rng, int count, double x0, double y0, double x1, double y1,
                                      double smin, double smax, double amax) {
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), us(smin, smax), ua(0.0, std::numbers::pi),
      uamp(-amax, amax);
  std::vector<Blob> out;
  out.reserve(static_cast<std::size_t>(std::max(0, count)));
  for (int i = 0; i < count; ++i) {
    const double a = ua(rng);
    out.push_back({ux(rng), uy(rng), us(rng), us(rng), std::cos(a), std::sin(a), uamp(rng)});
  }
  return out;
}

/// Object appearance in object-local pixel coordinates (origin at the center).
struct ObjectTexture {
  double half_w, half_h;
  std::vector<Blob> blobs;

  double operator()(double u, double v) const {
    // Soft steps keep the pattern band-limited so sub-pixel motion is sampled faithfully.
    auto step = [](double x) { return 1.0 / (1.0 + std::exp(-x / 0.6)); };
    const double d = std::min(half_w - std::abs(u), half_h - std::abs(v));
    double val = 0.82 - 0.67 * step(4.0 - d);  // dark rim just inside the outline
    // An off-center mark breaks the rectangle's rotational symmetry.
    val -= 0.4 * step(u - 0.2 * half_w) * step(-0.2 * half_h - v) * step(d - 8.0);
    return std::clamp(val + blob_sum(blobs, u, v), 0.0, 1.0);
  }
};

}  // namespace bench_detail

/// Renders the object over a static cluttered background and moves it by the
/// script. Flow is exact: the step displacement on object pixels, zero elsewhere.
inline SynthSequence synth_sequence(const SynthConfig& cfg) {
  using namespace bench_detail;
  if (cfg.width < 32 || cfg.height < 32) throw Error(ErrorCode::InvalidArgument, "synthetic frame must be >= 32x32");
  if (!cfg.object.valid()) throw Error(ErrorCode::Degenerate, "synthetic object box is degenerate");
  if (!(cfg.noise_sigma >= 0.0) || !(cfg.clutter_density >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "noise sigma and clutter density must be >= 0");
  for (const auto& s : cfg.script)
    if (!(s.s > 0.0) || !std::isfinite(s.s) || !std::isfinite(s.theta) || !std::isfinite(s.tx) ||
        !std::isfinite(s.ty))
      throw Error(ErrorCode::InvalidArgument, "script steps need a positive finite scale");

  const std::size_t n = cfg.script.size() + 1;
  SynthSequence seq;
  seq.gt.reserve(n);
  std::vector<Similarity> pose;  // frame 0 coordinates -> frame t
  pose.reserve(n);
  pose.push_back({1.0, 0.0, 0.0, 0.0});
  seq.gt.push_back(cfg.object);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const Similarity step = about_center(cfg.script[t], seq.gt[t].center());
    pose.push_back(compose(step, pose[t]));
    seq.gt.push_back(apply_similarity(step, seq.gt[t]));
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (detector_detail::inside_fraction(seq.gt[t], cfg.width, cfg.height) < kSynthMinInside)
      throw Error(ErrorCode::OutOfFrame, "script drives the object out of frame at frame " + std::to_string(t));
  }

  std::mt19937_64 rng(cfg.texture_seed);
  const double area = static_cast<double>(cfg.width) * cfg.height;
  const int clutter = static_cast<int>(std::lround(cfg.clutter_density * area / 1e4));
  const auto bg_blobs = random_blobs(rng, clutter, 0, 0, cfg.width, cfg.height, 2.0, 9.0, 0.35);
  const ObjectTexture tex{cfg.object.w / 2, cfg.object.h / 2,
                          random_blobs(rng, static_cast<int>(std::lround(cfg.object.area() / 80.0)),
                                       -cfg.object.w / 2, -cfg.object.h / 2, cfg.object.w / 2, cfg.object.h / 2,
                                       1.5, 4.0, 0.35)};
  Image background(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x)
      background(x, y) = static_cast<float>(std::clamp(0.45 + blob_sum(bg_blobs, x, y), 0.0, 1.0));

  for (std::size_t t = 0; t < n; ++t) {
    Image img = background;
    const Similarity back = inverse(pose[t]);
    const RotatedBox& box = seq.gt[t];
    const Rect r = bounding_rect(box);
    const int x0 = std::max(0, static_cast<int>(std::floor(r.x)) - 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(r.y)) - 1);
    const int x1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(r.x + r.w)) + 1);
    const int y1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(r.y + r.h)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point l = cfg.object.to_local(back.apply({static_cast<double>(x), static_cast<double>(y)}));
        // Signed distance to the outline in frame-t pixels gives a one-pixel soft edge.
        const double d = std::min(tex.half_w - std::abs(l.x), tex.half_h - std::abs(l.y)) * pose[t].s;
        const double cover = std::clamp(0.5 + d, 0.0, 1.0);
        if (cover <= 0.0) continue;
        img(x, y) = static_cast<float>(cover * tex(l.x, l.y) + (1.0 - cover) * img(x, y));
      }
    }
    if (cfg.noise_sigma > 0.0) {
      std::mt19937_64 nrng(cfg.texture_seed ^ (0x9E3779B97F4A7C15ull * (t + 1)));
      std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
          img(x, y) = static_cast<float>(std::clamp(img(x, y) + noise(nrng), 0.0, 1.0));
    }
    seq.frames.push_back(std::move(img));
  }

  for (std::size_t t = 0; t + 1 < n; ++t) {
    FlowField f(cfg.width, cfg.height);
    const Similarity step = about_center(cfg.script[t], seq.gt[t].center());
    for (const auto& [x, y] : pixels_in_box(seq.gt[t], cfg.width, cfg.height)) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const Point q = step.apply(p);
      f.u[f.index(x, y)] = static_cast<float>(q.x - p.x);
      f.v[f.index(x, y)] = static_cast<float>(q.y - p.y);
    }
    seq.flow.push_back(std::move(f));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Evaluation

inline constexpr int kPrecisionThresholds = 51;  // 0..50 px
inline constexpr int kSuccessThresholds = 21;    // 0, 0.05, .., 1
inline constexpr double kPrecisionAt = 20.0;
inline constexpr int kVotRestartGap = 5;
inline constexpr int kVotBurnIn = 10;

struct EvalReport {
  double mean_iou = 0.0;
  int failures = 0;
  std::vector<double> precision_curve;
  std::vector<double> success_curve;
  double auc = 0.0;
  double f1_at_50 = 0.0;
  int frames_evaluated = 0;

  double precision_at(double px) const {
    const auto i = static_cast<std::size_t>(std::clamp<long>(std::lround(px), 0, kPrecisionThresholds - 1));
    return precision_curve.empty() ? 0.0 : precision_curve[i];
  }
};

inline double success_threshold(int i) { return i / 20.0; }

inline double center_distance(const RotatedBox& a, const RotatedBox& b) { return norm(a.center() - b.center()); }

/// Precision: fraction with center distance <= t. Success: fraction with
/// IoU >= t. A missing prediction fails every threshold.
inline EvalReport run_otb(std::span<const std::optional<RotatedBox>> predictions, std::span<const RotatedBox> gt) {
  if (predictions.size() != gt.size())
    throw Error(ErrorCode::SizeMismatch, "predictions and ground truth differ in length");
  if (gt.empty()) throw Error(ErrorCode::InsufficientData, "no frames to evaluate");
  const std::size_t n = gt.size();
  std::vector<double> iou(n, -1.0), dist(n, std::numeric_limits<double>::infinity());
  std::size_t predicted = 0, hits = 0;
  double iou_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!predictions[i]) continue;
    ++predicted;
    iou[i] = polygon_iou(*predictions[i], gt[i]);
    dist[i] = center_distance(*predictions[i], gt[i]);
    iou_sum += iou[i];
    if (iou[i] >= 0.5) ++hits;
  }
  EvalReport r;
  r.frames_evaluated = static_cast<int>(n);
  r.mean_iou = iou_sum / static_cast<double>(n);
  for (int t = 0; t < kPrecisionThresholds; ++t)
    r.precision_curve.push_back(
        static_cast<double>(std::count_if(dist.begin(), dist.end(), [&](double d) { return d <= t; })) /
        static_cast<double>(n));
  for (int t = 0; t < kSuccessThresholds; ++t) {
    const double th = success_threshold(t);
    r.success_curve.push_back(
        static_cast<double>(std::count_if(iou.begin(), iou.end(), [&](double v) { return v >= 0.0 && v >= th; })) /
        static_cast<double>(n));
  }
  double s = 0.0;
  for (double v : r.success_curve) s += v;
  r.auc = s / kSuccessThresholds;
  const double p = predicted ? static_cast<double>(hits) / static_cast<double>(predicted) : 0.0;
  const double rc = static_cast<double>(hits) / static_cast<double>(n);
  r.f1_at_50 = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  return r;
}

inline EvalReport run_otb(std::span<const RotatedBox> predictions, std::span<const RotatedBox> gt) {
  std::vector<std::optional<RotatedBox>> p(predictions.begin(), predictions.end());
  return run_otb(std::span<const std::optional<RotatedBox>>(p), gt);
}

/// Tracker driven by the VOT protocol. `frame` is the sequence index.
class VotTracker {
 public:
  virtual ~VotTracker() = default;
  virtual void init(const Image& image, const RotatedBox& box, std::size_t frame) = 0;
  virtual std::optional<RotatedBox> track(const Image& image, std::size_t frame) = 0;
};

/// Replays stored per-frame predictions; used for scripted protocol checks and
/// for evaluating prediction files.
class ReplayTracker : public VotTracker {
 public:
  explicit ReplayTracker(std::vector<std::optional<RotatedBox>> predictions) : predictions_(std::move(predictions)) {}

  void init(const Image&, const RotatedBox&, std::size_t frame) override { inits_.push_back(frame); }
  std::optional<RotatedBox> track(const Image&, std::size_t frame) override {
    return frame < predictions_.size() ? predictions_[frame] : std::nullopt;
  }
  const std::vector<std::size_t>& inits() const { return inits_; }

 private:
  std::vector<std::optional<RotatedBox>> predictions_;
  std::vector<std::size_t> inits_;
};

/// The proposal-selection tracker; an empty candidate set is reported as no box.
class ProposalTracker : public VotTracker {
 public:
  explicit ProposalTracker(TrackerConfig config, const SideData* side = nullptr)
      : config_(std::move(config)), side_(side) {}

  void init(const Image& image, const RotatedBox& box, std::size_t frame) override {
    state_ = propsel::init(image, box, config_);
    prev_ = image;
    frame_ = frame;
  }

  std::optional<RotatedBox> track(const Image& image, std::size_t frame) override {
    if (!state_) throw Error(ErrorCode::InvalidArgument, "tracker used before init");
    if (frame != frame_ + 1) throw Error(ErrorCode::InvalidArgument, "frames must be tracked in order");
    auto at = [&](const auto& v) -> decltype(&v[0]) {
      return side_ && frame - 1 < v.size() ? &v[frame - 1] : nullptr;
    };
    const FlowField* f = side_ ? at(side_->flow) : nullptr;
    const EdgeMap* e = side_ ? at(side_->edges) : nullptr;
    const EdgeMap* m = side_ ? at(side_->motion_boundaries) : nullptr;
    std::optional<RotatedBox> out;
    try {
      last_ = step(*state_, prev_, image, f, e, m);
      out = last_->winner.box;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::EmptyCandidates) throw;
      last_.reset();
    }
    prev_ = image;
    frame_ = frame;
    return out;
  }

  const std::optional<StepResult>& last_step() const { return last_; }

 private:
  TrackerConfig config_;
  const SideData* side_;
  std::optional<TrackerState> state_;
  std::optional<StepResult> last_;
  Image prev_;
  std::size_t frame_ = 0;
};

/// Restart protocol. A frame with IoU = 0 (or no box) is a failure; the tracker
/// is re-initialized from gt five frames later and tracking resumes on the next
/// frame. Accuracy averages IoU over tracked frames, excluding failure frames
/// and the ten frames after each re-initialization. `frames` may be empty for
/// trackers that ignore imagery.
inline EvalReport run_vot(VotTracker& tracker, std::span<const Image> frames, std::span<const RotatedBox> gt) {
  if (gt.size() < 2) throw Error(ErrorCode::InsufficientData, "VOT protocol needs at least 2 frames");
  if (!frames.empty() && frames.size() != gt.size())
    throw Error(ErrorCode::SizeMismatch, "frames and ground truth differ in length");
  static const Image blank;
  auto frame = [&](std::size_t i) -> const Image& { return frames.empty() ? blank : frames[i]; };
  const std::size_t n = gt.size();

  EvalReport r;
  std::vector<std::optional<RotatedBox>> preds;
  std::vector<RotatedBox> truth;
  double sum = 0.0;
  tracker.init(frame(0), gt[0], 0);
  std::size_t burn_until = 0;  // frames <= burn_until are not averaged
  for (std::size_t t = 1; t < n;) {
    const auto pred = tracker.track(frame(t), t);
    const double iou = pred ? polygon_iou(*pred, gt[t]) : 0.0;
    if (!(iou > 0.0)) {
      ++r.failures;
      const std::size_t restart = t + kVotRestartGap;
      if (restart >= n) break;
      tracker.init(frame(restart), gt[restart], restart);
      burn_until = restart + kVotBurnIn;
      t = restart + 1;
      continue;
    }
    if (t > burn_until) {
      sum += iou;
      ++r.frames_evaluated;
      preds.push_back(pred);
      truth.push_back(gt[t]);
    }
    ++t;
  }
  r.mean_iou = r.frames_evaluated ? sum / r.frames_evaluated : 0.0;
  if (!truth.empty()) {
    const EvalReport o = run_otb(std::span<const std::optional<RotatedBox>>(preds), std::span<const RotatedBox>(truth));
    r.precision_curve = o.precision_curve;
    r.success_curve = o.success_curve;
    r.auc = o.auc;
    r.f1_at_50 = o.f1_at_50;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string name;
  EvalReport report;
};

inline void write_report_csv(const std::string& path, std::span<const ReportRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path);
  out << "name,mean_iou,failures,precision@20,auc,f1_at_50\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.name << ',' << format_number(r.mean_iou) << ',' << r.failures << ','
        << format_number(r.precision_at(kPrecisionAt)) << ',' << format_number(r.auc) << ','
        << format_number(r.f1_at_50) << '\n';
  }
}

/// Two curve files: `<prefix>_precision.csv` and `<prefix>_success.csv`.
inline void write_curves_csv(const std::string& prefix, const EvalReport& r) {
  std::ofstream p(prefix + "_precision.csv", std::ios::binary), s(prefix + "_success.csv", std::ios::binary);
  if (!p || !s) throw Error(ErrorCode::MissingFile, "cannot write curves at " + prefix);
  p << "threshold_px,precision\n";
  for (std::size_t i = 0; i < r.precision_curve.size(); ++i) p << i << ',' << format_number(r.precision_curve[i]) << '\n';
  s << "threshold_iou,success\n";
  for (std::size_t i = 0; i < r.success_curve.size(); ++i)
    s << format_number(success_threshold(static_cast<int>(i))) << ',' << format_number(r.success_curve[i]) << '\n';
}

}  // namespace propsel
