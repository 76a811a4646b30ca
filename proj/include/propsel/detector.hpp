#pragma once

// Linear-SVM HOG detector: initial training with hard-negative mining, Platt
// calibration, dense multiscale scanning and warm-started updates.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/geometry.hpp"
#include "propsel/hog.hpp"
#include "propsel/image.hpp"
#include "propsel/svm.hpp"

namespace propsel {

struct DetectorConfig {
  double svm_c = 0.1;
  int hard_neg_rounds = 3;
  double neg_overlap_max = 0.5;
  std::vector<double> scales = {0.980, 0.990, 0.995, 1.000, 1.005, 1.010, 1.020};
  double scan_step = 2.0;
  int top_k = 5;
  int jitter_count = 100;
  int positive_cap = 50;
  double search_pad = 2.5;

  double nms_iou = 0.7;
  double mine_margin = -1.0;
  int mine_per_round = 30;
  int negative_cap = 200;
  int initial_negatives = 200;
  double calib_neg_iou = 0.3;
  double min_inside_fraction = 0.5;
  std::uint64_t seed = 42;
};

struct Detection {
  RotatedBox box;
  double raw_margin = 0.0;
  double score = 0.0;
};

struct DetectorModel {
  svm::LinearModel linear;
  svm::Platt platt;
  HogTemplate tmpl;
  double base_angle = 0.0;
  std::deque<svm::Sample> positives;
  std::deque<svm::Sample> negatives;
  DetectorConfig config;
  std::uint64_t updates = 0;

  double margin(const HogDescriptor& d) const { return linear.margin(d.values); }
  double score(double raw_margin) const { return platt(raw_margin); }
};

// ---------------------------------------------------------------------------

namespace detector_detail {

inline double inside_fraction(const RotatedBox& box, int width, int height) {
  const RotatedBox frame{width / 2.0 - 0.5, height / 2.0 - 0.5, static_cast<double>(width),
                         static_cast<double>(height), 0.0};
  return intersection_area(box, frame) / box.area();
}

struct Window {
  RotatedBox box;
  double margin = 0.0;
  int scale_index = 0;
  double local_x = 0.0;  // window center in the rectified frame, relative to the scan center
  double local_y = 0.0;
};

struct ScanRequest {
  Point center;          // rectification center (frame coordinates)
  double base_w = 1.0;   // window size at scale 1
  double base_h = 1.0;
  double reach_x = 0.0;  // max |offset| of window centers from `center`, rectified frame
  double reach_y = 0.0;
  double step = 2.0;     // frame pixels
  std::vector<double> scales = {1.0};
};

/// Every window of every scale, scored with the model. Windows are sampled
/// through the rotation by the model's base angle, so this is the rectified
/// image scanned with axis-aligned windows.
inline std::vector<Window> scan_windows(const DetectorModel& model, const Image& frame,
                                        const ScanRequest& req) {
  const HogTemplate& t = model.tmpl;
  const int pw = t.pixel_width(), ph = t.pixel_height();
  std::vector<Window> out;
  std::vector<double> desc(t.descriptor_size());
  hog::Workspace ws;
  const double min_inside = model.config.min_inside_fraction;
  for (std::size_t si = 0; si < req.scales.size(); ++si) {
    const double wwin = req.scales[si] * req.base_w;
    const double hwin = req.scales[si] * req.base_h;
    const double fx = pw / wwin, fy = ph / hwin;
    const int stepx = std::max(1, static_cast<int>(std::lround(req.step * fx)));
    const int stepy = std::max(1, static_cast<int>(std::lround(req.step * fy)));
    const int nx = std::max(0, static_cast<int>(std::floor(req.reach_x * fx / stepx + 1e-9)));
    const int ny = std::max(0, static_cast<int>(std::floor(req.reach_y * fy / stepy + 1e-9)));
    const Point origin{-wwin / 2 - (nx * stepx + 1) / fx, -hwin / 2 - (ny * stepy + 1) / fy};
    const int gw = 2 * nx * stepx + pw + 2;
    const int gh = 2 * ny * stepy + ph + 2;
    const Image grid = hog::sample_grid(frame, req.center, model.base_angle, origin, fx, fy, gw, gh);
    const hog::CellIntegral integral(grid);
    for (int ky = -ny; ky <= ny; ++ky) {
      for (int kx = -nx; kx <= nx; ++kx) {
        const int ox = (nx + kx) * stepx + 1;
        const int oy = (ny + ky) * stepy + 1;
        const double lx = origin.x + ox / fx + wwin / 2;
        const double ly = origin.y + oy / fy + hwin / 2;
        const Point c = req.center + rotate({lx, ly}, model.base_angle);
        const RotatedBox box{c.x, c.y, wwin, hwin, model.base_angle};
        if (c.x < -0.5 || c.y < -0.5 || c.x > frame.width() - 0.5 || c.y > frame.height() - 0.5) continue;
        if (inside_fraction(box, frame.width(), frame.height()) < min_inside) continue;
        hog::descriptor_at(integral, ox, oy, t, desc, ws);
        out.push_back({box, model.linear.margin(desc), static_cast<int>(si), lx, ly});
      }
    }
  }
  return out;
}

/// Descending margin; ties by (x, y, scale) for a platform-independent order.
inline void sort_windows(std::vector<Window>& w) {
  std::stable_sort(w.begin(), w.end(), [](const Window& a, const Window& b) {
    if (a.margin != b.margin) return a.margin > b.margin;
    if (a.box.cx != b.box.cx) return a.box.cx < b.box.cx;
    if (a.box.cy != b.box.cy) return a.box.cy < b.box.cy;
    return a.scale_index < b.scale_index;
  });
}

/// Greedy non-maximum suppression over sorted windows.
inline std::vector<Window> nms(const std::vector<Window>& sorted, double iou, std::size_t limit) {
  std::vector<Window> kept;
  for (const auto& w : sorted) {
    if (kept.size() >= limit) break;
    bool ok = true;
    for (const auto& k : kept) {
      if (polygon_iou(w.box, k.box) >= iou) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(w);
  }
  return kept;
}

inline ScanRequest frame_request(const DetectorModel& model, const Image& frame, const RotatedBox& around) {
  ScanRequest req;
  req.center = around.center();
  req.base_w = around.w;
  req.base_h = around.h;
  double rx = 0, ry = 0;
  for (const Point corner : {Point{-0.5, -0.5}, Point{frame.width() - 0.5, -0.5},
                             Point{frame.width() - 0.5, frame.height() - 0.5},
                             Point{-0.5, frame.height() - 0.5}}) {
    const Point l = rotate(corner - req.center, -model.base_angle);
    rx = std::max(rx, std::abs(l.x));
    ry = std::max(ry, std::abs(l.y));
  }
  req.reach_x = rx;
  req.reach_y = ry;
  req.step = model.config.scan_step;
  return req;
}

inline ScanRequest search_request(const DetectorModel& model, const RotatedBox& prev,
                                  std::vector<double> scales) {
  ScanRequest req;
  req.center = prev.center();
  req.base_w = prev.w;
  req.base_h = prev.h;
  // Windows of the unit scale stay inside the padded search region.
  req.reach_x = std::max(0.0, (model.config.search_pad - 1.0) * prev.w / 2);
  req.reach_y = std::max(0.0, (model.config.search_pad - 1.0) * prev.h / 2);
  req.step = model.config.scan_step;
  req.scales = std::move(scales);
  return req;
}

inline svm::SolveOptions solve_options(const DetectorModel& m) {
  svm::SolveOptions opt;
  opt.c = m.config.svm_c;
  opt.seed = m.config.seed + 7919 * m.updates;
  return opt;
}

inline std::vector<svm::Sample> training_set(const DetectorModel& m) {
  std::vector<svm::Sample> all(m.positives.begin(), m.positives.end());
  all.insert(all.end(), m.negatives.begin(), m.negatives.end());
  return all;
}

inline svm::SolveResult retrain(DetectorModel& m) {
  auto all = training_set(m);
  auto res = svm::solve(all, solve_options(m));
  m.linear = res.model;
  std::size_t i = 0;
  for (auto& s : m.positives) s.alpha = all[i++].alpha;
  for (auto& s : m.negatives) s.alpha = all[i++].alpha;
  return res;
}

inline void add_negative(DetectorModel& m, std::vector<double> x) {
  m.negatives.push_back({std::move(x), -1, 0.0});
  while (static_cast<int>(m.negatives.size()) > m.config.negative_cap) m.negatives.pop_front();
}

inline void add_positive(DetectorModel& m, std::vector<double> x) {
  m.positives.push_back({std::move(x), 1, 0.0});
  while (static_cast<int>(m.positives.size()) > std::max(1, m.config.positive_cap))
    m.positives.pop_front();
}

/// One mining round: high-scoring windows that overlap `truth` too little.
inline int mine_negatives(DetectorModel& m, const Image& frame, const RotatedBox& truth,
                          const ScanRequest& req) {
  auto windows = scan_windows(m, frame, req);
  std::erase_if(windows, [&](const Window& w) {
    return w.margin <= m.config.mine_margin || polygon_iou(w.box, truth) >= m.config.neg_overlap_max;
  });
  sort_windows(windows);
  const auto hard = nms(windows, m.config.nms_iou, static_cast<std::size_t>(m.config.mine_per_round));
  for (const auto& w : hard) add_negative(m, compute_hog(frame, w.box, m.tmpl).values);
  return static_cast<int>(hard.size());
}

/// Random boxes near `truth`'s size whose overlap with it is below `max_iou`.
inline std::vector<RotatedBox> random_negatives(const Image& frame, const RotatedBox& truth,
                                                double max_iou, int count, double min_inside,
                                                std::mt19937_64& rng, const RotatedBox* region) {
  std::uniform_real_distribution<double> ux(-0.5, frame.width() - 0.5);
  std::uniform_real_distribution<double> uy(-0.5, frame.height() - 0.5);
  std::uniform_real_distribution<double> uu(-0.5, 0.5);
  std::uniform_real_distribution<double> us(0.8, 1.25);
  std::vector<RotatedBox> out;
  for (int attempt = 0; attempt < 50 * count && static_cast<int>(out.size()) < count; ++attempt) {
    Point c;
    if (region) {
      c = region->center() + rotate({uu(rng) * region->w, uu(rng) * region->h}, region->angle);
    } else {
      c = {ux(rng), uy(rng)};
    }
    const double s = us(rng);
    const RotatedBox b{c.x, c.y, truth.w * s, truth.h * s, truth.angle};
    if (inside_fraction(b, frame.width(), frame.height()) < min_inside) continue;
    if (polygon_iou(b, truth) >= max_iou) continue;
    out.push_back(b);
  }
  return out;
}

inline void calibrate(DetectorModel& m, const Image& frame, const RotatedBox& truth,
                      std::mt19937_64& rng, const RotatedBox* region) {
  std::vector<double> margins;
  std::vector<int> labels;
  std::uniform_real_distribution<double> ut(-0.05, 0.05);
  std::uniform_real_distribution<double> us(0.95, 1.05);
  for (int i = 0; i < m.config.jitter_count; ++i) {
    const double s = us(rng);
    const Point d = rotate({ut(rng) * truth.w, ut(rng) * truth.h}, truth.angle);
    const RotatedBox b{truth.cx + d.x, truth.cy + d.y, truth.w * s, truth.h * s, truth.angle};
    margins.push_back(m.margin(compute_hog(frame, b, m.tmpl)));
    labels.push_back(1);
  }
  const auto negs = random_negatives(frame, truth, m.config.calib_neg_iou, m.config.jitter_count,
                                     m.config.min_inside_fraction, rng, region);
  for (const auto& b : negs) {
    margins.push_back(m.margin(compute_hog(frame, b, m.tmpl)));
    labels.push_back(-1);
  }
  m.platt = svm::fit_platt(margins, labels);
}

inline void check_box(const RotatedBox& box, const Image& frame, double min_inside) {
  if (!box.valid()) throw Error(ErrorCode::Degenerate, "box has non-positive size");
  if (inside_fraction(box, frame.width(), frame.height()) < min_inside)
    throw Error(ErrorCode::OutOfFrame, "box is less than half inside the frame");
}

}  // namespace detector_detail

/// Detector margin and calibrated score of an arbitrary (possibly rotated) box.
inline Detection score_box(const DetectorModel& model, const Image& frame, const RotatedBox& box) {
  const double m = model.margin(compute_hog(frame, box, model.tmpl));
  return {box, m, model.score(m)};
}

inline DetectorModel train_initial(const Image& frame, const RotatedBox& gt, const DetectorConfig& cfg) {
  using namespace detector_detail;
  check_box(gt, frame, 0.5);
  DetectorModel m;
  m.config = cfg;
  m.tmpl = make_template(gt.w, gt.h);
  m.base_angle = gt.angle;
  std::mt19937_64 rng(cfg.seed);

  add_positive(m, compute_hog(frame, gt, m.tmpl).values);
  const auto negs = random_negatives(frame, gt, cfg.neg_overlap_max, cfg.initial_negatives,
                                     cfg.min_inside_fraction, rng, nullptr);
  if (negs.size() < 10)
    throw Error(ErrorCode::InsufficientData, "fewer than 10 negative windows fit in the frame");
  // The initial set is kept outside the FIFO cap.
  const int cap = m.config.negative_cap;
  m.config.negative_cap = std::max(cap, static_cast<int>(negs.size()));
  for (const auto& b : negs) add_negative(m, compute_hog(frame, b, m.tmpl).values);
  retrain(m);

  const ScanRequest full = frame_request(m, frame, gt);
  m.config.negative_cap = std::max(cap, static_cast<int>(negs.size()) + cfg.hard_neg_rounds * cfg.mine_per_round);
  for (int round = 0; round < cfg.hard_neg_rounds; ++round) {
    if (mine_negatives(m, frame, gt, full) == 0) break;
    retrain(m);
  }
  m.config.negative_cap = cap;
  while (static_cast<int>(m.negatives.size()) > cap) m.negatives.pop_front();
  calibrate(m, frame, gt, rng, nullptr);
  return m;
}

/// Top-k detections around `prev_box`, sorted by descending score.
inline std::vector<Detection> scan(const DetectorModel& model, const Image& frame,
                                   const RotatedBox& prev_box) {
  using namespace detector_detail;
  if (!prev_box.valid()) throw Error(ErrorCode::Degenerate, "previous box is degenerate");
  const RotatedBox region{prev_box.cx, prev_box.cy, prev_box.w * model.config.search_pad,
                          prev_box.h * model.config.search_pad, model.base_angle};
  if (inside_fraction(region, frame.width(), frame.height()) <= 0.0)
    throw Error(ErrorCode::OutOfFrame, "search region is outside the frame");
  auto windows = scan_windows(model, frame, search_request(model, prev_box, model.config.scales));
  sort_windows(windows);
  const auto kept = nms(windows, model.config.nms_iou, static_cast<std::size_t>(model.config.top_k));
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (const auto& w : kept) out.push_back({w.box, w.margin, model.score(w.margin)});
  return out;
}

inline DetectorModel update(DetectorModel model, const Image& frame, const RotatedBox& box) {
  using namespace detector_detail;
  check_box(box, frame, 0.5);
  ++model.updates;
  std::mt19937_64 rng(model.config.seed + 104729 * model.updates);
  add_positive(model, compute_hog(frame, box, model.tmpl).values);
  const RotatedBox aligned{box.cx, box.cy, box.w, box.h, model.base_angle};
  mine_negatives(model, frame, box, search_request(model, aligned, {1.0}));
  retrain(model);
  const RotatedBox region{box.cx, box.cy, box.w * model.config.search_pad,
                          box.h * model.config.search_pad, box.angle};
  calibrate(model, frame, box, rng, &region);
  return model;
}

// ---------------------------------------------------------------------------
// "PSTM1" model files: magic, int32 cells_x, cells_y, cell_size, float64
// base_angle, uint32 dim, dim x float64 weights, float64 bias, platt_a,
// platt_b. Little-endian.

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

inline void save_model(const DetectorModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot open for writing: " + path);
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write("PSTM1", 5);
  put(static_cast<std::int32_t>(m.tmpl.cells_x));
  put(static_cast<std::int32_t>(m.tmpl.cells_y));
  put(static_cast<std::int32_t>(m.tmpl.cell_size));
  put(m.base_angle);
  put(static_cast<std::uint32_t>(m.linear.w.size()));
  for (double v : m.linear.w) put(v);
  put(m.linear.bias);
  put(m.platt.a);
  put(m.platt.b);
}

inline DetectorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "PSTM1", 5) != 0) throw Error(ErrorCode::BadMagic, path);
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw Error(ErrorCode::TruncatedPayload, path);
  };
  DetectorModel m;
  std::int32_t cx, cy, cs;
  get(cx);
  get(cy);
  get(cs);
  m.tmpl = {cx, cy, cs};
  if (cx < 3 || cy < 3 || cs <= 0) throw Error(ErrorCode::Format, "bad template geometry in " + path);
  get(m.base_angle);
  std::uint32_t dim;
  get(dim);
  if (dim != m.tmpl.descriptor_size()) throw Error(ErrorCode::Format, "weight length mismatch in " + path);
  m.linear.w.resize(dim);
  for (auto& v : m.linear.w) get(v);
  get(m.linear.bias);
  get(m.platt.a);
  get(m.platt.b);
  return m;
}

}  // namespace propsel
