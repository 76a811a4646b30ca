#pragma once

// Online tracking by proposal selection. Each frame builds a candidate set
// from the detector's top-k windows and the Hough geometry proposals, picks
// one by detection score (falling back to edgeness when scores are within
// 1%), and feeds the winner back into the detector and the pruning filters.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "propsel/detector.hpp"
#include "propsel/edgeness.hpp"
#include "propsel/error.hpp"
#include "propsel/flow.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"
#include "propsel/proposals.hpp"

namespace propsel {

enum class Source { Detector, Geometry };

inline const char* to_string(Source s) { return s == Source::Detector ? "detector" : "geometry"; }

enum class Cue { None, Edges, MotionBoundaries };

inline const char* to_string(Cue c) {
  switch (c) {
    case Cue::Edges: return "edges";
    case Cue::MotionBoundaries: return "motion_boundaries";
    case Cue::None: break;
  }
  return "none";
}

struct TrackerConfig {
  DetectorConfig detector;
  HoughConfig hough;
  bool multiscale = true;
  bool geometry = true;
  bool edges = true;
  bool motion_boundaries = true;
  double inconclusive_ratio = 0.99;
  double edge_threshold = kDefaultEdgeThreshold;
  int flow_levels = 0;  // 0 = automatic
  std::string variant = "ms-rot-em";
};

/// Presets named after the method variants: ss, ms, ms-rot, ms-rot-e, ms-rot-em.
inline TrackerConfig apply_variant(TrackerConfig cfg, std::string_view name) {
  if (name == "ss") {
    cfg.multiscale = false, cfg.geometry = false, cfg.edges = false, cfg.motion_boundaries = false;
  } else if (name == "ms") {
    cfg.multiscale = true, cfg.geometry = false, cfg.edges = false, cfg.motion_boundaries = false;
  } else if (name == "ms-rot") {
    cfg.multiscale = true, cfg.geometry = true, cfg.edges = false, cfg.motion_boundaries = false;
  } else if (name == "ms-rot-e") {
    cfg.multiscale = true, cfg.geometry = true, cfg.edges = true, cfg.motion_boundaries = false;
  } else if (name == "ms-rot-em") {
    cfg.multiscale = true, cfg.geometry = true, cfg.edges = true, cfg.motion_boundaries = true;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown variant '" + std::string(name) + "'");
  }
  cfg.variant = std::string(name);
  return cfg;
}

struct Proposal {
  RotatedBox box;
  Source source = Source::Detector;
  double det_score = 0.0;
  double raw_margin = 0.0;
  std::optional<double> geo_confidence;
  std::optional<double> edge_score;
  std::optional<double> mb_score;
};

struct TrackerState {
  DetectorModel model;
  RotatedBox prev_box;
  KalmanState kalman_conf;
  KalmanState kalman_angle;
  CueHistory edge_hist;
  CueHistory mb_hist;
  int frame_index = 0;
  TrackerConfig config;
};

struct StepResult {
  Proposal winner;
  std::size_t winner_index = 0;
  std::vector<Proposal> candidates;
  std::size_t inconclusive_count = 0;
  Cue cue = Cue::None;
  bool motion_gate_passed = false;
  int geometry_generated = 0;
};

inline TrackerState init(const Image& frame, const RotatedBox& gt, const TrackerConfig& config) {
  TrackerState s;
  s.config = config;
  DetectorConfig dc = config.detector;
  if (!config.multiscale) dc.scales = {1.0};
  s.model = train_initial(frame, gt, dc);
  s.prev_box = gt;
  return s;
}

namespace tracker_detail {

struct CueMaps {
  EdgeMap map;
  ContourMap contours;
  double strength = 0.0;
};

/// Normalizes `raw` by its maximum over `region` and labels contours.
inline CueMaps prepare_cue(const EdgeMap& raw, const Rect& region, const std::vector<Proposal>& cands,
                           double threshold) {
  const int x0 = std::max(0, static_cast<int>(std::floor(region.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(region.y)));
  const int x1 = std::min(raw.width - 1, static_cast<int>(std::ceil(region.x + region.w)));
  const int y1 = std::min(raw.height - 1, static_cast<int>(std::ceil(region.y + region.h)));
  float peak = 0.0f;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) peak = std::max(peak, raw.at(x, y));
  CueMaps c;
  c.map = raw;
  if (peak > 0.0f)
    for (auto& r : c.map.response) r /= peak;
  c.contours = label_contours(c.map, threshold);
  // Mean normalized response over the union of candidate boxes.
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const bool in = std::any_of(cands.begin(), cands.end(), [&](const Proposal& c) { return c.box.contains(p); });
      if (!in) continue;
      sum += c.map.at(x, y);
      ++n;
    }
  }
  c.strength = n ? sum / static_cast<double>(n) : 0.0;
  return c;
}

inline Rect candidate_region(const std::vector<Proposal>& cands) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& c : cands) {
    const Rect r = bounding_rect(c.box);
    x0 = std::min(x0, r.x);
    y0 = std::min(y0, r.y);
    x1 = std::max(x1, r.x + r.w);
    y1 = std::max(y1, r.y + r.h);
  }
  return {x0 - kBoundaryRing - 1, y0 - kBoundaryRing - 1, x1 - x0 + 2 * kBoundaryRing + 2,
          y1 - y0 + 2 * kBoundaryRing + 2};
}

/// Highest detection score; ties prefer detector proposals, then the smaller
/// angle change from the previous box.
inline std::size_t best_by_score(const std::vector<Proposal>& cands, const std::vector<std::size_t>& pool,
                                 const RotatedBox& prev) {
  std::size_t best = pool.front();
  auto better = [&](const Proposal& a, const Proposal& b) {
    if (a.det_score != b.det_score) return a.det_score > b.det_score;
    if (a.source != b.source) return a.source == Source::Detector;
    return std::abs(angle_diff(a.box.angle, prev.angle)) < std::abs(angle_diff(b.box.angle, prev.angle));
  };
  for (std::size_t i : pool)
    if (better(cands[i], cands[best])) best = i;
  return best;
}


struct CueEval {
  Cue cue;
  CueMaps maps;
  CueHistory* hist;
};

inline double cue_score(const Proposal& p, Cue c) { return c == Cue::Edges ? *p.edge_score : *p.mb_score; }

/// Candidates whose score is within the inconclusive ratio of the best.
inline std::vector<std::size_t> inconclusive_set(const std::vector<Proposal>& cands, double ratio) {
  double best = 0.0;
  for (const auto& c : cands) best = std::max(best, c.det_score);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].det_score >= ratio * best) out.push_back(i);
  return out;
}

struct Selection {
  std::size_t winner = 0;
  std::size_t inconclusive_count = 0;
  Cue cue = Cue::None;
};

/// The selection rule. Cue scores must already be filled in for every cue in
/// `cues`; cues are tried strongest first, each behind its own temporal gate.
inline Selection select_winner(const std::vector<Proposal>& cands, const std::vector<CueEval>& cues,
                               const RotatedBox& prev, double ratio) {
  const auto inconclusive = inconclusive_set(cands, ratio);
  Selection sel;
  sel.inconclusive_count = inconclusive.size();
  if (inconclusive.size() == 1) {
    sel.winner = inconclusive.front();
    return sel;
  }
  std::vector<const CueEval*> order;
  for (const auto& c : cues) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(),
                   [](const CueEval* a, const CueEval* b) { return a->maps.strength > b->maps.strength; });
  for (const CueEval* cp : order) {
    const CueEval& c = *cp;
    std::size_t best = inconclusive.front();
    for (std::size_t i : inconclusive) {
      const double si = cue_score(cands[i], c.cue), sb = cue_score(cands[best], c.cue);
      if (si > sb || (si == sb && cands[i].det_score > cands[best].det_score)) best = i;
    }
    if (temporal_gate(*c.hist, cue_score(cands[best], c.cue))) {
      sel.winner = best;
      sel.cue = c.cue;
      return sel;
    }
  }
  sel.winner = best_by_score(cands, inconclusive, prev);
  return sel;
}

}  // namespace tracker_detail

/// Advances `state` by one frame and returns the selected proposal with the
/// full candidate log. Side data (flow, edge and motion-boundary maps) is
/// computed when not supplied.
inline StepResult step(TrackerState& state, const Image& prev_frame, const Image& cur_frame,
                       const FlowField* flow = nullptr, const EdgeMap* edge = nullptr,
                       const EdgeMap* mb = nullptr) {
  using namespace tracker_detail;
  const TrackerConfig& cfg = state.config;
  if (prev_frame.width() != cur_frame.width() || prev_frame.height() != cur_frame.height())
    throw Error(ErrorCode::SizeMismatch, "consecutive frames differ in size");
  StepResult res;

  DetectorModel& model = state.model;
  std::vector<Detection> dets;
  try {
    dets = scan(model, cur_frame, state.prev_box);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OutOfFrame) throw;
  }
  for (const auto& d : dets) res.candidates.push_back({d.box, Source::Detector, d.score, d.raw_margin, {}, {}, {}});

  std::optional<FlowField> own_flow;
  auto need_flow = [&]() -> const FlowField& {
    if (flow) return *flow;
    if (!own_flow) own_flow = compute_flow(prev_frame, cur_frame, cfg.flow_levels);
    return *own_flow;
  };

  GeometryResult geo;
  if (cfg.geometry) {
    HoughConfig hc = cfg.hough;
    hc.rng_seed = cfg.hough.rng_seed + static_cast<std::uint64_t>(state.frame_index);
    geo = estimate_geometry(state.prev_box, need_flow(), hc, {state.kalman_conf, state.kalman_angle});
    res.motion_gate_passed = geo.motion_gate_passed;
    res.geometry_generated = static_cast<int>(geo.generated.size());
    for (const auto& g : geo.proposals) {
      if (!g.box.valid()) continue;
      if (detector_detail::inside_fraction(g.box, cur_frame.width(), cur_frame.height()) < 0.5) continue;
      const Detection d = score_box(model, cur_frame, g.box);
      res.candidates.push_back({g.box, Source::Geometry, d.score, d.raw_margin, g.confidence, {}, {}});
    }
  }
  if (res.candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidate boxes in frame");

  // Edgeness for every candidate under each enabled cue.
  std::vector<CueEval> cues;
  const Rect region = candidate_region(res.candidates);
  if (cfg.edges) {
    const EdgeMap raw = edge ? *edge : edge_map(cur_frame);
    cues.push_back({Cue::Edges, prepare_cue(raw, region, res.candidates, cfg.edge_threshold), &state.edge_hist});
  }
  if (cfg.motion_boundaries) {
    const EdgeMap raw = mb ? *mb : motion_boundary_map(need_flow());
    cues.push_back({Cue::MotionBoundaries, prepare_cue(raw, region, res.candidates, cfg.edge_threshold),
                    &state.mb_hist});
  }
  for (auto& c : cues) {
    for (auto& p : res.candidates) {
      const double e = edgeness_score(c.maps.map, c.maps.contours, p.box);
      (c.cue == Cue::Edges ? p.edge_score : p.mb_score) = e;
    }
  }
  const Selection sel = select_winner(res.candidates, cues, state.prev_box, cfg.inconclusive_ratio);
  res.inconclusive_count = sel.inconclusive_count;
  res.cue = sel.cue;
  const std::size_t winner = sel.winner;
  res.winner_index = winner;
  res.winner = res.candidates[winner];

  try {
    model = update(model, cur_frame, res.winner.box);
  } catch (const Error& e) {
    // A winner mostly outside the frame is reported but not learned from.
    if (e.code() != ErrorCode::OutOfFrame && e.code() != ErrorCode::Degenerate) throw;
  }

  if (!geo.generated.empty()) {
    double d_conf = 0.0;
    if (res.winner.geo_confidence) {
      d_conf = *res.winner.geo_confidence;
    } else {
      for (const auto& g : geo.generated) d_conf = std::max(d_conf, g.confidence);
    }
    state.kalman_conf = kalman_update(state.kalman_conf, d_conf);
    // Unwrap so the filter never sees a jump across +-180.
    const double d_angle = state.kalman_angle.tau + angle_diff(res.winner.box.angle, state.kalman_angle.tau);
    state.kalman_angle = kalman_update(state.kalman_angle, d_angle);
  }
  for (auto& c : cues) c.hist->push(cue_score(res.winner, c.cue));

  state.prev_box = res.winner.box;
  ++state.frame_index;
  return res;
}

struct SideData {
  std::vector<FlowField> flow;  // flow[t - 1]: frame t-1 -> t
  std::vector<EdgeMap> edges;   // edges[t - 1]: frame t
  std::vector<EdgeMap> motion_boundaries;
};

struct SequenceResult {
  std::vector<StepResult> steps;   // frames 1..n-1 (zero-based), until a failure
  std::optional<int> failed_frame;  // frame with an empty candidate set
};

inline SequenceResult track_sequence(const std::vector<Image>& frames, const RotatedBox& gt1,
                                     const TrackerConfig& config, const SideData* side = nullptr) {
  if (frames.size() < 2) throw Error(ErrorCode::InsufficientData, "tracking needs at least 2 frames");
  auto pick = [](const auto& v, std::size_t i) -> decltype(&v[0]) { return i < v.size() ? &v[i] : nullptr; };
  SequenceResult out;
  TrackerState state = init(frames[0], gt1, config);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const FlowField* f = side ? pick(side->flow, t - 1) : nullptr;
    const EdgeMap* e = side ? pick(side->edges, t - 1) : nullptr;
    const EdgeMap* m = side ? pick(side->motion_boundaries, t - 1) : nullptr;
    try {
      out.steps.push_back(step(state, frames[t - 1], frames[t], f, e, m));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::EmptyCandidates) throw;
      out.failed_frame = static_cast<int>(t);
      break;
    }
  }
  return out;
}

}  // namespace propsel
