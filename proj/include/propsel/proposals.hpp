#pragma once

// Geometry proposals: similarity transforms estimated by Hough voting over
// pairs of flow correspondences, least-squares refinement per bin, and the
// Kalman-filtered thresholds used to prune them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/flow.hpp"
#include "propsel/geometry.hpp"

namespace propsel {

struct HoughConfig {
  double bin_scale = 0.1;
  double bin_angle = 2.0;
  double bin_tx = 2.0;
  double bin_ty = 2.0;
  int pair_count = 500;
  double min_pair_separation = 25.0;
  double motion_gate = 0.5;
  int top_k = 5;
  std::uint64_t rng_seed = 42;

  double confidence_factor = 0.5;
  double angle_window_min = 15.0;
};

// ---------------------------------------------------------------------------
// Scalar Kalman threshold

struct KalmanState {
  double tau = 0.0;
  double p = 0.1;
  double q = 0.001;
  double r = 0.01;
  double alpha = 1.0;
  double beta = 1.0;
};

/// k = (p + q) / (p + q + r); tau' = alpha tau + k (d - alpha beta tau); p' = (1 - k)(p + q).
inline KalmanState kalman_update(const KalmanState& s, double d) {
  KalmanState n = s;
  const double k = (s.p + s.q) / (s.p + s.q + s.r);
  n.tau = s.alpha * s.tau + k * (d - s.alpha * s.beta * s.tau);
  n.p = (1.0 - k) * (s.p + s.q);
  return n;
}

inline double kalman_gain(const KalmanState& s) { return (s.p + s.q) / (s.p + s.q + s.r); }

// ---------------------------------------------------------------------------
// Pair sampling

using CorrespondencePair = std::pair<Correspondence, Correspondence>;

/// Effective separation: the configured one, or half the box diagonal when the
/// shorter side cannot hold it.
inline double pair_separation(const RotatedBox& box, const HoughConfig& cfg) {
  if (std::min(box.w, box.h) >= cfg.min_pair_separation) return cfg.min_pair_separation;
  return std::min(cfg.min_pair_separation, std::hypot(box.w, box.h) / 2);
}

inline std::vector<CorrespondencePair> sample_pairs(const FlowField& flow, const RotatedBox& box,
                                                    const HoughConfig& cfg) {
  const auto pixels = pixels_in_box(box, flow.width, flow.height);
  if (pixels.size() < 2) throw Error(ErrorCode::InsufficientData, "fewer than 2 pixels inside the box");
  const double sep = pair_separation(box, cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
  auto corr = [&](std::size_t k) {
    const auto [x, y] = pixels[k];
    const std::size_t i = flow.index(x, y);
    const Point p{static_cast<double>(x), static_cast<double>(y)};
    return Correspondence{p, {p.x + flow.u[i], p.y + flow.v[i]}};
  };
  std::vector<CorrespondencePair> out;
  out.reserve(static_cast<std::size_t>(std::max(0, cfg.pair_count)));
  constexpr int kAttempts = 200;
  for (int n = 0; n < cfg.pair_count; ++n) {
    for (int a = 0; a < kAttempts; ++a) {
      const std::size_t i = pick(rng), j = pick(rng);
      const auto [xi, yi] = pixels[i];
      const auto [xj, yj] = pixels[j];
      if (std::hypot(xi - xj, yi - yj) >= sep) {
        out.emplace_back(corr(i), corr(j));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hough voting

using BinKey = std::array<std::int64_t, 4>;

struct HoughBin {
  BinKey key{};
  std::uint32_t hash = 0;
  int votes = 0;
  std::vector<std::size_t> members;  // indices into the voting pair list
  std::vector<Similarity> transforms;
};

inline constexpr int kHashBits = 20;

/// Nearest bin; values within 1e-9 bin widths of a half-integer are snapped onto
/// it first so round-off cannot split an exact transform across two bins.
inline std::int64_t bin_index(double v, double bin) {
  const double u = v / bin;
  return std::llround(std::abs(u) < 1e6 ? std::round(u * 1e9) / 1e9 : u);
}

inline BinKey quantize(const Similarity& t, const HoughConfig& cfg) {
  return {bin_index(t.s, cfg.bin_scale), bin_index(t.theta, cfg.bin_angle), bin_index(t.tx, cfg.bin_tx),
          bin_index(t.ty, cfg.bin_ty)};
}

inline std::uint32_t bin_hash(const BinKey& k) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::int64_t v : k) {
    h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h *= 0xBF58476D1CE4E5B9ull;
  }
  h ^= h >> 31;
  return static_cast<std::uint32_t>((h * 0x94D049BB133111EBull) >> (64 - kHashBits));
}

/// Each solvable pair votes once into the bin of its quantized parameters.
/// Bins are ranked by votes, then by lower hash, then by key.
inline std::vector<HoughBin> hough_vote(const std::vector<CorrespondencePair>& pairs, const HoughConfig& cfg) {
  if (pairs.empty()) throw Error(ErrorCode::InsufficientData, "no correspondence pairs to vote");
  std::vector<std::int32_t> table(std::size_t{1} << kHashBits, -1);
  const std::size_t mask = table.size() - 1;
  std::vector<HoughBin> bins;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Similarity t;
    try {
      t = similarity_from_pair(pairs[i].first, pairs[i].second);
    } catch (const Error&) {
      continue;
    }
    const BinKey key = quantize(t, cfg);
    const std::uint32_t h = bin_hash(key);
    std::size_t slot = h;
    while (table[slot] >= 0 && bins[static_cast<std::size_t>(table[slot])].key != key) slot = (slot + 1) & mask;
    if (table[slot] < 0) {
      table[slot] = static_cast<std::int32_t>(bins.size());
      bins.push_back({key, h, 0, {}, {}});
    }
    HoughBin& b = bins[static_cast<std::size_t>(table[slot])];
    ++b.votes;
    b.members.push_back(i);
    b.transforms.push_back(t);
  }
  if (bins.empty()) throw Error(ErrorCode::Degenerate, "every correspondence pair is degenerate");
  std::sort(bins.begin(), bins.end(), [](const HoughBin& a, const HoughBin& b) {
    return std::tie(b.votes, a.hash, a.key) < std::tie(a.votes, b.hash, b.key);
  });
  return bins;
}

/// Least squares of q = c p + d over every correspondence of the member pairs.
inline Similarity refine_bin(const std::vector<CorrespondencePair>& members) {
  if (members.empty()) throw Error(ErrorCode::InsufficientData, "empty bin");
  std::vector<Correspondence> pts;
  pts.reserve(members.size() * 2);
  for (const auto& [a, b] : members) {
    pts.push_back(a);
    pts.push_back(b);
  }
  Point pm{0, 0}, qm{0, 0};
  for (const auto& c : pts) {
    pm = pm + c.p;
    qm = qm + c.q;
  }
  pm = (1.0 / pts.size()) * pm;
  qm = (1.0 / pts.size()) * qm;
  double spp = 0, re = 0, im = 0;
  for (const auto& c : pts) {
    const Point p = c.p - pm, q = c.q - qm;
    spp += p.x * p.x + p.y * p.y;
    // q * conj(p)
    re += q.x * p.x + q.y * p.y;
    im += q.y * p.x - q.x * p.y;
  }
  if (!(spp > 0.0)) throw Error(ErrorCode::Degenerate, "rank-deficient refinement (coincident points)");
  const std::complex<double> c(re / spp, im / spp);
  if (!(std::abs(c) > 0.0)) throw Error(ErrorCode::Degenerate, "refinement collapsed to zero scale");
  const std::complex<double> d = std::complex<double>(qm.x, qm.y) - c * std::complex<double>(pm.x, pm.y);
  return {std::abs(c), normalize_angle(rad2deg(std::arg(c))), d.real(), d.imag()};
}

inline std::vector<CorrespondencePair> bin_pairs(const HoughBin& bin, const std::vector<CorrespondencePair>& pairs) {
  std::vector<CorrespondencePair> out;
  out.reserve(bin.members.size());
  for (std::size_t i : bin.members) out.push_back(pairs[i]);
  return out;
}

// ---------------------------------------------------------------------------

struct GeometryProposal {
  RotatedBox box;
  Similarity transform;
  double confidence = 0.0;  // votes / pairs drawn
};

struct ProposalGates {
  KalmanState confidence;
  KalmanState angle;
};

struct GeometryResult {
  bool motion_gate_passed = false;
  double mean_motion = 0.0;
  std::vector<GeometryProposal> generated;  // before pruning
  std::vector<GeometryProposal> proposals;  // after pruning
};

/// Full result including the unpruned proposals.
inline GeometryResult estimate_geometry(const RotatedBox& prev_box, const FlowField& flow,
                                        const HoughConfig& cfg, const ProposalGates& gates) {
  GeometryResult res;
  try {
    res.mean_motion = mean_flow_magnitude(flow, prev_box);
  } catch (const Error&) {
    return res;
  }
  if (!(res.mean_motion > cfg.motion_gate)) return res;
  res.motion_gate_passed = true;

  const auto pairs = sample_pairs(flow, prev_box, cfg);
  if (pairs.empty()) return res;
  // Vote in a frame centered on the box so translations stay comparable to the bin size.
  const Point o = prev_box.center();
  std::vector<CorrespondencePair> local;
  local.reserve(pairs.size());
  for (const auto& [a, b] : pairs)
    local.push_back({{a.p - o, a.q - o}, {b.p - o, b.q - o}});
  std::vector<HoughBin> bins;
  try {
    bins = hough_vote(local, cfg);
  } catch (const Error&) {
    return res;
  }
  const std::size_t k = std::min(bins.size(), static_cast<std::size_t>(std::max(0, cfg.top_k)));
  for (std::size_t i = 0; i < k; ++i) {
    Similarity t;
    try {
      t = refine_bin(bin_pairs(bins[i], local));
    } catch (const Error&) {
      continue;
    }
    const Point d{t.tx, t.ty};
    const Point shift = d + o - (t.apply(o) - d);
    const Similarity img{t.s, t.theta, shift.x, shift.y};
    res.generated.push_back({apply_similarity(img, prev_box), img,
                             static_cast<double>(bins[i].votes) / static_cast<double>(pairs.size())});
  }
  const double angle_window = std::max(cfg.angle_window_min, 3.0 * cfg.bin_angle);
  for (const auto& g : res.generated) {
    if (g.confidence < cfg.confidence_factor * gates.confidence.tau) continue;
    if (std::abs(angle_diff(g.box.angle, gates.angle.tau)) > angle_window) continue;
    res.proposals.push_back(g);
  }
  std::stable_sort(res.proposals.begin(), res.proposals.end(),
                   [](const GeometryProposal& a, const GeometryProposal& b) { return a.confidence > b.confidence; });
  return res;
}

inline std::vector<GeometryProposal> geometry_proposals(const RotatedBox& prev_box, const FlowField& flow,
                                                        const HoughConfig& cfg, const ProposalGates& gates) {
  return estimate_geometry(prev_box, flow, cfg, gates).proposals;
}

}  // namespace propsel
