#pragma once

// key=value run configuration covering every tracker tunable.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/geometry.hpp"
#include "propsel/tracker.hpp"

namespace propsel {

struct RunConfig {
  TrackerConfig tracker;
  std::uint64_t seed = 42;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::Format, "bad value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

template <class T>
T parse_scalar(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad_value(key, v);
}

inline std::string echo_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PROPSEL_NUM_KEY(name, field, type)                                                           \
  Key {                                                                                              \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_scalar<type>(name, v); },            \
        [](const RunConfig& c) { return format_number(static_cast<double>(c.field)); }               \
  }
#define PROPSEL_BOOL_KEY(name, field)                                                                \
  Key {                                                                                              \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_bool(name, v); },                    \
        [](const RunConfig& c) { return echo_bool(c.field); }                                         \
  }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      PROPSEL_NUM_KEY("seed", seed, std::uint64_t),
      Key{"tracker.variant",
          [](RunConfig& c, std::string_view v) {
            try {
              c.tracker = apply_variant(c.tracker, v);
            } catch (const Error&) {
              bad_value("tracker.variant", v);
            }
          },
          [](const RunConfig& c) { return c.tracker.variant; }},
      PROPSEL_BOOL_KEY("tracker.multiscale", tracker.multiscale),
      PROPSEL_BOOL_KEY("tracker.geometry", tracker.geometry),
      PROPSEL_BOOL_KEY("tracker.edges", tracker.edges),
      PROPSEL_BOOL_KEY("tracker.motion_boundaries", tracker.motion_boundaries),
      PROPSEL_NUM_KEY("tracker.inconclusive_ratio", tracker.inconclusive_ratio, double),
      PROPSEL_NUM_KEY("tracker.edge_threshold", tracker.edge_threshold, double),
      PROPSEL_NUM_KEY("tracker.flow_levels", tracker.flow_levels, int),
      PROPSEL_NUM_KEY("detector.svm_c", tracker.detector.svm_c, double),
      PROPSEL_NUM_KEY("detector.hard_neg_rounds", tracker.detector.hard_neg_rounds, int),
      PROPSEL_NUM_KEY("detector.neg_overlap_max", tracker.detector.neg_overlap_max, double),
      Key{"detector.scales",
          [](RunConfig& c, std::string_view v) {
            std::vector<double> s;
            try {
              s = parse_numbers(v);
            } catch (const Error&) {
              bad_value("detector.scales", v);
            }
            if (s.empty()) bad_value("detector.scales", v);
            for (double x : s)
              if (!(x > 0.0)) bad_value("detector.scales", v);
            c.tracker.detector.scales = std::move(s);
          },
          [](const RunConfig& c) {
            std::string out;
            for (double x : c.tracker.detector.scales) out += (out.empty() ? "" : ",") + format_number(x);
            return out;
          }},
      PROPSEL_NUM_KEY("detector.scan_step", tracker.detector.scan_step, double),
      PROPSEL_NUM_KEY("detector.top_k", tracker.detector.top_k, int),
      PROPSEL_NUM_KEY("detector.jitter_count", tracker.detector.jitter_count, int),
      PROPSEL_NUM_KEY("detector.positive_cap", tracker.detector.positive_cap, int),
      PROPSEL_NUM_KEY("detector.search_pad", tracker.detector.search_pad, double),
      PROPSEL_NUM_KEY("detector.nms_iou", tracker.detector.nms_iou, double),
      PROPSEL_NUM_KEY("detector.mine_margin", tracker.detector.mine_margin, double),
      PROPSEL_NUM_KEY("detector.mine_per_round", tracker.detector.mine_per_round, int),
      PROPSEL_NUM_KEY("detector.negative_cap", tracker.detector.negative_cap, int),
      PROPSEL_NUM_KEY("detector.initial_negatives", tracker.detector.initial_negatives, int),
      PROPSEL_NUM_KEY("detector.calib_neg_iou", tracker.detector.calib_neg_iou, double),
      PROPSEL_NUM_KEY("detector.min_inside_fraction", tracker.detector.min_inside_fraction, double),
      PROPSEL_NUM_KEY("hough.bin_scale", tracker.hough.bin_scale, double),
      PROPSEL_NUM_KEY("hough.bin_angle", tracker.hough.bin_angle, double),
      PROPSEL_NUM_KEY("hough.bin_tx", tracker.hough.bin_tx, double),
      PROPSEL_NUM_KEY("hough.bin_ty", tracker.hough.bin_ty, double),
      PROPSEL_NUM_KEY("hough.pair_count", tracker.hough.pair_count, int),
      PROPSEL_NUM_KEY("hough.min_pair_separation", tracker.hough.min_pair_separation, double),
      PROPSEL_NUM_KEY("hough.motion_gate", tracker.hough.motion_gate, double),
      PROPSEL_NUM_KEY("hough.top_k", tracker.hough.top_k, int),
      PROPSEL_NUM_KEY("hough.confidence_factor", tracker.hough.confidence_factor, double),
      PROPSEL_NUM_KEY("hough.angle_window_min", tracker.hough.angle_window_min, double),
  };
  return k;
}

#undef PROPSEL_NUM_KEY
#undef PROPSEL_BOOL_KEY

}  // namespace config_detail

/// Rejects values the tracker cannot run with.
inline void validate_config(const RunConfig& c) {
  const auto& d = c.tracker.detector;
  const auto& h = c.tracker.hough;
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::Format, std::string("invalid configuration: ") + what);
  };
  need(d.svm_c > 0.0, "detector.svm_c must be > 0");
  need(d.scan_step > 0.0, "detector.scan_step must be > 0");
  need(d.top_k > 0, "detector.top_k must be > 0");
  need(d.search_pad >= 1.0, "detector.search_pad must be >= 1");
  need(d.positive_cap > 0 && d.negative_cap > 0, "sample caps must be > 0");
  need(h.bin_scale > 0.0 && h.bin_angle > 0.0 && h.bin_tx > 0.0 && h.bin_ty > 0.0, "hough bins must be > 0");
  need(h.pair_count > 0, "hough.pair_count must be > 0");
  need(c.tracker.inconclusive_ratio > 0.0 && c.tracker.inconclusive_ratio <= 1.0,
       "tracker.inconclusive_ratio must be in (0, 1]");
  need(c.tracker.flow_levels >= 0, "tracker.flow_levels must be >= 0");
}

/// Sets one key. The seed drives both the detector and the Hough sampler.
inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : config_detail::keys()) {
    if (k.name != key) continue;
    k.set(cfg, config_detail::trim(value));
    cfg.tracker.detector.seed = cfg.seed;
    cfg.tracker.hough.rng_seed = cfg.seed;
    return;
  }
  throw Error(ErrorCode::Format, "unknown configuration key '" + std::string(key) + "'");
}

/// Applies "key = value" lines ('#' starts a comment). A variant line is
/// applied before the individual switches regardless of its position.
inline void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = config_detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::Format, "config line " + std::to_string(lineno) + " is not key=value");
    entries.emplace_back(config_detail::trim(s.substr(0, eq)), config_detail::trim(s.substr(eq + 1)));
  }
  std::stable_partition(entries.begin(), entries.end(), [](const auto& e) { return e.first == "tracker.variant"; });
  for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
  validate_config(cfg);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingFile, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

/// Every key with its effective value, one "key=value" line each.
inline std::string echo_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_detail::keys()) out += k.name + "=" + k.get(cfg) + "\n";
  return out;
}

}  // namespace propsel
