#pragma once

// The track, eval and synth commands. Each returns a process exit status:
// 0 ok, 2 input error, 3 tracking failure, 4 format error, 5 side data that
// does not match the sequence.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "propsel/bench.hpp"
#include "propsel/config.hpp"
#include "propsel/error.hpp"
#include "propsel/flow.hpp"
#include "propsel/geometry.hpp"
#include "propsel/image.hpp"
#include "propsel/tracker.hpp"

#ifndef PROPSEL_VERSION
#define PROPSEL_VERSION "0.0.0"
#endif

namespace propsel::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kInput = 2, kTracking = 3, kFormat = 4, kSideData = 5 };

/// Side data whose frame count or size disagrees with the sequence.
class SideDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyCandidates: return kTracking;
    case ErrorCode::Format:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::Degenerate: return kFormat;
    default: return kInput;
  }
}

inline std::string frame_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%08zu.%s", i, ext);
  return buf;
}

inline std::string indexed_name(const char* stem, std::size_t i, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%08zu.%s", stem, i, ext);
  return buf;
}

/// Indices of files named `<stem>_<8 digits>.<ext>` in `dir`.
inline std::map<std::size_t, fs::path> indexed_files(const fs::path& dir, const std::string& stem,
                                                     const std::vector<std::string>& exts) {
  std::map<std::size_t, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    const std::string prefix = stem + "_";
    const std::string ext = e.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) == exts.end()) continue;
    if (name.size() != prefix.size() + 8 + ext.size() || name.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string digits = name.substr(prefix.size(), 8);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    const auto idx = static_cast<std::size_t>(std::stoull(digits));
    if (out.count(idx)) throw Error(ErrorCode::InvalidArgument, "frame " + digits + " exists in two formats");
    out.emplace(idx, e.path());
  }
  return out;
}

/// Frames frame_%08d.(pgm|png), contiguous from 0.
inline std::vector<Image> load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "sequence directory " + dir.string());
  const auto files = indexed_files(dir, "frame", {".pgm", ".png"});
  if (files.empty()) throw Error(ErrorCode::MissingFile, "no frame_%08d.(pgm|png) files in " + dir.string());
  std::vector<Image> frames;
  std::size_t expect = 0;
  for (const auto& [idx, path] : files) {
    if (idx != expect) throw Error(ErrorCode::MissingFile, "missing frame " + frame_name(expect, "pgm|png"));
    frames.push_back(load_image(path.string()));
    if (frames.back().width() != frames.front().width() || frames.back().height() != frames.front().height())
      throw Error(ErrorCode::SizeMismatch, "frame " + std::to_string(idx) + " differs in size");
    ++expect;
  }
  return frames;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
  return lines;
}

/// One box per line; a blank line is a missing prediction.
inline std::vector<std::optional<RotatedBox>> read_boxes(const fs::path& path) {
  std::vector<std::optional<RotatedBox>> out;
  for (const auto& l : read_lines(path)) {
    if (l.find_first_not_of(" \t") == std::string::npos) out.emplace_back();
    else out.emplace_back(parse_box(l));
  }
  return out;
}

inline RotatedBox read_init_box(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorCode::Format, "empty box file " + path.string());
  return parse_box(lines.front());
}

/// Flow files flow_%08d.flo for transitions 0..n-2 and, per map kind,
/// <stem>_%08d.emap covering frames 1..n-1 (frame 0 optional).
inline SideData load_side_data(std::size_t n, int width, int height, const std::string& flow_dir,
                               const std::string& edge_dir, const std::string& mb_dir) {
  SideData side;
  auto check_dims = [&](int w, int h, const fs::path& p) {
    if (w != width || h != height) throw SideDataError("size of " + p.string() + " differs from the frames");
  };
  if (!flow_dir.empty()) {
    if (!fs::is_directory(flow_dir)) throw Error(ErrorCode::MissingFile, "flow directory " + flow_dir);
    const auto files = indexed_files(flow_dir, "flow", {".flo"});
    if (files.size() != n - 1 || (!files.empty() && files.rbegin()->first != n - 2))
      throw SideDataError("expected " + std::to_string(n - 1) + " flow files in " + flow_dir + ", found " +
                          std::to_string(files.size()));
    for (const auto& [i, p] : files) {
      side.flow.push_back(read_flo(p.string()));
      check_dims(side.flow.back().width, side.flow.back().height, p);
    }
  }
  auto load_maps = [&](const std::string& dir, const char* stem, std::vector<EdgeMap>& out) {
    if (dir.empty()) return;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "map directory " + dir);
    auto files = indexed_files(dir, stem, {".emap"});
    files.erase(0);
    const bool ok = files.size() == n - 1 && (files.empty() || (files.begin()->first == 1 && files.rbegin()->first == n - 1));
    if (!ok)
      throw SideDataError("expected " + std::string(stem) + " maps for frames 1.." + std::to_string(n - 1) + " in " +
                          dir);
    for (const auto& [i, p] : files) {
      out.push_back(read_emap(p.string()));
      check_dims(out.back().width, out.back().height, p);
    }
  };
  load_maps(edge_dir, "edges", side.edges);
  load_maps(mb_dir, "mb", side.motion_boundaries);
  return side;
}

// ---------------------------------------------------------------------------

struct ConfigFlags {
  std::string config;
  std::string variant;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;  // 42 unless the file or flag sets one
};

inline void add_config_flags(CLI::App& app, ConfigFlags& f) {
  app.add_option("--config", f.config, "key=value configuration file");
  app.add_option("--variant", f.variant, "ss, ms, ms-rot, ms-rot-e or ms-rot-em");
  app.add_option("--set", f.sets, "override one configuration key (key=value)");
  app.add_option("--seed", f.seed, "random seed (default 42)");
}

/// File first, then --variant, --set overrides and --seed.
inline RunConfig build_config(const ConfigFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.variant.empty()) apply_setting(cfg, "tracker.variant", f.variant);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Format, "--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) apply_setting(cfg, "seed", std::to_string(*f.seed));
  validate_config(cfg);
  return cfg;
}

inline nlohmann::json box_json(const RotatedBox& b) {
  nlohmann::json poly = nlohmann::json::array();
  for (const auto& p : b.corners()) {
    poly.push_back(p.x);
    poly.push_back(p.y);
  }
  return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}, {"angle", b.angle}, {"polygon", poly}};
}

inline nlohmann::json step_json(std::size_t frame, const StepResult& r) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json j{{"box", box_json(c.box)},
                     {"source", to_string(c.source)},
                     {"score", c.det_score},
                     {"margin", c.raw_margin}};
    if (c.geo_confidence) j["geo_confidence"] = *c.geo_confidence;
    if (c.edge_score) j["edgeness"] = *c.edge_score;
    if (c.mb_score) j["motion_edgeness"] = *c.mb_score;
    cands.push_back(std::move(j));
  }
  return {{"frame", frame},
          {"winner", r.winner_index},
          {"cue", to_string(r.cue)},
          {"inconclusive", r.inconclusive_count},
          {"motion_gate", r.motion_gate_passed},
          {"geometry_generated", r.geometry_generated},
          {"candidates", std::move(cands)}};
}

inline void draw_line(std::vector<unsigned char>& rgb, int w, int h, Point a, Point b) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
    const int y = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
    if (x < 0 || y < 0 || x >= w || y >= h) continue;
    unsigned char* px = &rgb[(static_cast<std::size_t>(y) * w + x) * 3];
    px[0] = 255, px[1] = 32, px[2] = 32;
  }
}

inline void render_overlay(const Image& frame, const RotatedBox& box, const std::string& path) {
  std::vector<unsigned char> rgb(frame.size() * 3);
  for (std::size_t i = 0; i < frame.size(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = detail::to_byte(frame.data()[i]);
  const auto c = box.corners();
  for (std::size_t i = 0; i < 4; ++i) draw_line(rgb, frame.width(), frame.height(), c[i], c[(i + 1) % 4]);
  save_png_rgb(path, frame.width(), frame.height(), rgb);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << text;
}

inline nlohmann::json manifest(const std::string& command, const RunConfig& cfg, nlohmann::json inputs) {
  nlohmann::json echo = nlohmann::json::object();
  std::istringstream lines(echo_config(cfg));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    echo[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return {{"tool", "propsel"},
          {"version", PROPSEL_VERSION},
          {"command", command},
          {"seed", cfg.seed},
          {"config", std::move(echo)},
          {"inputs", std::move(inputs)}};
}

// ---------------------------------------------------------------------------

struct TrackArgs {
  std::string seq, init, out, flow_dir, edge_dir, mb_dir;
  bool render = false;
  ConfigFlags cfg;
};

inline int run_track(const TrackArgs& a, std::ostream& log) {
  const RunConfig cfg = build_config(a.cfg);
  log << "# configuration\n" << echo_config(cfg);
  const auto frames = load_sequence(a.seq);
  if (frames.size() < 2) throw Error(ErrorCode::InsufficientData, "tracking needs at least 2 frames");
  const RotatedBox init = read_init_box(a.init);
  const SideData side =
      load_side_data(frames.size(), frames[0].width(), frames[0].height(), a.flow_dir, a.edge_dir, a.mb_dir);
  fs::create_directories(a.out);
  const fs::path out(a.out);

  const SequenceResult res = track_sequence(frames, init, cfg.tracker, &side);
  std::string boxes, cands;
  for (std::size_t i = 0; i < res.steps.size(); ++i) {
    boxes += format_polygon(res.steps[i].winner.box) + "\n";
    cands += step_json(i + 1, res.steps[i]).dump() + "\n";
  }
  write_text(out / "boxes.txt", boxes);
  write_text(out / "candidates.jsonl", cands);
  nlohmann::json inputs{{"seq", a.seq},       {"init", a.init},       {"frames", frames.size()},
                        {"flow_dir", a.flow_dir}, {"edge_dir", a.edge_dir}, {"mb_dir", a.mb_dir}};
  auto m = manifest("track", cfg, std::move(inputs));
  m["tracked_frames"] = res.steps.size();
  if (res.failed_frame) m["failed_frame"] = *res.failed_frame;
  write_text(out / "manifest.json", m.dump(2) + "\n");
  if (a.render) {
    fs::create_directories(out / "render");
    render_overlay(frames[0], init, (out / "render" / frame_name(0, "png")).string());
    for (std::size_t i = 0; i < res.steps.size(); ++i)
      render_overlay(frames[i + 1], res.steps[i].winner.box, (out / "render" / frame_name(i + 1, "png")).string());
  }
  if (res.failed_frame) {
    log << "tracking failed at frame " << *res.failed_frame << ": empty candidate set\n";
    return kTracking;
  }
  log << "tracked " << res.steps.size() << " frames with variant " << cfg.tracker.variant << "\n";
  return kOk;
}

struct EvalArgs {
  std::string protocol = "otb";
  std::string pred, gt, seq, out = ".", name, flow_dir, edge_dir, mb_dir;
  int runs = 1;
  ConfigFlags cfg;
};

inline int run_eval(const EvalArgs& a, std::ostream& log) {
  std::vector<RotatedBox> gt;
  for (const auto& b : read_boxes(a.gt)) {
    if (!b) throw Error(ErrorCode::Format, "ground truth has a blank line");
    gt.push_back(*b);
  }
  if (gt.empty()) throw Error(ErrorCode::Format, "empty ground truth");
  const std::string name =
      !a.name.empty() ? a.name : (!a.seq.empty() ? fs::path(a.seq).filename().string() : fs::path(a.gt).stem().string());
  // n - 1 predictions are aligned to frames 1..n-1 (frame 0 is the init).
  auto aligned = [&](std::vector<std::optional<RotatedBox>> p) {
    if (p.size() + 1 == gt.size()) p.insert(p.begin(), gt.front());
    if (p.size() != gt.size())
      throw Error(ErrorCode::Format, "predictions have " + std::to_string(p.size()) + " lines, ground truth " +
                                         std::to_string(gt.size()));
    return p;
  };
  std::vector<ReportRow> rows;
  fs::create_directories(a.out);
  const fs::path out(a.out);
  if (a.protocol == "otb") {
    if (a.pred.empty()) throw Error(ErrorCode::InvalidArgument, "otb evaluation needs --pred");
    const auto p = aligned(read_boxes(a.pred));
    rows.push_back({name, run_otb(std::span<const std::optional<RotatedBox>>(p), std::span<const RotatedBox>(gt))});
  } else if (a.protocol == "vot") {
    if (!a.pred.empty()) {
      ReplayTracker replay(aligned(read_boxes(a.pred)));
      rows.push_back({name, run_vot(replay, {}, gt)});
    } else {
      if (a.seq.empty()) throw Error(ErrorCode::InvalidArgument, "vot evaluation needs --pred or --seq");
      const auto frames = load_sequence(a.seq);
      if (frames.size() != gt.size()) throw Error(ErrorCode::Format, "ground truth and frames differ in count");
      const SideData side =
          load_side_data(frames.size(), frames[0].width(), frames[0].height(), a.flow_dir, a.edge_dir, a.mb_dir);
      if (a.runs < 1) throw Error(ErrorCode::InvalidArgument, "--runs must be >= 1");
      EvalReport mean;
      double failures = 0;
      for (int r = 0; r < a.runs; ++r) {
        RunConfig cfg = build_config(a.cfg);
        if (r > 0) apply_setting(cfg, "seed", std::to_string(cfg.seed + static_cast<std::uint64_t>(r)));
        if (r == 0) log << "# configuration\n" << echo_config(cfg);
        ProposalTracker tracker(cfg.tracker, &side);
        EvalReport rep = run_vot(tracker, frames, gt);
        if (a.runs > 1) rows.push_back({name + "@seed" + std::to_string(cfg.seed), rep});
        mean.mean_iou += rep.mean_iou / a.runs;
        mean.auc += rep.auc / a.runs;
        mean.f1_at_50 += rep.f1_at_50 / a.runs;
        failures += static_cast<double>(rep.failures) / a.runs;
        if (mean.precision_curve.empty()) mean.precision_curve.assign(rep.precision_curve.size(), 0.0);
        if (mean.success_curve.empty()) mean.success_curve.assign(rep.success_curve.size(), 0.0);
        for (std::size_t i = 0; i < rep.precision_curve.size() && i < mean.precision_curve.size(); ++i)
          mean.precision_curve[i] += rep.precision_curve[i] / a.runs;
        for (std::size_t i = 0; i < rep.success_curve.size() && i < mean.success_curve.size(); ++i)
          mean.success_curve[i] += rep.success_curve[i] / a.runs;
      }
      mean.failures = static_cast<int>(std::lround(failures));
      rows.push_back({name, mean});
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown protocol '" + a.protocol + "'");
  }
  write_report_csv((out / "report.csv").string(), rows);
  write_curves_csv((out / name).string(), rows.back().report);
  const auto& r = rows.back().report;
  log << name << ": mean_iou " << format_number(r.mean_iou) << ", failures " << r.failures << ", precision@20 "
      << format_number(r.precision_at(kPrecisionAt)) << ", auc " << format_number(r.auc) << "\n";
  return kOk;
}

struct SynthArgs {
  std::string script, out, object = "160,120,64,48,0", format = "pgm";
  int width = 320, height = 240;
  std::uint64_t seed = 7;
  double noise = 0.01, clutter = 4.0;
};

/// One "s,theta,tx,ty" line per transition; blank lines and '#' comments are skipped.
inline std::vector<Similarity> read_script(const fs::path& path) {
  std::vector<Similarity> out;
  int lineno = 0;
  for (const auto& l : read_lines(path)) {
    ++lineno;
    const std::string s = l.substr(0, l.find('#'));
    if (s.find_first_not_of(" \t") == std::string::npos) continue;
    const auto v = parse_numbers(s);
    if (v.size() != 4)
      throw Error(ErrorCode::Format, "script line " + std::to_string(lineno) + " needs s,theta,tx,ty");
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

inline int run_synth(const SynthArgs& a, std::ostream& log) {
  SynthConfig sc;
  sc.width = a.width;
  sc.height = a.height;
  sc.texture_seed = a.seed;
  sc.noise_sigma = a.noise;
  sc.clutter_density = a.clutter;
  sc.script = read_script(a.script);
  const auto o = parse_numbers(a.object);
  if (o.size() != 5) throw Error(ErrorCode::Format, "--object expects cx,cy,w,h,angle");
  sc.object = {o[0], o[1], o[2], o[3], normalize_angle(o[4])};
  if (a.format != "pgm" && a.format != "png") throw Error(ErrorCode::InvalidArgument, "--format must be pgm or png");
  const SynthSequence seq = synth_sequence(sc);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  std::string gt;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const std::string p = (out / frame_name(t, a.format.c_str())).string();
    a.format == "png" ? save_png(seq.frames[t], p) : save_pgm(seq.frames[t], p);
    gt += format_polygon(seq.gt[t]) + "\n";
  }
  for (std::size_t t = 0; t < seq.flow.size(); ++t) write_flo(seq.flow[t], (out / indexed_name("flow", t, "flo")).string());
  write_text(out / "gt.txt", gt);
  log << "wrote " << seq.frames.size() << " frames to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Parses argv-style arguments (without the program name) and runs the command.
inline int run(std::vector<std::string> args, std::ostream& log = std::cerr) {
  CLI::App app{"Single-object tracking by proposal selection"};
  app.set_version_flag("--version", PROPSEL_VERSION);
  app.require_subcommand(1);

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "track an object through a frame directory");
  track->add_option("--seq", ta.seq, "directory of frame_%08d.(pgm|png)")->required();
  track->add_option("--init", ta.init, "box file; the first line initializes the tracker")->required();
  track->add_option("--out", ta.out, "output directory")->required();
  track->add_option("--flow-dir", ta.flow_dir, "precomputed flow_%08d.flo files");
  track->add_option("--edge-dir", ta.edge_dir, "precomputed edges_%08d.emap files");
  track->add_option("--mb-dir", ta.mb_dir, "precomputed mb_%08d.emap files");
  track->add_flag("--render", ta.render, "write overlay PNGs of the selected box");
  add_config_flags(*track, ta.cfg);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate predictions under the otb or vot protocol");
  eval->add_option("--protocol", ea.protocol, "otb or vot")->capture_default_str();
  eval->add_option("--gt", ea.gt, "ground-truth box file")->required();
  eval->add_option("--pred", ea.pred, "prediction box file");
  eval->add_option("--seq", ea.seq, "frame directory; vot runs the tracker with restarts");
  eval->add_option("--out", ea.out, "output directory")->capture_default_str();
  eval->add_option("--name", ea.name, "sequence name in the report");
  eval->add_option("--runs", ea.runs, "vot runs over consecutive seeds")->capture_default_str();
  eval->add_option("--flow-dir", ea.flow_dir);
  eval->add_option("--edge-dir", ea.edge_dir);
  eval->add_option("--mb-dir", ea.mb_dir);
  add_config_flags(*eval, ea.cfg);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "render a synthetic sequence from a motion script");
  synth->add_option("--script", sa.script, "one s,theta,tx,ty line per transition")->required();
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--width", sa.width)->capture_default_str();
  synth->add_option("--height", sa.height)->capture_default_str();
  synth->add_option("--object", sa.object, "initial box cx,cy,w,h,angle")->capture_default_str();
  synth->add_option("--seed", sa.seed, "texture seed")->capture_default_str();
  synth->add_option("--noise", sa.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--clutter", sa.clutter, "background blobs per 10^4 px")->capture_default_str();
  synth->add_option("--format", sa.format, "pgm or png")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    log << PROPSEL_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    log << "error: " << e.what() << "\n";
    return kInput;
  }
  try {
    if (*track) return run_track(ta, log);
    if (*eval) return run_eval(ea, log);
    return run_synth(sa, log);
  } catch (const SideDataError& e) {
    log << "error: side data mismatch: " << e.what() << "\n";
    return kSideData;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kInput;
  }
}

}  // namespace propsel::cli
