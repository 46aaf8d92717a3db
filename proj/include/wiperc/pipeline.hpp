#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wiperc/aigc_client.hpp"
#include "wiperc/csi_core.hpp"
#include "wiperc/edge_scheduler.hpp"
#include "wiperc/geometry.hpp"
#include "wiperc/io_util.hpp"
#include "wiperc/json_io.hpp"
#include "wiperc/multiscale_features.hpp"
#include "wiperc/quality_metrics.hpp"
#include "wiperc/skeleton_net.hpp"
#include "wiperc/spectral_estimation.hpp"
#include "wiperc/synth_channel.hpp"

namespace wiperc {

struct FeatureOptions {
  int n_links = 0;  // first n scene links; 0 keeps all
  bool multiscale = true;
  double snr_db = 20.0;
  double cfo_hz = 40.0;
  double static_window_s = 1.0;
  double fluctuation_window_s = 0.5;
  int orientation_stride = 10;   // frames between orientation windows
  int orientation_history = 10;  // windows summed per estimate
  int position_smoothing = 16;   // frames in the causal median
  int estimate_stride = 4;       // frames between spectral estimates
  bool fine_static_removal = true;

  int channels() const { return multiscale ? 4 : 2; }
};

inline void to_json(nlohmann::json& j, const FeatureOptions& o) {
  j = {{"n_links", o.n_links},
       {"multiscale", o.multiscale},
       {"snr_db", o.snr_db},
       {"cfo_hz", o.cfo_hz},
       {"static_window_s", o.static_window_s},
       {"fluctuation_window_s", o.fluctuation_window_s},
       {"orientation_stride", o.orientation_stride},
       {"orientation_history", o.orientation_history},
       {"position_smoothing", o.position_smoothing},
       {"estimate_stride", o.estimate_stride},
       {"fine_static_removal", o.fine_static_removal}};
}

inline void from_json(const nlohmann::json& j, FeatureOptions& o) {
  const FeatureOptions d;
  o.n_links = j.value("n_links", d.n_links);
  o.multiscale = j.value("multiscale", d.multiscale);
  o.snr_db = j.value("snr_db", d.snr_db);
  o.cfo_hz = j.value("cfo_hz", d.cfo_hz);
  o.static_window_s = j.value("static_window_s", d.static_window_s);
  o.fluctuation_window_s = j.value("fluctuation_window_s", d.fluctuation_window_s);
  o.orientation_stride = j.value("orientation_stride", d.orientation_stride);
  o.orientation_history = j.value("orientation_history", d.orientation_history);
  o.position_smoothing = j.value("position_smoothing", d.position_smoothing);
  o.estimate_stride = j.value("estimate_stride", d.estimate_stride);
  o.fine_static_removal = j.value("fine_static_removal", d.fine_static_removal);
}

using StageTimings = std::map<std::string, double>;

namespace detail {

template <class F>
auto timed(StageTimings& t, const std::string& stage, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  struct Record {
    StageTimings& t;
    const std::string& stage;
    std::chrono::steady_clock::time_point start;
    ~Record() { t[stage] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }
  } rec{t, stage, start};
  return f();
}

// Runs f, turning library errors into a StageError for `stage` at `frame`.
template <class F>
auto in_stage(const std::string& stage, int frame, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, frame, e.what());
  }
}

inline Vec2 median_position(const std::vector<Vec2>& pts) {
  std::vector<double> xs, ys;
  for (const auto& p : pts) {
    xs.push_back(p.x());
    ys.push_back(p.y());
  }
  auto med = [](std::vector<double>& v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  return {med(xs), med(ys)};
}

}  // namespace detail

// Everything the perception front end produces for one capture.
struct SceneFeatures {
  std::vector<Link> links;
  GroundTruth truth;
  std::vector<FeatureStep> steps;    // one C x K step per frame
  std::vector<Vec2> positions;       // smoothed location estimates
  std::vector<double> orientations;  // body axis estimates, NaN when unknown
  StageTimings timings;
};

// Per-link processing that does not depend on how many links are used.
struct SceneCapture {
  Scene scene;
  GroundTruth truth;
  std::vector<CsiStream> calibrated;  // absolute-delay dynamic component
  std::vector<CsiStream> fine;        // sanitized dynamic component
  std::vector<std::vector<LinkObservation>> obs;  // [frame][link]
  StageTimings timings;
};

namespace detail {

// Drops delay estimates that no reflector inside the deployment could produce.
inline LinkObservation gate_observation(LinkObservation o, const Link& link, double max_path_m) {
  const double baseline = (link.tx_pos - link.rx_pos).norm();
  std::vector<double> tof, pw;
  for (std::size_t i = 0; i < o.tof_s.size(); ++i) {
    const double d = o.tof_s[i] * kSpeedOfLight;
    if (d < baseline - 0.3 || d > max_path_m) continue;
    tof.push_back(o.tof_s[i]);
    pw.push_back(i < o.tof_powers.size() ? o.tof_powers[i] : 1.0);
  }
  o.tof_s = std::move(tof);
  o.tof_powers = std::move(pw);
  return o;
}

inline double max_path_length(const std::vector<Link>& links) {
  Vec2 lo = links.front().tx_pos, hi = lo;
  for (const auto& l : links) {
    lo = lo.cwiseMin(l.tx_pos).cwiseMin(l.rx_pos);
    hi = hi.cwiseMax(l.tx_pos).cwiseMax(l.rx_pos);
  }
  return 2.0 * (hi - lo).norm() + 1.0;
}

}  // namespace detail

// Large-scale stage input: a calibrated copy of each capture (no CFO, same
// noise) after static removal gives absolute delays and bearings of the body.
// Small-scale stage input: the CFO-impaired capture after conjugate
// multiplication and static removal.
inline SceneCapture capture_scene(const Scene& scene, const MotionTrace& motion, const FeatureOptions& opt,
                                  std::uint64_t seed) {
  SceneCapture cap;
  cap.scene = scene;
  if (opt.n_links < 0 || opt.n_links > static_cast<int>(scene.links.size()))
    throw ConfigError("n_links " + std::to_string(opt.n_links) + " outside the scene's " +
                      std::to_string(scene.links.size()) + " links");
  if (opt.n_links > 0) cap.scene.links.resize(opt.n_links);
  const auto& sc = cap.scene;
  const int n_links = static_cast<int>(sc.links.size());

  const auto rendered =
      detail::timed(cap.timings, "synth", [&] { return detail::in_stage("synth", 0, [&] { return render_csi(sc, motion); }); });
  cap.truth = rendered.truth;
  const int n_frames = static_cast<int>(motion.size());

  cap.calibrated.resize(n_links);
  cap.fine.resize(n_links);
  detail::timed(cap.timings, "sanitize", [&] {
    for (int l = 0; l < n_links; ++l) {
      const auto noise_seed = link_seed(seed, static_cast<std::size_t>(l));
      const auto cal = inject_impairments(rendered.streams[l], 0.0, opt.snr_db, noise_seed);
      const auto raw = inject_impairments(rendered.streams[l], opt.cfo_hz, opt.snr_db, noise_seed);
      CsiStream clean;
      clean.config = raw.config;
      for (int f = 0; f < n_frames; ++f)
        clean.frames.push_back(detail::in_stage("sanitize", f, [&] { return sanitize_phase(raw.frames[f]); }));
      cap.calibrated[l] = detail::in_stage("sanitize", 0, [&] { return remove_static(cal, opt.static_window_s); });
      cap.fine[l] = opt.fine_static_removal
                        ? detail::in_stage("sanitize", 0, [&] { return remove_static(clean, opt.static_window_s); })
                        : std::move(clean);
    }
    return 0;
  });

  cap.obs.resize(n_frames);
  if (opt.estimate_stride < 1) throw ConfigError("estimate_stride must be >= 1");
  detail::timed(cap.timings, "estimate", [&] {
    for (int f = 0; f < n_frames; f += opt.estimate_stride)
      for (int l = 0; l < n_links; ++l)
        cap.obs[f].push_back(detail::in_stage("estimate", f, [&] {
          return observe_link(cap.calibrated[l].frames[f], cap.calibrated[l].frames[f], sc.radio);
        }));
    return 0;
  });
  return cap;
}

// Location, orientation and fused features from the first `n_links` links of
// a capture (0 keeps all).
inline SceneFeatures perceive(const SceneCapture& cap, int n_links, const FeatureOptions& opt) {
  const int total = static_cast<int>(cap.scene.links.size());
  if (n_links < 0 || n_links > total)
    throw ConfigError("n_links " + std::to_string(n_links) + " outside the capture's " + std::to_string(total) + " links");
  if (n_links == 0) n_links = total;
  SceneFeatures out;
  out.timings = cap.timings;
  out.truth = cap.truth;
  Scene sc = cap.scene;
  sc.links.resize(n_links);
  out.links = sc.links;
  const auto& calibrated = cap.calibrated;
  const auto& fine = cap.fine;
  const int n_frames = static_cast<int>(cap.obs.size());
  // Gating depends on the deployment extent, so it is applied to the link subset in use.
  const double max_path = detail::max_path_length(sc.links);
  std::vector<std::vector<LinkObservation>> obs(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    if (cap.obs[f].empty()) continue;
    for (int l = 0; l < n_links; ++l) obs[f].push_back(detail::gate_observation(cap.obs[f][l], sc.links[l], max_path));
  }

  detail::timed(out.timings, "locate", [&] {
    std::vector<std::optional<Vec2>> raw(n_frames);
    std::optional<Vec2> prev;
    for (int f = 0; f < n_frames; ++f) {
      try {
        raw[f] = locate_user(obs[f], sc.links, prev).pos;
        prev = raw[f];
      } catch (const UnderdeterminedError&) {
        raw[f] = prev;  // hold the last fix; frames between estimates land here too
      } catch (const Error& e) {
        throw StageError("locate", f, e.what());
      }
    }
    const auto first = std::find_if(raw.begin(), raw.end(), [](const auto& p) { return p.has_value(); });
    if (first == raw.end()) throw StageError("locate", 0, "no frame had enough constraints");
    for (auto& p : raw)
      if (!p) p = *first;
    for (int f = 0; f < n_frames; ++f) {
      std::vector<Vec2> recent;
      for (int g = std::max(0, f - opt.position_smoothing + 1); g <= f; ++g) recent.push_back(*raw[g]);
      out.positions.push_back(detail::median_position(recent));
    }
    return 0;
  });

  detail::timed(out.timings, "orient", [&] {
    out.orientations.assign(n_frames, std::numeric_limits<double>::quiet_NaN());
    if (n_links < 2) return 0;
    const int half = std::max(1, window_samples(opt.fluctuation_window_s, sc.radio.sample_rate_hz) / 2);
    std::vector<std::pair<int, OrientationSample>> samples;  // (last frame used, sample)
    for (int c = half; c + half < n_frames; c += opt.orientation_stride) {
      OrientationSample s;
      s.user_pos = out.positions[c];
      for (int l = 0; l < n_links; ++l)
        s.fluct[sc.links[l].id] = detail::in_stage("orient", c, [&] {
          return motion_fluctuation(calibrated[l], static_cast<std::size_t>(c), opt.fluctuation_window_s, sc.links[l],
                                    s.user_pos);
        });
      samples.emplace_back(c + half, std::move(s));
    }
    double last = std::numeric_limits<double>::quiet_NaN();
    std::size_t next = 0;
    std::vector<OrientationSample> window;
    for (int f = 0; f < n_frames; ++f) {
      bool changed = false;
      while (next < samples.size() && samples[next].first <= f) {
        window.push_back(samples[next++].second);
        if (static_cast<int>(window.size()) > opt.orientation_history) window.erase(window.begin());
        changed = true;
      }
      if (changed) {
        try {
          last = estimate_orientation(window, sc.links).phi;
        } catch (const NoMotionError&) {
          // keep the previous axis
        } catch (const Error& e) {
          throw StageError("orient", f, e.what());
        }
      }
      out.orientations[f] = last;
    }
    return 0;
  });

  detail::timed(out.timings, "fuse", [&] {
    const auto uniform = uniform_weights(sc.links);
    for (int f = 0; f < n_frames; ++f) {
      out.steps.push_back(detail::in_stage("fuse", f, [&] {
        std::map<std::string, AmpPhase> per_link;
        for (int l = 0; l < n_links; ++l) per_link[sc.links[l].id] = amp_phase(fine[l].frames[f]);
        if (!opt.multiscale) return stack_pairs({fuse_links(per_link, uniform)});
        const auto wd = distance_weights(out.positions[f], sc.links);
        const auto wo = std::isnan(out.orientations[f]) ? uniform
                                                        : orientation_weights(out.orientations[f], out.positions[f], sc.links);
        return stack_pairs({fuse_links(per_link, wd), fuse_links(per_link, wo)});
      }));
    }
    return 0;
  });
  return out;
}

inline SceneFeatures extract_features(const Scene& scene, const MotionTrace& motion, const FeatureOptions& opt,
                                      std::uint64_t seed) {
  return perceive(capture_scene(scene, motion, opt, seed), 0, opt);
}

struct WindowOptions {
  int length = 16;
  int stride = 8;
};

inline void to_json(nlohmann::json& j, const WindowOptions& w) { j = {{"length", w.length}, {"stride", w.stride}}; }

inline void from_json(const nlohmann::json& j, WindowOptions& w) {
  w.length = j.value("length", 16);
  w.stride = j.value("stride", 8);
}

// Windows over the feature sequence; each is labelled with the keypoints of
// its last frame.
struct LabelledWindow {
  Sample sample;
  int end_frame = 0;
};

inline std::vector<LabelledWindow> make_windows(const SceneFeatures& feats, const WindowOptions& w) {
  const auto xs = build_window(feats.steps, w.length, w.stride);
  std::vector<LabelledWindow> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const int end = static_cast<int>(i) * w.stride + w.length - 1;
    const auto& kp = feats.truth.keypoints[end];
    out.push_back({Sample{xs[i], make_target(std::vector<Eigen::Vector2d>(kp.begin(), kp.end()), feats.truth.camera.rows,
                                             feats.truth.camera.cols)},
                   end});
  }
  return out;
}

// Training scenes use seeds disjoint from evaluation scenes by offset.
inline constexpr std::uint64_t kTrainSeedBase = 100000;
inline constexpr std::uint64_t kEvalSeedBase = 200000;

inline std::vector<Sample> scene_samples(const std::string& preset, std::uint64_t scene_seed, const FeatureOptions& opt,
                                         const WindowOptions& w) {
  const auto p = preset_scenario(preset, scene_seed);
  std::vector<Sample> out;
  for (auto& lw : make_windows(extract_features(p.scene, p.motion, opt, scene_seed), w)) out.push_back(std::move(lw.sample));
  return out;
}

inline NetConfig net_config_for(const FeatureOptions& opt, const RadioConfig& radio, const WindowOptions& w) {
  NetConfig cfg;
  cfg.in_t = w.length;
  cfg.in_k = radio.n_subcarriers;
  cfg.in_c = opt.channels();
  return cfg;
}

// Joint error in pixels averaged over windows and joints.
inline double mean_joint_error(SkeletonNet& net, const std::vector<Sample>& set) { return evaluate(net, set).joint_error_px; }

// Similarity between two skeletons as the SSIM of their rendered figures.
inline double skeleton_similarity(const Keypoints& truth, const Keypoints& pred, const CameraModel& cam,
                                  double contrast = stub_contrast(kDefaultTextGuidance, kDefaultImageGuidance)) {
  return ssim(stub_figure(render_skeleton(truth, cam.rows, cam.cols), contrast),
              stub_figure(render_skeleton(pred, cam.rows, cam.cols), contrast));
}

inline Keypoints to_keypoints(const std::vector<Eigen::Vector2d>& v) {
  Keypoints kp;
  for (int j = 0; j < kNumJoints; ++j) kp[j] = v[j];
  return kp;
}

inline const ReferenceStats& default_reference_stats() {
  static const ReferenceStats stats = reference_stats(stub_reference_corpus());
  return stats;
}

// ---------------------------------------------------------------------------
// End-to-end run

struct PipelineConfig {
  std::string preset = "case_study_5rx";
  std::optional<std::filesystem::path> scene_path;   // overrides the preset scene
  std::optional<std::filesystem::path> motion_path;  // overrides the preset motion
  nlohmann::json radio_overrides = nlohmann::json::object();
  FeatureOptions features;
  WindowOptions windows;
  std::filesystem::path checkpoint;
  ScheduleConfig schedule;
  std::optional<std::string> aigc_endpoint;  // unset: offline stub
  std::string instruction = GenerationRequest{}.instruction;
  double text_guidance = kDefaultTextGuidance;
  double image_guidance = kDefaultImageGuidance;
  double timeout_s = 30.0;
  std::optional<std::filesystem::path> ref_stats_path;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 1;
  bool write_images = true;
};

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  const PipelineConfig d;
  c.preset = j.value("preset", d.preset);
  if (j.contains("scene")) c.scene_path = j["scene"].get<std::string>();
  if (j.contains("motion")) c.motion_path = j["motion"].get<std::string>();
  c.radio_overrides = j.value("radio", nlohmann::json::object());
  c.features = j.value("features", FeatureOptions{});
  if (j.contains("multiscale")) c.features.multiscale = j["multiscale"].get<bool>();
  c.windows = j.value("windows", WindowOptions{});
  c.checkpoint = j.value("checkpoint", std::string{});
  c.schedule = j.value("schedule", ScheduleConfig{});
  if (j.contains("aigc_endpoint") && !j["aigc_endpoint"].is_null()) c.aigc_endpoint = j["aigc_endpoint"].get<std::string>();
  c.instruction = j.value("instruction", d.instruction);
  c.text_guidance = j.value("text_guidance", d.text_guidance);
  c.image_guidance = j.value("image_guidance", d.image_guidance);
  c.timeout_s = j.value("timeout_s", d.timeout_s);
  if (j.contains("ref_stats")) c.ref_stats_path = j["ref_stats"].get<std::string>();
  c.output_dir = j.value("output_dir", d.output_dir.string());
  c.seed = j.value("seed", d.seed);
  c.write_images = j.value("write_images", d.write_images);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"preset", c.preset},
       {"radio", c.radio_overrides},
       {"features", c.features},
       {"windows", c.windows},
       {"checkpoint", c.checkpoint.string()},
       {"schedule", c.schedule},
       {"aigc_endpoint", c.aigc_endpoint ? nlohmann::json(*c.aigc_endpoint) : nlohmann::json(nullptr)},
       {"instruction", c.instruction},
       {"text_guidance", c.text_guidance},
       {"image_guidance", c.image_guidance},
       {"timeout_s", c.timeout_s},
       {"output_dir", c.output_dir.string()},
       {"seed", c.seed},
       {"write_images", c.write_images}};
  if (c.scene_path) j["scene"] = c.scene_path->string();
  if (c.motion_path) j["motion"] = c.motion_path->string();
  if (c.ref_stats_path) j["ref_stats"] = c.ref_stats_path->string();
}

struct WindowReport {
  int end_frame = 0;
  double joint_error_px = 0.0;
  double position_error_m = 0.0;
  double orientation_error_deg = std::numeric_limits<double>::quiet_NaN();
  double similarity = 0.0;
  double tv = 0.0;
  double naturalness = 0.0;
  std::string skeleton_image;
  std::string generated_image;
};

struct Report {
  std::string preset;
  std::uint64_t seed = 0;
  int n_links = 0;
  bool multiscale = true;
  Budget budget;
  std::vector<WindowReport> windows;
  double mean_joint_error_px = 0.0;
  double mean_position_error_m = 0.0;
  double median_position_error_m = 0.0;
  double mean_orientation_error_deg = std::numeric_limits<double>::quiet_NaN();
  double mean_similarity = 0.0;
  double mean_tv = 0.0;
  double mean_naturalness = 0.0;
  StageTimings timings;
};

namespace detail {
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace detail

inline void to_json(nlohmann::json& j, const WindowReport& w) {
  j = {{"end_frame", w.end_frame},
       {"joint_error_px", w.joint_error_px},
       {"position_error_m", w.position_error_m},
       {"orientation_error_deg", detail::finite_or_null(w.orientation_error_deg)},
       {"similarity", w.similarity},
       {"tv", w.tv},
       {"naturalness", w.naturalness},
       {"skeleton_image", w.skeleton_image},
       {"generated_image", w.generated_image}};
}

inline void to_json(nlohmann::json& j, const Report& r) {
  j = {{"preset", r.preset},
       {"seed", r.seed},
       {"n_links", r.n_links},
       {"multiscale", r.multiscale},
       {"aigc_time_s", r.budget.aigc_time_s},
       {"steps", r.budget.steps},
       {"mean_joint_error_px", r.mean_joint_error_px},
       {"mean_position_error_m", r.mean_position_error_m},
       {"median_position_error_m", r.median_position_error_m},
       {"mean_orientation_error_deg", detail::finite_or_null(r.mean_orientation_error_deg)},
       {"ssim", r.mean_similarity},
       {"tv", r.mean_tv},
       {"naturalness", r.mean_naturalness},
       {"timings_s", r.timings},
       {"windows", r.windows}};
}

inline Preset load_scenario(const PipelineConfig& cfg) {
  Preset p;
  try {
    p = preset_scenario(cfg.preset, cfg.seed);
    if (cfg.scene_path) p.scene = nlohmann::json::parse(io::read_file(*cfg.scene_path)).get<Scene>();
    if (cfg.motion_path) p.motion = nlohmann::json::parse(io::read_file(*cfg.motion_path)).get<MotionTrace>();
    from_json(cfg.radio_overrides, p.scene.radio);
    p.scene.validate();
  } catch (const nlohmann::json::exception& e) {
    throw StageError("synth", 0, std::string("bad scene input: ") + e.what(), true);
  } catch (const Error& e) {
    throw StageError("synth", 0, e.what(), true);
  }
  return p;
}

inline Report run_pipeline(const PipelineConfig& cfg) {
  Report rep;
  rep.preset = cfg.preset;
  rep.seed = cfg.seed;
  rep.multiscale = cfg.features.multiscale;

  if (cfg.checkpoint.empty() || !std::filesystem::exists(cfg.checkpoint))
    throw StageError("skeleton-net", 0, "checkpoint not found: '" + cfg.checkpoint.string() + "'", true);
  auto net = [&] {
    try {
      return load_checkpoint(cfg.checkpoint);
    } catch (const Error& e) {
      throw StageError("skeleton-net", 0, e.what(), true);
    }
  }();

  const auto scenario = load_scenario(cfg);
  const int n_links = cfg.features.n_links > 0 ? cfg.features.n_links : static_cast<int>(scenario.scene.links.size());
  rep.n_links = n_links;
  try {
    rep.budget = budget(n_links, cfg.schedule);
  } catch (const Error& e) {
    throw StageError("edge-scheduler", 0, e.what(), true);
  }
  const auto expected = net_config_for(cfg.features, scenario.scene.radio, cfg.windows);
  if (net.config().in_c != expected.in_c || net.config().in_t != expected.in_t || net.config().in_k != expected.in_k)
    throw StageError("skeleton-net", 0,
                     "checkpoint expects input " + std::to_string(net.config().in_c) + "x" +
                         std::to_string(net.config().in_t) + "x" + std::to_string(net.config().in_k) + ", features are " +
                         std::to_string(expected.in_c) + "x" + std::to_string(expected.in_t) + "x" +
                         std::to_string(expected.in_k),
                     true);

  ReferenceStats ref;
  if (cfg.ref_stats_path) {
    try {
      ref = nlohmann::json::parse(io::read_file(*cfg.ref_stats_path)).get<ReferenceStats>();
    } catch (const std::exception& e) {
      throw StageError("metrics", 0, std::string("cannot load reference stats: ") + e.what(), true);
    }
  } else {
    ref = default_reference_stats();
  }

  auto feats = extract_features(scenario.scene, scenario.motion, cfg.features, cfg.seed);
  rep.timings = feats.timings;
  const auto windows = make_windows(feats, cfg.windows);
  const auto generator = make_generator(cfg.aigc_endpoint);
  const auto& cam = feats.truth.camera;
  const double contrast = stub_contrast(cfg.text_guidance, cfg.image_guidance);
  std::vector<std::string> files;
  if (cfg.write_images) std::filesystem::create_directories(cfg.output_dir / "frames");

  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& lw = windows[i];
    const int f = lw.end_frame;
    WindowReport w;
    w.end_frame = f;
    const auto pred = detail::timed(rep.timings, "skeleton-net", [&] {
      return detail::in_stage("skeleton-net", f, [&] { return to_keypoints(net.predict_keypoints(lw.sample.x)); });
    });
    const auto& truth = feats.truth.keypoints[f];
    for (int j = 0; j < kNumJoints; ++j) w.joint_error_px += (pred[j] - truth[j]).norm() / kNumJoints;
    w.position_error_m = (feats.positions[f] - feats.truth.user_pos[f]).norm();
    if (!std::isnan(feats.orientations[f]))
      w.orientation_error_deg = axis_distance(feats.orientations[f], feats.truth.orientation_rad[f]) * 180.0 / kPi;

    GenerationRequest req;
    req.skeleton_image = render_skeleton(pred, cam.rows, cam.cols);
    req.instruction = cfg.instruction;
    req.steps = rep.budget.steps;
    req.text_guidance = cfg.text_guidance;
    req.image_guidance = cfg.image_guidance;
    req.timeout_s = cfg.timeout_s;
    const auto image = detail::timed(rep.timings, "aigc", [&] {
      return detail::in_stage("aigc", f, [&] { return generator(req, cfg.seed * 1000003ull + i); });
    });
    detail::timed(rep.timings, "metrics", [&] {
      return detail::in_stage("metrics", f, [&] {
        w.similarity = ssim(stub_figure(render_skeleton(truth, cam.rows, cam.cols), contrast),
                            stub_figure(req.skeleton_image, contrast));
        w.tv = total_variation(image);
        w.naturalness = naturalness_score(image, ref);
        return 0;
      });
    });
    if (cfg.write_images) {
      char name[64];
      std::snprintf(name, sizeof name, "frames/w%03zu_skeleton.png", i);
      w.skeleton_image = name;
      std::snprintf(name, sizeof name, "frames/w%03zu_generated.png", i);
      w.generated_image = name;
      io::write_file_atomic(cfg.output_dir / w.skeleton_image, encode_png(req.skeleton_image));
      io::write_file_atomic(cfg.output_dir / w.generated_image, encode_png(image));
      files.push_back(w.skeleton_image);
      files.push_back(w.generated_image);
    }
    rep.windows.push_back(w);
  }

  const double n = static_cast<double>(rep.windows.size());
  std::vector<double> pos_err;
  double orient_sum = 0.0;
  int orient_n = 0;
  for (const auto& w : rep.windows) {
    rep.mean_joint_error_px += w.joint_error_px / n;
    rep.mean_position_error_m += w.position_error_m / n;
    rep.mean_similarity += w.similarity / n;
    rep.mean_tv += w.tv / n;
    rep.mean_naturalness += w.naturalness / n;
    pos_err.push_back(w.position_error_m);
    if (!std::isnan(w.orientation_error_deg)) {
      orient_sum += w.orientation_error_deg;
      ++orient_n;
    }
  }
  if (!pos_err.empty()) {
    std::nth_element(pos_err.begin(), pos_err.begin() + pos_err.size() / 2, pos_err.end());
    rep.median_position_error_m = pos_err[pos_err.size() / 2];
  }
  if (orient_n > 0) rep.mean_orientation_error_deg = orient_sum / orient_n;

  std::filesystem::create_directories(cfg.output_dir);
  io::write_file_atomic(cfg.output_dir / "report.json", nlohmann::json(rep).dump(2));
  files.push_back("report.json");
  nlohmann::json manifest = {{"command", "run"}, {"seed", cfg.seed}, {"config", cfg}, {"files", files}};
  io::write_file_atomic(cfg.output_dir / "manifest.json", manifest.dump(2));
  return rep;
}

// ---------------------------------------------------------------------------
// Link-count sweep (generated-content quality versus perception links)

struct Fig6Config {
  std::string preset = "case_study_5rx";
  int seeds = 20;
  int train_scenes = 12;
  int windows_per_seed = 4;
  FeatureOptions features;
  WindowOptions windows;
  TrainConfig train;
  ScheduleConfig schedule;
  std::optional<std::filesystem::path> checkpoint;  // reuse instead of training
  std::uint64_t seed = 7;
};

inline void from_json(const nlohmann::json& j, Fig6Config& c) {
  const Fig6Config d;
  c.preset = j.value("preset", d.preset);
  c.seeds = j.value("seeds", d.seeds);
  c.train_scenes = j.value("train_scenes", d.train_scenes);
  c.windows_per_seed = j.value("windows_per_seed", d.windows_per_seed);
  c.features = j.value("features", d.features);
  c.windows = j.value("windows", d.windows);
  c.train.epochs = j.value("epochs", d.train.epochs);
  c.train.batch_size = j.value("batch_size", d.train.batch_size);
  c.train.learning_rate = j.value("learning_rate", d.train.learning_rate);
  c.schedule = j.value("schedule", d.schedule);
  if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
  c.seed = j.value("seed", d.seed);
}

struct Fig6Row {
  int n_links = 0;
  double aigc_time_s = 0.0;
  int steps = 0;
  double similarity = 0.0;
  double tv = 0.0;
  double naturalness = 0.0;
};

struct Fig6Result {
  std::vector<Fig6Row> rows;
  // [n index][seed] per-seed means
  std::vector<std::vector<double>> similarity, tv, naturalness;
  std::vector<std::string> failures;

  static bool non_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] < v[i - 1]) return false;
    return true;
  }
  std::vector<double> column(double Fig6Row::* m) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*m);
    return v;
  }
  // Fraction of seeds whose value at the largest n exceeds the one at n=1.
  static double endpoint_agreement(const std::vector<std::vector<double>>& per_seed) {
    if (per_seed.size() < 2 || per_seed.front().empty()) return 0.0;
    int agree = 0;
    for (std::size_t s = 0; s < per_seed.front().size(); ++s) agree += per_seed.back()[s] > per_seed.front()[s];
    return static_cast<double>(agree) / per_seed.front().size();
  }

  std::string csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "n_links,aigc_time_s,steps,similarity,tv,naturalness\n";
    for (const auto& r : rows)
      os << r.n_links << ',' << r.aigc_time_s << ',' << r.steps << ',' << r.similarity << ',' << r.tv << ','
         << r.naturalness << '\n';
    return os.str();
  }

  nlohmann::json summary() const {
    return {{"similarity_non_decreasing", non_decreasing(column(&Fig6Row::similarity))},
            {"tv_non_decreasing", non_decreasing(column(&Fig6Row::tv))},
            {"naturalness_non_decreasing", non_decreasing(column(&Fig6Row::naturalness))},
            {"similarity_endpoint_agreement", endpoint_agreement(similarity)},
            {"tv_endpoint_agreement", endpoint_agreement(tv)},
            {"naturalness_endpoint_agreement", endpoint_agreement(naturalness)},
            {"seeds", similarity.empty() ? 0 : similarity.front().size()}};
  }
};

// Trains one network on scenes captured with a random link count each, so a
// single model serves every n in the sweep.
inline SkeletonNet train_sweep_net(const Fig6Config& cfg, int n_hi, TrainResult* result = nullptr) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(1, n_hi);
  std::vector<Sample> train_set;
  RadioConfig radio;
  for (int i = 0; i < cfg.train_scenes; ++i) {
    auto opt = cfg.features;
    opt.n_links = pick(rng);
    const auto scene_seed = kTrainSeedBase + cfg.seed * 1000 + i;
    const auto p = preset_scenario(cfg.preset, scene_seed);
    radio = p.scene.radio;
    for (auto& lw : make_windows(extract_features(p.scene, p.motion, opt, scene_seed), cfg.windows))
      train_set.push_back(std::move(lw.sample));
  }
  SkeletonNet net(net_config_for(cfg.features, radio, cfg.windows), cfg.seed);
  auto tc = cfg.train;
  tc.seed = cfg.seed;
  const auto r = train(net, train_set, {}, tc);
  if (result) *result = r;
  return net;
}

inline Fig6Result reproduce_fig6(const Fig6Config& cfg, const std::function<void(const std::string&)>& log = {}) {
  const auto probe = preset_scenario(cfg.preset, 0);
  const int n_hi = std::min(feasible_range(cfg.schedule).n_max, static_cast<int>(probe.scene.links.size()));
  SkeletonNet net = cfg.checkpoint ? load_checkpoint(*cfg.checkpoint) : train_sweep_net(cfg, n_hi);
  if (log) log("network ready");
  const auto& ref = default_reference_stats();
  const double contrast = stub_contrast(kDefaultTextGuidance, kDefaultImageGuidance);

  Fig6Result res;
  res.similarity.assign(n_hi, std::vector<double>(cfg.seeds, 0.0));
  res.tv = res.similarity;
  res.naturalness = res.similarity;
  for (int s = 0; s < cfg.seeds; ++s) {
    const auto scene_seed = kEvalSeedBase + cfg.seed * 1000 + s;
    const auto p = preset_scenario(cfg.preset, scene_seed);
    auto cap_opt = cfg.features;
    cap_opt.n_links = n_hi;
    const auto cap = capture_scene(p.scene, p.motion, cap_opt, scene_seed);
    for (int n = 1; n <= n_hi; ++n) {
      const auto b = budget(n, cfg.schedule);
      const auto feats = perceive(cap, n, cfg.features);
      const auto windows = make_windows(feats, cfg.windows);
      const int count = std::min<int>(cfg.windows_per_seed, static_cast<int>(windows.size()));
      const auto& cam = feats.truth.camera;
      for (int k = 0; k < count; ++k) {
        const auto& lw = windows[k * windows.size() / count];
        const auto pred = to_keypoints(net.predict_keypoints(lw.sample.x));
        GenerationRequest req;
        req.skeleton_image = render_skeleton(pred, cam.rows, cam.cols);
        req.steps = b.steps;
        const auto img = stub_generate(req, scene_seed * 31 + k);
        res.similarity[n - 1][s] += skeleton_similarity(feats.truth.keypoints[lw.end_frame], pred, cam, contrast) / count;
        res.tv[n - 1][s] += total_variation(img) / count;
        res.naturalness[n - 1][s] += naturalness_score(img, ref) / count;
      }
    }
    if (log) log("seed " + std::to_string(s + 1) + "/" + std::to_string(cfg.seeds) + " done");
  }
  for (int n = 1; n <= n_hi; ++n) {
    const auto b = budget(n, cfg.schedule);
    Fig6Row row{n, b.aigc_time_s, b.steps, 0, 0, 0};
    for (int s = 0; s < cfg.seeds; ++s) {
      row.similarity += res.similarity[n - 1][s] / cfg.seeds;
      row.tv += res.tv[n - 1][s] / cfg.seeds;
      row.naturalness += res.naturalness[n - 1][s] / cfg.seeds;
    }
    res.rows.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Multiscale ablation: paired networks trained with and without the
// location/orientation weighting on identical scenes.

struct AblationConfig {
  std::string preset = "torso_arm_ambiguity";
  int train_scenes = 8;
  int test_scenes = 3;
  FeatureOptions features;
  WindowOptions windows;
  TrainConfig train;
};

struct AblationPair {
  std::uint64_t seed = 0;
  double on_error_px = 0.0;
  double off_error_px = 0.0;
};

inline AblationPair multiscale_ablation(const AblationConfig& cfg, std::uint64_t seed) {
  AblationPair out;
  out.seed = seed;
  std::vector<SceneCapture> train_caps, test_caps;
  for (int i = 0; i < cfg.train_scenes + cfg.test_scenes; ++i) {
    const bool is_train = i < cfg.train_scenes;
    const auto scene_seed = (is_train ? kTrainSeedBase + i : kEvalSeedBase + i - cfg.train_scenes) + seed * 1000;
    const auto p = preset_scenario(cfg.preset, scene_seed);
    (is_train ? train_caps : test_caps).push_back(capture_scene(p.scene, p.motion, cfg.features, scene_seed));
  }
  for (bool on : {true, false}) {
    auto opt = cfg.features;
    opt.multiscale = on;
    auto collect = [&](const std::vector<SceneCapture>& caps) {
      std::vector<Sample> set;
      for (const auto& cap : caps)
        for (auto& lw : make_windows(perceive(cap, 0, opt), cfg.windows)) set.push_back(std::move(lw.sample));
      return set;
    };
    const auto train_set = collect(train_caps);
    const auto test_set = collect(test_caps);
    SkeletonNet net(net_config_for(opt, train_caps.front().scene.radio, cfg.windows), seed);
    auto tc = cfg.train;
    tc.seed = seed;
    train(net, train_set, {}, tc);
    (on ? out.on_error_px : out.off_error_px) = mean_joint_error(net, test_set);
  }
  return out;
}

}  // namespace wiperc
