#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wiperc/csi_core.hpp"
#include "wiperc/skeleton.hpp"

namespace wiperc {

struct Scatterer {
  Vec2 pos{0.0, 0.0};
  cplx reflectivity{0.3, 0.0};
  // Empty for static objects; joint index for body segments.
  std::optional<int> joint;

  bool is_static() const { return !joint.has_value(); }
};

struct Scene {
  std::vector<Link> links;
  std::vector<Scatterer> statics;
  RadioConfig radio;
  std::uint64_t seed = 0;

  void validate() const {
    if (links.empty()) throw ConfigError("scene has no links");
    radio.validate();
    for (const auto& l : links) l.validate();
    for (const auto& s : statics)
      if (std::abs(s.reflectivity) > 1.0) throw ConfigError("scatterer reflectivity exceeds 1");
  }
  const Link& link(const std::string& id) const {
    for (const auto& l : links)
      if (l.id == id) return l;
    throw InputError("unknown link id " + id);
  }
};

struct MotionSample {
  double t = 0.0;
  Vec2 user_pos{0.0, 0.0};
  double orientation_rad = 0.0;
  BodyPose pose{};
  std::array<Vec2, kNumJoints> joints{};  // scene-plane joint positions
};

inline const std::array<cplx, kNumJoints>& default_joint_reflectivity() {
  // Torso joints dominate; limbs are weaker reflectors.
  static const std::array<cplx, kNumJoints> r = {
      cplx(0.20, 0), cplx(0.35, 0), cplx(0.30, 0), cplx(0.18, 0), cplx(0.14, 0),
      cplx(0.30, 0), cplx(0.18, 0), cplx(0.14, 0), cplx(0.35, 0), cplx(0.15, 0),
      cplx(0.10, 0), cplx(0.35, 0), cplx(0.15, 0), cplx(0.10, 0),
  };
  return r;
}

struct MotionTrace {
  std::vector<MotionSample> samples;
  std::array<cplx, kNumJoints> joint_reflectivity = default_joint_reflectivity();
  CameraModel camera;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  Keypoints keypoints(std::size_t i) const {
    return project_keypoints(samples[i].pose, samples[i].orientation_rad, camera);
  }
};

// Builds a trace whose scene-plane joints follow pose, position and yaw.
inline MotionSample make_motion_sample(double t, const Vec2& user_pos, double phi, const BodyPose& pose) {
  MotionSample s;
  s.t = t;
  s.user_pos = user_pos;
  s.orientation_rad = std::fmod(std::fmod(phi, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
  s.pose = pose;
  s.joints = joints_in_scene(pose, user_pos, phi);
  return s;
}

enum class PathKind { direct, static_object, body };

struct PathTruth {
  double aoa_rad = 0.0;
  double tof_s = 0.0;
  cplx gain{0.0, 0.0};
  PathKind kind = PathKind::direct;
  int index = -1;  // static scatterer index or joint index
};

struct LinkTruth {
  std::string link_id;
  std::vector<std::vector<PathTruth>> paths;  // [frame][path]
};

struct GroundTruth {
  std::vector<LinkTruth> links;
  std::vector<double> t;
  std::vector<Vec2> user_pos;
  std::vector<double> orientation_rad;
  std::vector<Keypoints> keypoints;
  CameraModel camera;

  SkeletonFrame skeleton_frame(std::size_t i) const {
    return make_skeleton_frame(keypoints[i], camera.rows, camera.cols);
  }
};

// Which path families to include. Rendering body paths alone is the ideal
// output of static removal and serves as the estimation oracle.
struct RenderOptions {
  bool direct = true;
  bool statics = true;
  bool body = true;
};

// Angle of arrival of a ray from `from` at the RX array of `link`.
inline double arrival_angle(const Link& link, const Vec2& from) {
  const Vec2 dir = (from - link.rx_pos).normalized();
  return std::asin(std::clamp(dir.dot(link.array_axis()), -1.0, 1.0));
}

// Single-bounce path TX -> point -> RX. Amplitude follows 1/(d1*d2).
inline PathTruth bounce_path(const Link& link, const Vec2& p, cplx reflectivity) {
  const double d1 = (p - link.tx_pos).norm();
  const double d2 = (p - link.rx_pos).norm();
  if (d1 < 1e-9 || d2 < 1e-9) throw GeometryError("scatterer coincides with a link endpoint of " + link.id);
  PathTruth pt;
  pt.tof_s = (d1 + d2) / kSpeedOfLight;
  pt.aoa_rad = arrival_angle(link, p);
  pt.gain = reflectivity / (d1 * d2);
  return pt;
}

inline PathTruth direct_path(const Link& link) {
  PathTruth pt;
  pt.tof_s = link.length() / kSpeedOfLight;
  pt.aoa_rad = 0.0;
  pt.gain = cplx(1.0 / link.length(), 0.0);
  pt.kind = PathKind::direct;
  return pt;
}

// h[k,a] = sum_p g_p exp(-j 2 pi (f_c + k df) tau_p) exp(j 2 pi (d / lambda) a sin(theta_p))
inline Eigen::MatrixXcd render_paths(const std::vector<PathTruth>& paths, const RadioConfig& radio) {
  const int n_sc = radio.n_subcarriers;
  const int n_ant = radio.n_rx_antennas;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n_sc, n_ant);
  const double fc = radio.carrier_hz();
  std::vector<cplx> ant(n_ant);
  for (const auto& p : paths) {
    const double spatial = 2.0 * kPi * radio.antenna_spacing_m / radio.carrier_wavelength_m * std::sin(p.aoa_rad);
    for (int a = 0; a < n_ant; ++a) ant[a] = std::polar(1.0, spatial * a);
    for (int k = 0; k < n_sc; ++k) {
      const double ph = -2.0 * kPi * (fc + k * radio.subcarrier_spacing_hz) * p.tof_s;
      const cplx base = p.gain * std::polar(1.0, ph);
      for (int a = 0; a < n_ant; ++a) h(k, a) += base * ant[a];
    }
  }
  return h;
}

struct RenderOutput {
  std::vector<CsiStream> streams;  // aligned with scene.links
  GroundTruth truth;
};

inline RenderOutput render_csi(const Scene& scene, const MotionTrace& motion, const RenderOptions& opts = {}) {
  scene.validate();
  if (motion.empty()) throw InputError("motion trace is empty");
  RenderOutput out;
  out.truth.camera = motion.camera;
  for (std::size_t i = 0; i < motion.size(); ++i) {
    const auto& s = motion.samples[i];
    out.truth.t.push_back(s.t);
    out.truth.user_pos.push_back(s.user_pos);
    out.truth.orientation_rad.push_back(s.orientation_rad);
    out.truth.keypoints.push_back(motion.keypoints(i));
  }
  for (const auto& link : scene.links) {
    CsiStream stream;
    stream.config = scene.radio;
    LinkTruth lt;
    lt.link_id = link.id;
    std::vector<PathTruth> static_paths;
    if (opts.direct) static_paths.push_back(direct_path(link));
    if (opts.statics) {
      for (std::size_t si = 0; si < scene.statics.size(); ++si) {
        auto p = bounce_path(link, scene.statics[si].pos, scene.statics[si].reflectivity);
        p.kind = PathKind::static_object;
        p.index = static_cast<int>(si);
        static_paths.push_back(p);
      }
    }
    const Eigen::MatrixXcd static_h = render_paths(static_paths, scene.radio);
    for (const auto& s : motion.samples) {
      std::vector<PathTruth> body_paths;
      if (opts.body) {
        for (int j = 0; j < kNumJoints; ++j) {
          auto p = bounce_path(link, s.joints[j], motion.joint_reflectivity[j]);
          p.kind = PathKind::body;
          p.index = j;
          body_paths.push_back(p);
        }
      }
      CsiFrame f;
      f.link_id = link.id;
      f.timestamp_s = s.t;
      f.h = static_h + render_paths(body_paths, scene.radio);
      stream.frames.push_back(std::move(f));
      std::vector<PathTruth> all = static_paths;
      all.insert(all.end(), body_paths.begin(), body_paths.end());
      lt.paths.push_back(std::move(all));
    }
    out.streams.push_back(std::move(stream));
    out.truth.links.push_back(std::move(lt));
  }
  return out;
}

// Per-link worker seeds are split as seed XOR link index.
inline std::uint64_t link_seed(std::uint64_t seed, std::size_t link_index) { return seed ^ link_index; }

// Multiplies by a CFO rotation and adds circular Gaussian noise at `snr_db`
// relative to each frame's mean power. snr_db = +inf adds no noise.
inline CsiStream inject_impairments(const CsiStream& stream, double cfo_hz, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw ConfigError("snr_db must be finite or +inf");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CsiStream out = stream;
  const bool noisy = std::isfinite(snr_db);
  for (auto& f : out.frames) {
    if (cfo_hz != 0.0) f.h *= std::polar(1.0, 2.0 * kPi * cfo_hz * f.timestamp_s);
    if (noisy) {
      const double power = f.h.cwiseAbs2().mean();
      const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0) / 2.0);
      for (Eigen::Index k = 0; k < f.h.rows(); ++k)
        for (Eigen::Index a = 0; a < f.h.cols(); ++a) f.h(k, a) += cplx(sigma * gauss(rng), sigma * gauss(rng));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"case_study_5rx", "single_link_walk", "torso_arm_ambiguity"};
  return names;
}

struct Preset {
  Scene scene;
  MotionTrace motion;
};

namespace detail {

inline Scene five_receiver_room(std::uint64_t seed) {
  Scene sc;
  sc.seed = seed;
  const Vec2 tx(4.0, 0.4);
  const std::array<Vec2, 5> rx = {Vec2(0.4, 3.0), Vec2(1.6, 5.6), Vec2(4.0, 5.6), Vec2(6.4, 5.6), Vec2(7.6, 3.0)};
  for (int i = 0; i < 5; ++i) sc.links.push_back(Link{"rx" + std::to_string(i + 1), tx, rx[i]});
  sc.statics = {
      Scatterer{Vec2(0.3, 0.3), cplx(0.5, 0.0), std::nullopt},
      Scatterer{Vec2(7.7, 5.7), cplx(0.0, 0.5), std::nullopt},
      Scatterer{Vec2(2.2, 5.9), cplx(-0.4, 0.0), std::nullopt},
      Scatterer{Vec2(6.6, 0.2), cplx(0.3, -0.3), std::nullopt},
  };
  return sc;
}

struct BoxingStyle {
  double duration_s = 3.0;
  double tuck_min = 0.0;
  double tuck_max = 0.0;
  double extension_scale = 1.0;
};

inline MotionTrace boxing_trace(const RadioConfig& radio, std::mt19937_64& rng, const BoxingStyle& style) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const Vec2 center(uni(2.6, 5.4), uni(2.0, 4.0));
  const double phi = uni(kPi / 6.0, 5.0 * kPi / 6.0);
  const double punch_hz = uni(0.7, 1.4);
  const double punch_phase = uni(0.0, 2.0 * kPi);
  const double sway_amp = uni(0.05, 0.12);
  const double sway_hz = uni(0.5, 1.0);
  const double sway_phase = uni(0.0, 2.0 * kPi);
  const double spread_r = uni(0.0, 0.5);
  const double spread_l = uni(0.0, 0.5);
  const double tuck = uni(style.tuck_min, style.tuck_max);
  const double bend = uni(0.0, 1.0);

  MotionTrace tr;
  const int n = static_cast<int>(std::lround(style.duration_s * radio.sample_rate_hz));
  for (int i = 0; i < n; ++i) {
    const double t = i / radio.sample_rate_hz;
    const double w = 2.0 * kPi * punch_hz * t + punch_phase;
    PoseParams p;
    p.right_extension = style.extension_scale * std::pow(std::max(0.0, std::sin(w)), 2);
    p.left_extension = style.extension_scale * std::pow(std::max(0.0, -std::sin(w)), 2);
    p.right_spread = spread_r;
    p.left_spread = spread_l;
    p.tuck = tuck;
    p.knee_bend = bend * (0.5 + 0.5 * std::sin(2.0 * kPi * sway_hz * t));
    const Vec2 pos = center + sway_amp * std::sin(2.0 * kPi * sway_hz * t + sway_phase) * body_forward(phi);
    tr.samples.push_back(make_motion_sample(t, pos, phi, make_body_pose(p)));
  }
  return tr;
}

}  // namespace detail

inline Preset preset_scenario(const std::string& name, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
  Preset p;
  if (name == "case_study_5rx") {
    p.scene = detail::five_receiver_room(seed);
    p.motion = detail::boxing_trace(p.scene.radio, rng, {});
  } else if (name == "torso_arm_ambiguity") {
    p.scene = detail::five_receiver_room(seed);
    detail::BoxingStyle style;
    style.tuck_min = 0.6;
    style.tuck_max = 1.0;
    style.extension_scale = 0.35;
    p.motion = detail::boxing_trace(p.scene.radio, rng, style);
  } else if (name == "single_link_walk") {
    std::uniform_real_distribution<double> off(-0.3, 0.3);
    p.scene.seed = seed;
    p.scene.links.push_back(Link{"rx1", Vec2(0.0, 0.0), Vec2(4.0, 0.0)});
    p.scene.statics.push_back(Scatterer{Vec2(2.0, -2.5), cplx(0.4, 0.0), std::nullopt});
    const double x = 2.0 + off(rng);
    const Vec2 start(x, 0.3);
    const Vec2 end(x, 1.5);
    const double speed = 0.4;
    const double duration = (end - start).norm() / speed;
    const int n = static_cast<int>(std::lround(duration * p.scene.radio.sample_rate_hz));
    const BodyPose pose = make_body_pose({});
    for (int i = 0; i < n; ++i) {
      const double t = i / p.scene.radio.sample_rate_hz;
      const Vec2 pos = start + (end - start) * (t / duration);
      p.motion.samples.push_back(make_motion_sample(t, pos, kPi / 2.0, pose));
    }
  } else {
    throw InputError("unknown preset '" + name + "'");
  }
  return p;
}

}  // namespace wiperc
