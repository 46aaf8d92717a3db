#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

#include "wiperc/csi_core.hpp"
#include "wiperc/image.hpp"

namespace wiperc {

inline constexpr int kNumJoints = 14;

enum Joint : int {
  kHead = 0,
  kNeck,
  kRShoulder,
  kRElbow,
  kRWrist,
  kLShoulder,
  kLElbow,
  kLWrist,
  kRHip,
  kRKnee,
  kRAnkle,
  kLHip,
  kLKnee,
  kLAnkle,
};

using Bone = std::pair<int, int>;

inline const std::vector<Bone>& default_bones() {
  static const std::vector<Bone> bones = {
      {kHead, kNeck},       {kNeck, kRShoulder}, {kRShoulder, kRElbow}, {kRElbow, kRWrist},
      {kNeck, kLShoulder},  {kLShoulder, kLElbow}, {kLElbow, kLWrist},  {kNeck, kRHip},
      {kRHip, kRKnee},      {kRKnee, kRAnkle},   {kNeck, kLHip},        {kLHip, kLKnee},
      {kLKnee, kLAnkle},
  };
  return bones;
}

// Body-frame joint coordinates: x to the body's right, y forward, z up (m).
using BodyPose = std::array<Eigen::Vector3d, kNumJoints>;

// Pose knobs for the synthetic boxer. Arm extension 0 is the guard, 1 a
// fully extended straight punch; `tuck` pulls both arms against the torso.
struct PoseParams {
  double right_extension = 0.0;
  double left_extension = 0.0;
  double right_spread = 0.0;
  double left_spread = 0.0;
  double tuck = 0.0;
  double knee_bend = 0.0;
};

inline BodyPose make_body_pose(const PoseParams& p) {
  using V = Eigen::Vector3d;
  BodyPose j;
  j[kHead] = V(0.0, 0.02, 1.70);
  j[kNeck] = V(0.0, 0.0, 1.50);
  j[kRShoulder] = V(0.19, 0.0, 1.45);
  j[kLShoulder] = V(-0.19, 0.0, 1.45);
  j[kRHip] = V(0.11, 0.0, 0.95);
  j[kLHip] = V(-0.11, 0.0, 0.95);
  const double bend = p.knee_bend;
  j[kRKnee] = V(0.13, 0.06 * bend - 0.05, 0.52 - 0.05 * bend);
  j[kLKnee] = V(-0.13, 0.06 * bend + 0.12, 0.52 - 0.05 * bend);
  j[kRAnkle] = V(0.15, -0.10, 0.05);
  j[kLAnkle] = V(-0.15, 0.15, 0.05);

  auto arm = [&](double side, double ext, double spread, int elbow, int wrist) {
    const V guard_elbow(0.22 * side, 0.12, 1.12);
    const V guard_wrist(0.12 * side, 0.26, 1.42);
    const V punch_elbow(0.14 * side, 0.33, 1.42);
    const V punch_wrist(0.08 * side, 0.62, 1.43);
    const V tuck_elbow(0.21 * side, 0.02, 1.12);
    const V tuck_wrist(0.17 * side, 0.06, 0.92);
    V e = (1.0 - ext) * guard_elbow + ext * punch_elbow;
    V w = (1.0 - ext) * guard_wrist + ext * punch_wrist;
    e = (1.0 - p.tuck) * e + p.tuck * tuck_elbow;
    w = (1.0 - p.tuck) * w + p.tuck * tuck_wrist;
    e.x() += side * 0.25 * spread;
    w.x() += side * 0.45 * spread;
    w.z() += 0.10 * spread;
    j[elbow] = e;
    j[wrist] = w;
  };
  arm(1.0, p.right_extension, p.right_spread, kRElbow, kRWrist);
  arm(-1.0, p.left_extension, p.left_spread, kLElbow, kLWrist);
  return j;
}

// Body yaw phi is the facing direction in the scene plane.
inline Vec2 body_forward(double phi) { return {std::cos(phi), std::sin(phi)}; }
inline Vec2 body_right(double phi) { return {std::sin(phi), -std::cos(phi)}; }

inline std::array<Vec2, kNumJoints> joints_in_scene(const BodyPose& pose, const Vec2& user_pos, double phi) {
  std::array<Vec2, kNumJoints> out;
  const Vec2 f = body_forward(phi);
  const Vec2 r = body_right(phi);
  for (int i = 0; i < kNumJoints; ++i) out[i] = user_pos + pose[i].x() * r + pose[i].y() * f;
  return out;
}

// Ground-truth camera: a person-centred crop from a camera whose image
// x-axis is the scene +x axis, so what the camera sees depends on yaw.
struct CameraModel {
  int rows = 32;
  int cols = 32;
  double px_per_m = 15.0;
  double top_z_m = 1.72;
  double top_row = 2.5;
};

using Keypoints = std::array<Eigen::Vector2d, kNumJoints>;  // (x = col, y = row) in pixels

inline Keypoints project_keypoints(const BodyPose& pose, double phi, const CameraModel& cam = {}) {
  Keypoints kp;
  const Vec2 f = body_forward(phi);
  const Vec2 r = body_right(phi);
  const double cx = (cam.cols - 1) / 2.0;
  for (int i = 0; i < kNumJoints; ++i) {
    const double u = pose[i].x() * r.x() + pose[i].y() * f.x();
    kp[i] = Eigen::Vector2d(cx + cam.px_per_m * u, cam.top_row + cam.px_per_m * (cam.top_z_m - pose[i].z()));
  }
  return kp;
}

struct SkeletonFrame {
  Keypoints keypoints{};
  int rows = 32;
  int cols = 32;
  // heatmaps[j] is a rows*cols row-major map summing to one.
  std::vector<std::vector<double>> heatmaps;
  bool off_frame = false;
};

inline constexpr double kHeatmapSigmaPx = 1.5;

inline std::vector<double> gaussian_heatmap(const Eigen::Vector2d& kp, int rows, int cols,
                                            double sigma = kHeatmapSigmaPx) {
  std::vector<double> hm(static_cast<std::size_t>(rows) * cols);
  double sum = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double dx = c - kp.x();
      const double dy = r - kp.y();
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      hm[static_cast<std::size_t>(r) * cols + c] = v;
      sum += v;
    }
  if (sum <= 0.0) {
    // Keypoint far outside the grid: fall back to the nearest in-bounds pixel.
    const int r = std::clamp(static_cast<int>(std::lround(kp.y())), 0, rows - 1);
    const int c = std::clamp(static_cast<int>(std::lround(kp.x())), 0, cols - 1);
    std::fill(hm.begin(), hm.end(), 0.0);
    hm[static_cast<std::size_t>(r) * cols + c] = 1.0;
    return hm;
  }
  for (auto& v : hm) v /= sum;
  return hm;
}

inline SkeletonFrame make_skeleton_frame(const Keypoints& kp, int rows, int cols) {
  SkeletonFrame f;
  f.keypoints = kp;
  f.rows = rows;
  f.cols = cols;
  f.heatmaps.reserve(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    if (kp[j].x() < 0.0 || kp[j].y() < 0.0 || kp[j].x() > cols - 1 || kp[j].y() > rows - 1) f.off_frame = true;
    f.heatmaps.push_back(gaussian_heatmap(kp[j], rows, cols));
  }
  return f;
}

namespace detail {
inline void plot(GrayImage& img, int r, int c) {
  if (r >= 0 && r < img.rows && c >= 0 && c < img.cols) img.at(r, c) = 1.0;
}

inline void bresenham(GrayImage& img, int c0, int r0, int c1, int r1) {
  const int dc = std::abs(c1 - c0);
  const int dr = -std::abs(r1 - r0);
  const int sc = c0 < c1 ? 1 : -1;
  const int sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  while (true) {
    plot(img, r0, c0);
    if (c0 == c1 && r0 == r1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}
}  // namespace detail

// White-on-black stick figure: 1-px bones and 3x3 joint dots.
inline GrayImage render_skeleton(const Keypoints& kp, int rows, int cols,
                                 const std::vector<Bone>& bones = default_bones()) {
  GrayImage img(rows, cols, 0.0);
  auto rounded = [](double v) { return static_cast<int>(std::lround(v)); };
  for (const auto& [a, b] : bones)
    detail::bresenham(img, rounded(kp[a].x()), rounded(kp[a].y()), rounded(kp[b].x()), rounded(kp[b].y()));
  for (const auto& p : kp) {
    const int r = rounded(p.y());
    const int c = rounded(p.x());
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) detail::plot(img, r + dr, c + dc);
  }
  return img;
}

}  // namespace wiperc
