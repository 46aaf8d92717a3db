#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "wiperc/csi_core.hpp"
#include "wiperc/error.hpp"
#include "wiperc/geometry.hpp"
#include "wiperc/io_util.hpp"

namespace wiperc {

enum class WeightKind { distance, orientation, uniform };

struct WeightVector {
  std::map<std::string, double> weights;
  WeightKind kind = WeightKind::uniform;

  double at(const std::string& id) const {
    auto it = weights.find(id);
    if (it == weights.end()) throw InputError("no weight for link " + id);
    return it->second;
  }
};

inline constexpr double kMinLinkDistance = 0.1;
inline constexpr double kOrientationFloor = 0.05;

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + s * ab)).norm();
}

namespace detail {

inline WeightVector normalized(std::map<std::string, double> raw, WeightKind kind) {
  double total = 0.0;
  for (const auto& [id, w] : raw) total += w;
  if (!(total > 0.0)) throw InputError("weights must have a positive sum");
  for (auto& [id, w] : raw) w /= total;
  return {std::move(raw), kind};
}

}  // namespace detail

// Inverse point-to-segment distance, with distances clamped at 0.1 m.
inline WeightVector distance_weights(const Vec2& user_pos, const std::vector<Link>& links) {
  if (links.empty()) throw InputError("distance weights need at least one link");
  std::map<std::string, double> raw;
  for (const auto& l : links)
    raw[l.id] = 1.0 / std::max(kMinLinkDistance, point_segment_distance(user_pos, l.tx_pos, l.rx_pos));
  return detail::normalized(std::move(raw), WeightKind::distance);
}

// Links whose boundary normal lines up with the motion axis see the most
// path-length change and get the most weight.
inline WeightVector orientation_weights(double phi, const Vec2& user_pos, const std::vector<Link>& links,
                                        double floor = kOrientationFloor) {
  if (links.empty()) throw InputError("orientation weights need at least one link");
  std::map<std::string, double> raw;
  for (const auto& l : links) raw[l.id] = floor + std::abs(std::cos(phi - normal_angle(user_pos, l)));
  return detail::normalized(std::move(raw), WeightKind::orientation);
}

inline WeightVector uniform_weights(const std::vector<Link>& links) {
  if (links.empty()) throw InputError("uniform weights need at least one link");
  std::map<std::string, double> raw;
  for (const auto& l : links) raw[l.id] = 1.0;
  return detail::normalized(std::move(raw), WeightKind::uniform);
}

// Weighted sum of per-link amplitude and phase profiles.
inline AmpPhase fuse_links(const std::map<std::string, AmpPhase>& per_link, const WeightVector& w) {
  if (per_link.size() != w.weights.size()) throw InputError("weights must cover exactly the provided links");
  if (per_link.empty()) throw InputError("no links to fuse");
  const std::size_t k = per_link.begin()->second.amplitude.size();
  AmpPhase out{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
  for (const auto& [id, ap] : per_link) {
    if (ap.amplitude.size() != k || ap.phase.size() != k) throw ShapeError("links disagree on subcarrier count");
    const double wl = w.at(id);
    for (std::size_t i = 0; i < k; ++i) {
      out.amplitude[i] += wl * ap.amplitude[i];
      out.phase[i] += wl * ap.phase[i];
    }
  }
  return out;
}

// One timestep of fused features: C channels x K subcarriers.
using FeatureStep = Eigen::MatrixXd;

// Builds a timestep from fused pairs, channels ordered amp0, phase0, amp1, ...
inline FeatureStep stack_pairs(const std::vector<AmpPhase>& pairs) {
  if (pairs.empty()) throw InputError("no feature pairs");
  const auto k = static_cast<Eigen::Index>(pairs[0].amplitude.size());
  FeatureStep s(2 * static_cast<Eigen::Index>(pairs.size()), k);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (static_cast<Eigen::Index>(pairs[p].amplitude.size()) != k) throw ShapeError("pair length mismatch");
    for (Eigen::Index i = 0; i < k; ++i) {
      s(2 * p, i) = pairs[p].amplitude[i];
      s(2 * p + 1, i) = pairs[p].phase[i];
    }
  }
  return s;
}

inline constexpr double kStdFloor = 1e-8;

// Window of T timesteps x K subcarriers x C channels, stored channel-major
// (c, t, k) and normalized per channel.
struct InputTensor {
  int t = 0, k = 0, c = 0;
  std::vector<double> data;
  std::vector<double> mean;
  std::vector<double> stddev;

  InputTensor() = default;
  InputTensor(int t_, int k_, int c_) : t(t_), k(k_), c(c_), data(static_cast<std::size_t>(t_) * k_ * c_, 0.0),
                                        mean(c_, 0.0), stddev(c_, 1.0) {}

  std::size_t index(int ch, int ti, int ki) const { return (static_cast<std::size_t>(ch) * t + ti) * k + ki; }
  double& at(int ch, int ti, int ki) { return data[index(ch, ti, ki)]; }
  double at(int ch, int ti, int ki) const { return data[index(ch, ti, ki)]; }
};

inline InputTensor make_window(const std::vector<FeatureStep>& seq, std::size_t start, int t) {
  const int c = static_cast<int>(seq[start].rows());
  const int k = static_cast<int>(seq[start].cols());
  InputTensor x(t, k, c);
  for (int ti = 0; ti < t; ++ti) {
    const auto& step = seq[start + ti];
    if (step.rows() != c || step.cols() != k) throw ShapeError("feature steps disagree on shape");
    for (int ch = 0; ch < c; ++ch)
      for (int ki = 0; ki < k; ++ki) x.at(ch, ti, ki) = step(ch, ki);
  }
  const std::size_t plane = static_cast<std::size_t>(t) * k;
  for (int ch = 0; ch < c; ++ch) {
    double* p = x.data.data() + ch * plane;
    // Mean as an offset from the first value keeps constant channels exact.
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += p[i] - p[0];
    m = p[0] + m / plane;
    double v = 0.0;
    for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
    const double sd = std::max(std::sqrt(v / plane), kStdFloor);
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) / sd;
    x.mean[ch] = m;
    x.stddev[ch] = sd;
  }
  return x;
}

inline std::size_t window_count(std::size_t len, int t, int stride) {
  return (len - static_cast<std::size_t>(t)) / static_cast<std::size_t>(stride) + 1;
}

inline std::vector<InputTensor> build_window(const std::vector<FeatureStep>& seq, int t, int stride) {
  if (t < 1 || stride < 1) throw ConfigError("window length and stride must be >= 1");
  if (seq.size() < static_cast<std::size_t>(t)) throw InputError("sequence shorter than window");
  std::vector<InputTensor> out;
  const std::size_t n = window_count(seq.size(), t, stride);
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) out.push_back(make_window(seq, w * stride, t));
  return out;
}

inline std::vector<FeatureStep> denormalize(const InputTensor& x) {
  std::vector<FeatureStep> out(x.t, FeatureStep(x.c, x.k));
  for (int ch = 0; ch < x.c; ++ch)
    for (int ti = 0; ti < x.t; ++ti)
      for (int ki = 0; ki < x.k; ++ki) out[ti](ch, ki) = x.at(ch, ti, ki) * x.stddev[ch] + x.mean[ch];
  return out;
}

// FTW1 training-set file. Little-endian:
//   "FTW1", u32 T, u32 K, u32 C, u32 J, u32 N
//   N x { C f32 mean, C f32 std, C*T*K f32 data (channel-major), J*2 f32 label (col,row) }
// J is 0 when the windows carry no keypoint labels.
struct WindowSet {
  std::vector<InputTensor> windows;
  std::vector<std::vector<Eigen::Vector2d>> labels;  // empty or one per window
};

inline std::string encode_ftw1(const WindowSet& set) {
  io::ByteWriter w;
  w.put_bytes("FTW1");
  const auto& first = set.windows.empty() ? InputTensor() : set.windows.front();
  const std::uint32_t j = set.labels.empty() ? 0u : static_cast<std::uint32_t>(set.labels.front().size());
  if (!set.labels.empty() && set.labels.size() != set.windows.size())
    throw InputError("label count does not match window count");
  w.put<std::uint32_t>(first.t);
  w.put<std::uint32_t>(first.k);
  w.put<std::uint32_t>(first.c);
  w.put<std::uint32_t>(j);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.windows.size()));
  for (std::size_t i = 0; i < set.windows.size(); ++i) {
    const auto& x = set.windows[i];
    if (x.t != first.t || x.k != first.k || x.c != first.c) throw ShapeError("windows disagree on shape");
    for (double v : x.mean) w.put<float>(static_cast<float>(v));
    for (double v : x.stddev) w.put<float>(static_cast<float>(v));
    for (double v : x.data) w.put<float>(static_cast<float>(v));
    if (j > 0) {
      if (set.labels[i].size() != j) throw ShapeError("label joint count mismatch");
      for (const auto& p : set.labels[i]) {
        w.put<float>(static_cast<float>(p.x()));
        w.put<float>(static_cast<float>(p.y()));
      }
    }
  }
  return w.take();
}

inline WindowSet decode_ftw1(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4) != "FTW1") throw IoError("not an FTW1 file");
  const auto t = static_cast<int>(r.get<std::uint32_t>());
  const auto k = static_cast<int>(r.get<std::uint32_t>());
  const auto c = static_cast<int>(r.get<std::uint32_t>());
  const auto j = r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  const std::size_t per = (2ull * c + static_cast<std::size_t>(t) * k * c + 2ull * j) * sizeof(float);
  if (r.remaining() != per * n) throw IoError("FTW1 payload size does not match header");
  WindowSet set;
  for (std::uint32_t i = 0; i < n; ++i) {
    InputTensor x(t, k, c);
    for (auto& v : x.mean) v = r.get<float>();
    for (auto& v : x.stddev) v = r.get<float>();
    for (auto& v : x.data) v = r.get<float>();
    set.windows.push_back(std::move(x));
    if (j > 0) {
      std::vector<Eigen::Vector2d> lab(j);
      for (auto& p : lab) {
        p.x() = r.get<float>();
        p.y() = r.get<float>();
      }
      set.labels.push_back(std::move(lab));
    }
  }
  return set;
}

}  // namespace wiperc
