#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "wiperc/csi_core.hpp"
#include "wiperc/spectral_estimation.hpp"

namespace wiperc {

struct PositionEstimate {
  Vec2 pos{0.0, 0.0};
  double residual = 0.0;  // sqrt of the weighted sum of squared residuals
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  int n_constraints = 0;
  int iterations = 0;
  bool converged = false;
};

struct LocateOptions {
  double grid_step_m = 0.25;
  double grid_margin_m = 0.5;
  int max_iterations = 100;
  double step_tolerance_m = 1e-6;
  bool use_aoa = true;
  bool use_tof = true;
};

namespace detail {

struct Constraint {
  enum Kind { ellipse, bearing } kind;
  Vec2 tx, rx, axis;
  double value;  // path length (m) or sin(theta)
  double weight;
};

inline void residual_and_gradient(const Constraint& c, const Vec2& u, double& r, Vec2& g) {
  const Vec2 to_rx = u - c.rx;
  const double d_rx = to_rx.norm();
  const Vec2 unit_rx = d_rx > 1e-12 ? Vec2(to_rx / d_rx) : Vec2(0.0, 0.0);
  if (c.kind == Constraint::ellipse) {
    const Vec2 to_tx = u - c.tx;
    const double d_tx = to_tx.norm();
    const Vec2 unit_tx = d_tx > 1e-12 ? Vec2(to_tx / d_tx) : Vec2(0.0, 0.0);
    r = d_tx + d_rx - c.value;
    g = unit_tx + unit_rx;
  } else {
    // Distance-scaled bearing residual; sin(theta) is symmetric about the
    // array axis, matching what a linear array can observe.
    r = to_rx.dot(c.axis) - d_rx * c.value;
    g = c.axis - c.value * unit_rx;
  }
}

inline double cost(const std::vector<Constraint>& cs, const Vec2& u) {
  double s = 0.0;
  for (const auto& c : cs) {
    double r;
    Vec2 g;
    residual_and_gradient(c, u, r, g);
    s += c.weight * r * r;
  }
  return s;
}

inline void normalize_weights(std::vector<Constraint>& cs, Constraint::Kind kind) {
  double total = 0.0;
  int n = 0;
  for (const auto& c : cs)
    if (c.kind == kind) {
      total += c.weight;
      ++n;
    }
  for (auto& c : cs)
    if (c.kind == kind) c.weight = total > 0.0 ? c.weight / total : 1.0 / n;
}

}  // namespace detail

// Power-weighted least squares over one ellipse (ToF) and one bearing (AoA)
// constraint per link, from the strongest pole of each.
inline PositionEstimate locate_user(const std::vector<LinkObservation>& obs, const std::vector<Link>& links,
                                    std::optional<Vec2> init = std::nullopt, const LocateOptions& opt = {}) {
  std::vector<detail::Constraint> cs;
  for (const auto& o : obs) {
    auto it = std::find_if(links.begin(), links.end(), [&](const Link& l) { return l.id == o.link_id; });
    if (it == links.end()) throw InputError("observation for unknown link " + o.link_id);
    if (opt.use_tof && !o.tof_s.empty())
      cs.push_back({detail::Constraint::ellipse, it->tx_pos, it->rx_pos, it->array_axis(), kSpeedOfLight * o.tof_s[0],
                    o.tof_powers.empty() ? 1.0 : o.tof_powers[0]});
    if (opt.use_aoa && !o.aoa_rad.empty())
      cs.push_back({detail::Constraint::bearing, it->tx_pos, it->rx_pos, it->array_axis(), std::sin(o.aoa_rad[0]),
                    o.aoa_powers.empty() ? 1.0 : o.aoa_powers[0]});
  }
  if (cs.size() < 2) throw UnderdeterminedError("need at least 2 constraints, have " + std::to_string(cs.size()));
  detail::normalize_weights(cs, detail::Constraint::ellipse);
  detail::normalize_weights(cs, detail::Constraint::bearing);

  Vec2 u;
  if (init) {
    u = *init;
  } else {
    Vec2 lo(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
    Vec2 hi = -lo;
    for (const auto& l : links) {
      lo = lo.cwiseMin(l.tx_pos).cwiseMin(l.rx_pos);
      hi = hi.cwiseMax(l.tx_pos).cwiseMax(l.rx_pos);
    }
    lo.array() -= opt.grid_margin_m;
    hi.array() += opt.grid_margin_m;
    double best = std::numeric_limits<double>::max();
    for (double x = lo.x(); x <= hi.x() + 1e-9; x += opt.grid_step_m)
      for (double y = lo.y(); y <= hi.y() + 1e-9; y += opt.grid_step_m) {
        const double c = detail::cost(cs, Vec2(x, y));
        if (c < best) {
          best = c;
          u = Vec2(x, y);
        }
      }
  }

  PositionEstimate est;
  est.n_constraints = static_cast<int>(cs.size());
  double current = detail::cost(cs, u);
  double damping = 1e-3;
  Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
  for (int it = 0; it < opt.max_iterations; ++it) {
    est.iterations = it + 1;
    normal.setZero();
    Vec2 grad = Vec2::Zero();
    for (const auto& c : cs) {
      double r;
      Vec2 g;
      detail::residual_and_gradient(c, u, r, g);
      normal += c.weight * g * g.transpose();
      grad += c.weight * r * g;
    }
    if (current < 1e-28) {
      est.converged = true;
      break;
    }
    const Vec2 step = -(normal + damping * Eigen::Matrix2d::Identity()).ldlt().solve(grad);
    const double trial = detail::cost(cs, u + step);
    if (trial < current) {
      u += step;
      current = trial;
      damping = std::max(damping * 0.3, 1e-12);
      if (step.norm() < opt.step_tolerance_m) {
        est.converged = true;
        break;
      }
    } else {
      damping *= 10.0;
      if (step.norm() < opt.step_tolerance_m || damping > 1e12) {
        est.converged = true;
        break;
      }
    }
  }

  est.pos = u;
  est.residual = std::sqrt(std::max(current, 0.0));
  const int dof = est.n_constraints - 2;
  const double scale = dof > 0 ? current / dof : current;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(normal);
  Eigen::Vector2d inv = Eigen::Vector2d::Zero();
  for (int i = 0; i < 2; ++i)
    if (es.eigenvalues()(i) > 1e-12) inv(i) = 1.0 / es.eigenvalues()(i);
  est.covariance = scale * es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  est.covariance = 0.5 * (est.covariance + est.covariance.transpose());
  return est;
}

// ---------------------------------------------------------------------------
// Fresnel zones

struct FresnelIndex {
  double n = 0.0;
  std::string link_id;
};

// Continuous zone index: excess path length in half wavelengths.
inline FresnelIndex fresnel_index(const Vec2& p, const Link& link, double wavelength) {
  if (!(wavelength > 0.0)) throw ConfigError("wavelength must be > 0");
  const double excess = (p - link.tx_pos).norm() + (p - link.rx_pos).norm() - link.length();
  return {std::max(0.0, excess) / (wavelength / 2.0), link.id};
}

// Unit normal of the confocal ellipse through p, pointing outward.
inline Vec2 boundary_normal(const Vec2& p, const Link& link) {
  const Vec2 a = p - link.tx_pos;
  const Vec2 b = p - link.rx_pos;
  if (a.norm() < 1e-12 || b.norm() < 1e-12) throw GeometryError("boundary normal undefined at a link focus");
  const Vec2 g = a.normalized() + b.normalized();
  if (g.norm() < 1e-12) throw GeometryError("boundary normal undefined on the TX-RX segment");
  return g.normalized();
}

// Number of integer zone levels crossed along a straight segment. The path
// sum is convex along a line, so the index has at most two monotone pieces.
inline int crossing_count(const Vec2& seg_start, const Vec2& seg_end, const Link& link, double wavelength) {
  auto index_at = [&](double s) { return fresnel_index(seg_start + s * (seg_end - seg_start), link, wavelength).n; };
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (index_at(m1) < index_at(m2))
      hi = m2;
    else
      lo = m1;
  }
  const double s_min = 0.5 * (lo + hi);
  const double n0 = index_at(0.0);
  const double nm = index_at(s_min);
  const double n1 = index_at(1.0);
  auto levels = [](double a, double b) {
    return static_cast<int>(std::abs(std::floor(b) - std::floor(a)));
  };
  return levels(n0, nm) + levels(nm, n1);
}

// ---------------------------------------------------------------------------
// Orientation (motion axis)

struct OrientationEstimate {
  double phi = 0.0;  // motion axis in [0, pi)
  double objective = 0.0;
  bool low_confidence = false;
};

inline double normal_angle(const Vec2& user_pos, const Link& link) {
  Vec2 n;
  try {
    n = boundary_normal(user_pos, link);
  } catch (const GeometryError&) {
    // On the segment itself the ellipse degenerates; use the link's perpendicular.
    const Vec2 d = (link.rx_pos - link.tx_pos).normalized();
    n = Vec2(-d.y(), d.x());
  }
  return std::atan2(n.y(), n.x());
}

inline double wrap_axis(double phi) {
  double r = std::fmod(phi, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

// Smallest angle between two axes (mod pi).
inline double axis_distance(double a, double b) {
  const double d = wrap_axis(a - b);
  return std::min(d, kPi - d);
}

struct OrientationSample {
  std::map<std::string, double> fluct;
  Vec2 user_pos{0.0, 0.0};
};

// Sum of per-window objectives. A single window with two links has a mirror
// solution about the link normals; windows taken at different positions along
// a walk see rotated normals, which removes it.
inline OrientationEstimate estimate_orientation(const std::vector<OrientationSample>& samples,
                                                const std::vector<Link>& links) {
  struct Window {
    std::vector<double> f, beta;
  };
  std::vector<Window> windows;
  for (const auto& smp : samples) {
    Window w;
    for (const auto& l : links) {
      auto it = smp.fluct.find(l.id);
      if (it == smp.fluct.end()) continue;
      if (!(it->second >= 0.0)) throw InputError("fluctuation values must be nonnegative");
      w.f.push_back(it->second);
      w.beta.push_back(normal_angle(smp.user_pos, l));
    }
    if (w.f.size() < 2) throw InputError("orientation needs at least 2 links");
    const double total = std::accumulate(w.f.begin(), w.f.end(), 0.0);
    if (!(total > 0.0)) continue;
    for (auto& v : w.f) v /= total;
    windows.push_back(std::move(w));
  }
  if (samples.empty()) throw InputError("orientation needs at least one window");
  if (windows.empty()) throw NoMotionError("all link fluctuations are zero");

  auto objective = [&](double phi) {
    double s = 0.0;
    for (const auto& w : windows) {
      const std::size_t n = w.f.size();
      std::vector<double> m(n);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = std::abs(std::cos(phi - w.beta[i]));
        sum += m[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double mi = sum > 1e-15 ? m[i] / sum : 1.0 / n;
        s += (w.f[i] - mi) * (w.f[i] - mi);
      }
    }
    return s;
  };

  constexpr int kGrid = 180;
  std::vector<double> grid(kGrid);
  int best = 0;
  for (int i = 0; i < kGrid; ++i) {
    grid[i] = objective(i * kPi / kGrid);
    if (grid[i] < grid[best]) best = i;
  }
  const double gmax = *std::max_element(grid.begin(), grid.end());

  // Golden-section refinement inside the neighbouring grid cells.
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = (best - 1) * kPi / kGrid;
  double b = (best + 1) * kPi / kGrid;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  for (int i = 0; i < 60; ++i) {
    if (objective(c) < objective(d))
      b = d;
    else
      a = c;
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  OrientationEstimate est;
  est.phi = wrap_axis(0.5 * (a + b));
  est.objective = objective(est.phi);
  if (est.objective > grid[best]) {
    est.phi = best * kPi / kGrid;
    est.objective = grid[best];
  }

  // Low confidence: flat objective, or a second local minimum at least 10
  // degrees away that is nearly as good as the best.
  const double range = gmax - est.objective;
  if (range < 1e-12) {
    est.low_confidence = true;
  } else {
    for (int i = 0; i < kGrid; ++i) {
      const double prev = grid[(i + kGrid - 1) % kGrid];
      const double next = grid[(i + 1) % kGrid];
      if (grid[i] <= prev && grid[i] <= next && axis_distance(i * kPi / kGrid, est.phi) >= kPi / 18.0 &&
          grid[i] - est.objective < 0.05 * range) {
        est.low_confidence = true;
        break;
      }
    }
  }
  return est;
}

inline OrientationEstimate estimate_orientation(const std::map<std::string, double>& fluct, const Vec2& user_pos,
                                                const std::vector<Link>& links) {
  return estimate_orientation(std::vector<OrientationSample>{{fluct, user_pos}}, links);
}

// Path-length change rate seen by a link, normalised by how fast the path
// sum can change at the user position. `dynamic` is the calibrated,
// static-removed stream; the result is proportional to |cos| between the
// motion axis and the link's boundary normal.
inline double motion_fluctuation(const CsiStream& dynamic, std::size_t center, double window_s, const Link& link,
                                 const Vec2& user_pos) {
  const int n = static_cast<int>(dynamic.frames.size());
  if (n < 2) throw InputError("fluctuation needs at least 2 frames");
  const int half = std::max(1, window_samples(window_s, dynamic.config.sample_rate_hz) / 2);
  const int lo = std::max(0, static_cast<int>(center) - half);
  const int hi = std::min(n - 1, static_cast<int>(center) + half);
  const int n_sc = dynamic.config.n_subcarriers;
  int strongest = 0;
  double best = -1.0;
  for (int k = 0; k < n_sc; ++k) {
    double p = 0.0;
    for (int i = lo; i <= hi; ++i) p += dynamic.frames[i].h.row(k).squaredNorm();
    if (p > best) {
      best = p;
      strongest = k;
    }
  }
  double rate = 0.0;
  int count = 0;
  for (int i = lo; i < hi; ++i) {
    // Eigen's dot conjugates the left operand: sum conj(h_i) h_{i+1}.
    const cplx corr = dynamic.frames[i].h.row(strongest).dot(dynamic.frames[i + 1].h.row(strongest));
    if (std::abs(corr) == 0.0) continue;
    rate += std::abs(std::arg(corr));
    ++count;
  }
  if (count == 0) return 0.0;
  const Vec2 a = user_pos - link.tx_pos;
  const Vec2 b = user_pos - link.rx_pos;
  const double grad = (a.normalized() + b.normalized()).norm();
  return rate / count / std::max(grad, 1e-3);
}

// Variance of |h| on the strongest subcarrier over the window.
inline double amplitude_fluctuation(const CsiStream& stream, std::size_t center, double window_s) {
  const int n = static_cast<int>(stream.frames.size());
  const int half = std::max(1, window_samples(window_s, stream.config.sample_rate_hz) / 2);
  const int lo = std::max(0, static_cast<int>(center) - half);
  const int hi = std::min(n - 1, static_cast<int>(center) + half);
  int strongest = 0;
  double best = -1.0;
  for (int k = 0; k < stream.config.n_subcarriers; ++k) {
    double p = 0.0;
    for (int i = lo; i <= hi; ++i) p += stream.frames[i].h.row(k).cwiseAbs().mean();
    if (p > best) {
      best = p;
      strongest = k;
    }
  }
  double mean = 0.0;
  double sq = 0.0;
  const int m = hi - lo + 1;
  for (int i = lo; i <= hi; ++i) {
    const double v = stream.frames[i].h.row(strongest).cwiseAbs().mean();
    mean += v;
    sq += v * v;
  }
  mean /= m;
  return std::max(0.0, sq / m - mean * mean);
}

}  // namespace wiperc
