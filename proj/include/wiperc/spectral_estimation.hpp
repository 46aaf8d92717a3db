#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wiperc/csi_core.hpp"

namespace wiperc {

enum class PoleDomain { generic, tof, aoa };

struct PoleSet {
  std::vector<cplx> poles;
  // Least-squares amplitudes. With several snapshots the magnitude is the
  // RMS over snapshots and the phase is taken from the first one.
  std::vector<cplx> amplitudes;
  std::vector<double> powers;  // mean |a|^2 over snapshots
  std::vector<double> singular_values;
  double residual_norm = 0.0;
  PoleDomain domain = PoleDomain::generic;

  std::size_t order() const { return poles.size(); }
};

inline constexpr double kDefaultOrderThreshold = 0.05;

// Number of singular values at or above `threshold` relative to the largest,
// capped at len - 1. Expects descending, nonnegative input.
inline int select_order(std::span<const double> singular_values, double threshold = kDefaultOrderThreshold) {
  if (singular_values.empty() || !(singular_values[0] > 0.0)) return 0;
  const double s0 = singular_values[0];
  int p = 0;
  for (double s : singular_values)
    if (s / s0 >= threshold) ++p;
  return std::min(p, static_cast<int>(singular_values.size()) - 1);
}

namespace detail {

// Matrix pencil over one or more snapshots that share the same poles.
// Each snapshot contributes N-L rows of the stacked Hankel matrix
// Y[i][j] = x[i+j], j = 0..L.
inline PoleSet matrix_pencil_stacked(const std::vector<Eigen::VectorXcd>& snapshots, int pencil, double threshold) {
  const int n = static_cast<int>(snapshots.front().size());
  const int rows_per = n - pencil;
  const int n_snap = static_cast<int>(snapshots.size());
  Eigen::MatrixXcd y(rows_per * n_snap, pencil + 1);
  for (int s = 0; s < n_snap; ++s)
    for (int i = 0; i < rows_per; ++i)
      for (int j = 0; j <= pencil; ++j) y(s * rows_per + i, j) = snapshots[s](i + j);

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(y, Eigen::ComputeThinV);
  PoleSet out;
  const auto& sv = svd.singularValues();
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  const int p = select_order(out.singular_values, threshold);
  if (p == 0) {
    double r = 0.0;
    for (const auto& x : snapshots) r += x.squaredNorm();
    out.residual_norm = std::sqrt(r);
    return out;
  }

  // Rank-p truncation: the row space of Y is spanned by the first p right
  // singular vectors; shifting that basis by one sample gives the pencil.
  const Eigen::MatrixXcd vp = svd.matrixV().leftCols(p);
  const Eigen::MatrixXcd v0 = vp.topRows(pencil);
  const Eigen::MatrixXcd v1 = vp.bottomRows(pencil);
  Eigen::JacobiSVD<Eigen::MatrixXcd> v0_svd(v0);
  const auto& s0 = v0_svd.singularValues();
  if (s0(s0.size() - 1) <= 1e-10 * s0(0))
    throw OrderSelectionError("pencil is rank deficient at order " + std::to_string(p));
  const Eigen::MatrixXcd pencil_matrix = v0.completeOrthogonalDecomposition().solve(v1);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(pencil_matrix);
  // V spans conj(Vandermonde), so the eigenvalues are conjugated poles.
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) out.poles.push_back(std::conj(eig.eigenvalues()(i)));

  Eigen::MatrixXcd vander(n, p);
  for (int i = 0; i < p; ++i) {
    cplx zn(1.0, 0.0);
    for (int k = 0; k < n; ++k) {
      vander(k, i) = zn;
      zn *= out.poles[i];
    }
  }
  const auto qr = vander.colPivHouseholderQr();
  out.amplitudes.assign(p, cplx(0.0, 0.0));
  out.powers.assign(p, 0.0);
  double residual = 0.0;
  for (int s = 0; s < n_snap; ++s) {
    const Eigen::VectorXcd a = qr.solve(snapshots[s]);
    residual += (vander * a - snapshots[s]).squaredNorm();
    for (int i = 0; i < p; ++i) {
      out.powers[i] += std::norm(a(i)) / n_snap;
      if (s == 0) out.amplitudes[i] = a(i);
    }
  }
  for (int i = 0; i < p; ++i) {
    const double mag = std::abs(out.amplitudes[i]);
    const double rms = std::sqrt(out.powers[i]);
    out.amplitudes[i] = mag > 0.0 ? out.amplitudes[i] / mag * rms : cplx(rms, 0.0);
  }
  out.residual_norm = std::sqrt(residual);
  return out;
}

}  // namespace detail

inline int default_pencil(int n) { return n / 2; }

// Fits x[n] = sum_i a_i z_i^n. Pencil parameter L must satisfy 2 <= L <= N-2.
inline PoleSet matrix_pencil(const Eigen::VectorXcd& x, int pencil, double threshold = kDefaultOrderThreshold) {
  const int n = static_cast<int>(x.size());
  if (n < 4) throw InputError("matrix pencil needs at least 4 samples");
  if (pencil < 2 || pencil > n - 2) throw InputError("pencil parameter out of range [2, N-2]");
  if (!x.allFinite()) throw InputError("matrix pencil input is not finite");
  return detail::matrix_pencil_stacked({x}, pencil, threshold);
}

inline PoleSet matrix_pencil(const Eigen::VectorXcd& x) {
  return matrix_pencil(x, default_pencil(static_cast<int>(x.size())));
}

struct TofEstimate {
  double tof_s = 0.0;
  double power = 0.0;
};

struct AoaEstimate {
  double aoa_rad = 0.0;
  double power = 0.0;
  bool clamped = false;
};

struct EstimatorOptions {
  double order_threshold = kDefaultOrderThreshold;
  int pencil = 0;  // 0 selects the default for the dimension
};

// Delay of each pole, mapped into [0, 1/df). Values a hair below zero from
// round-off are reported as zero rather than wrapped to the far end.
inline double pole_to_tof(cplx z, double subcarrier_spacing_hz) {
  const double period = 1.0 / subcarrier_spacing_hz;
  double tau = -std::arg(z) / (2.0 * kPi * subcarrier_spacing_hz);
  if (tau < 0.0) tau = tau > -1e-6 * period ? 0.0 : tau + period;
  if (tau >= period) tau -= period;
  return tau;
}

// Delays from the subcarrier profile; each antenna is one pencil snapshot.
inline std::vector<TofEstimate> estimate_tof(const CsiFrame& frame, const RadioConfig& radio,
                                             const EstimatorOptions& opt = {}) {
  const int n_sc = frame.n_subcarriers();
  if (n_sc < 8) throw InputError("ToF estimation needs at least 8 subcarriers");
  std::vector<Eigen::VectorXcd> snaps;
  for (int a = 0; a < frame.n_antennas(); ++a) snaps.emplace_back(frame.h.col(a));
  const int pencil = opt.pencil > 0 ? opt.pencil : default_pencil(n_sc);
  if (pencil < 2 || pencil > n_sc - 2) throw InputError("pencil parameter out of range [2, N-2]");
  PoleSet ps = detail::matrix_pencil_stacked(snaps, pencil, opt.order_threshold);
  std::vector<TofEstimate> out;
  for (std::size_t i = 0; i < ps.order(); ++i)
    out.push_back({pole_to_tof(ps.poles[i], radio.subcarrier_spacing_hz), ps.powers[i]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.power > b.power; });
  return out;
}

inline AoaEstimate pole_to_aoa(cplx z, const RadioConfig& radio) {
  AoaEstimate e;
  double s = std::arg(z) * radio.carrier_wavelength_m / (2.0 * kPi * radio.antenna_spacing_m);
  if (s > 1.0 || s < -1.0) {
    e.clamped = true;
    s = std::clamp(s, -1.0, 1.0);
  }
  e.aoa_rad = std::asin(s);
  return e;
}

// Angles from the antenna dimension. Every subcarrier is one snapshot of the
// same spatial poles, which pools them in the stacked pencil.
inline std::vector<AoaEstimate> estimate_aoa(const CsiFrame& frame, const RadioConfig& radio,
                                             const EstimatorOptions& opt = {}) {
  const int n_ant = frame.n_antennas();
  if (n_ant < 2) throw InputError("AoA estimation needs at least 2 antennas");
  const int pencil = opt.pencil > 0 ? opt.pencil : std::max(1, n_ant / 2);
  if (pencil < 1 || pencil > n_ant - 1) throw InputError("pencil parameter out of range for antenna count");
  std::vector<Eigen::VectorXcd> snaps;
  for (int k = 0; k < frame.n_subcarriers(); ++k) snaps.emplace_back(frame.h.row(k).transpose());
  PoleSet ps = detail::matrix_pencil_stacked(snaps, pencil, opt.order_threshold);
  std::vector<AoaEstimate> out;
  for (std::size_t i = 0; i < ps.order(); ++i) {
    auto e = pole_to_aoa(ps.poles[i], radio);
    e.power = ps.powers[i];
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.power > b.power; });
  return out;
}

struct LinkObservation {
  std::string link_id;
  std::vector<double> aoa_rad;
  std::vector<double> aoa_powers;
  std::vector<double> tof_s;
  std::vector<double> tof_powers;
  double timestamp_s = 0.0;
};

// `aoa_frame` should be phase-sanitized; `tof_frame` is the calibrated
// (absolute-delay) dynamic component. Either may be the same frame.
inline LinkObservation observe_link(const CsiFrame& aoa_frame, const CsiFrame& tof_frame, const RadioConfig& radio,
                                    const EstimatorOptions& opt = {}) {
  LinkObservation obs;
  obs.link_id = tof_frame.link_id;
  obs.timestamp_s = tof_frame.timestamp_s;
  for (const auto& e : estimate_aoa(aoa_frame, radio, opt)) {
    obs.aoa_rad.push_back(e.aoa_rad);
    obs.aoa_powers.push_back(e.power);
  }
  for (const auto& e : estimate_tof(tof_frame, radio, opt)) {
    obs.tof_s.push_back(e.tof_s);
    obs.tof_powers.push_back(e.power);
  }
  return obs;
}

}  // namespace wiperc
