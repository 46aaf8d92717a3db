#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "wiperc/error.hpp"

namespace wiperc {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;

struct RadioConfig {
  double carrier_wavelength_m = kSpeedOfLight / 5.32e9;
  double subcarrier_spacing_hz = 1.25e6;
  int n_subcarriers = 30;
  int n_rx_antennas = 3;
  double antenna_spacing_m = kSpeedOfLight / 5.32e9 / 2.0;
  double sample_rate_hz = 100.0;
  double noise_floor_db = -90.0;

  double carrier_hz() const { return kSpeedOfLight / carrier_wavelength_m; }
  double subcarrier_hz(int k) const { return carrier_hz() + k * subcarrier_spacing_hz; }

  void validate() const {
    if (!(carrier_wavelength_m > 0.0)) throw ConfigError("carrier wavelength must be > 0");
    if (!(subcarrier_spacing_hz > 0.0)) throw ConfigError("subcarrier spacing must be > 0");
    if (n_subcarriers < 4) throw ConfigError("need at least 4 subcarriers");
    if (n_rx_antennas < 2) throw ConfigError("need at least 2 receive antennas");
    if (!(antenna_spacing_m > 0.0)) throw ConfigError("antenna spacing must be > 0");
    // Half-wavelength spacing is the aliasing limit; allow rounding slack.
    if (antenna_spacing_m > carrier_wavelength_m / 2.0 * (1.0 + 1e-12))
      throw ConfigError("antenna spacing exceeds half a wavelength (spatial aliasing)");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be > 0");
    if (!std::isfinite(noise_floor_db)) throw ConfigError("noise floor must be finite");
  }
};

struct CsiFrame {
  Eigen::MatrixXcd h;  // K x A, subcarrier-major
  double timestamp_s = 0.0;
  std::string link_id;

  int n_subcarriers() const { return static_cast<int>(h.rows()); }
  int n_antennas() const { return static_cast<int>(h.cols()); }
};

struct CsiStream {
  std::vector<CsiFrame> frames;
  RadioConfig config;

  bool empty() const { return frames.empty(); }
  std::size_t size() const { return frames.size(); }

  void validate() const {
    config.validate();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      if (f.n_subcarriers() != config.n_subcarriers || f.n_antennas() != config.n_rx_antennas)
        throw ShapeError("frame " + std::to_string(i) + " does not match radio config dims");
      if (!f.h.allFinite()) throw InputError("frame " + std::to_string(i) + " has non-finite CSI");
      if (i > 0) {
        if (!(f.timestamp_s > frames[i - 1].timestamp_s))
          throw InputError("timestamps must be strictly increasing (frame " + std::to_string(i) + ")");
        if (f.link_id != frames[0].link_id) throw InputError("stream mixes link ids");
      }
    }
  }
};

// A TX/RX pair. The RX array is a uniform linear array whose broadside
// points at the TX, so the direct path arrives at 0 rad. Positive AoA is
// toward array_axis(), the broadside rotated by +90 degrees.
struct Link {
  std::string id;
  Vec2 tx_pos{0.0, 0.0};
  Vec2 rx_pos{1.0, 0.0};

  double length() const { return (tx_pos - rx_pos).norm(); }
  Vec2 broadside() const { return (tx_pos - rx_pos).normalized(); }
  Vec2 array_axis() const {
    const Vec2 b = broadside();
    return {-b.y(), b.x()};
  }
  void validate() const {
    if (!(length() > 0.0)) throw GeometryError("link " + id + ": tx and rx coincide");
  }
};

// Removes the phase error shared by all antennas of a subcarrier
// (CFO, SFO, packet detection delay) by conjugate multiplication against a
// reference antenna.
inline CsiFrame sanitize_phase(const CsiFrame& frame, int ref_antenna = 0) {
  const int n_sc = frame.n_subcarriers();
  const int n_ant = frame.n_antennas();
  if (ref_antenna < 0 || ref_antenna >= n_ant)
    throw InputError("reference antenna index out of range");
  CsiFrame out = frame;
  for (int k = 0; k < n_sc; ++k) {
    const cplx ref = frame.h(k, ref_antenna);
    if (std::abs(ref) == 0.0) throw DegenerateReferenceError(k);
    const cplx ref_conj = std::conj(ref);
    for (int a = 0; a < n_ant; ++a) out.h(k, a) = frame.h(k, a) * ref_conj;
    // exact: |h|^2 has no imaginary part
    out.h(k, ref_antenna) = cplx(std::norm(ref), 0.0);
  }
  return out;
}

inline CsiStream sanitize_phase(const CsiStream& stream, int ref_antenna = 0) {
  CsiStream out;
  out.config = stream.config;
  out.frames.reserve(stream.frames.size());
  for (const auto& f : stream.frames) out.frames.push_back(sanitize_phase(f, ref_antenna));
  return out;
}

// Number of samples in a moving-average window of `window_s` seconds.
inline int window_samples(double window_s, double sample_rate_hz) {
  return static_cast<int>(std::lround(window_s * sample_rate_hz));
}

// Subtracts a centered moving average (clipped at the stream edges) from
// every frame. For an even window of N samples frame i averages
// [i - N/2, i - N/2 + N - 1].
inline CsiStream remove_static(const CsiStream& stream, double window_s = 1.0) {
  const double span = window_s * stream.config.sample_rate_hz;
  if (!(span >= 2.0 - 1e-9)) throw ConfigError("static-removal window shorter than 2 samples");
  if (stream.empty()) throw InputError("static removal on empty stream");
  const int n = static_cast<int>(stream.frames.size());
  const int win = window_samples(window_s, stream.config.sample_rate_hz);
  const int back = win / 2;

  // Prefix sums give O(1) window means per frame.
  const auto rows = stream.frames[0].h.rows();
  const auto cols = stream.frames[0].h.cols();
  std::vector<Eigen::MatrixXcd> prefix(n + 1, Eigen::MatrixXcd::Zero(rows, cols));
  for (int i = 0; i < n; ++i) {
    if (stream.frames[i].h.rows() != rows || stream.frames[i].h.cols() != cols)
      throw ShapeError("stream frames differ in shape");
    prefix[i + 1] = prefix[i] + stream.frames[i].h;
  }

  CsiStream out;
  out.config = stream.config;
  out.frames.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - back);
    const int hi = std::min(n - 1, i - back + win - 1);
    const Eigen::MatrixXcd mean = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    CsiFrame f = stream.frames[i];
    f.h -= mean;
    out.frames.push_back(std::move(f));
  }
  return out;
}

// Adds multiples of 2*pi so every successive difference lies in (-pi, pi].
inline void unwrap_phase(std::vector<double>& phase) {
  for (std::size_t i = 1; i < phase.size(); ++i) {
    double d = phase[i] - phase[i - 1];
    d -= 2.0 * kPi * std::ceil((d - kPi) / (2.0 * kPi));
    phase[i] = phase[i - 1] + d;
  }
}

struct AmpPhase {
  std::vector<double> amplitude;
  std::vector<double> phase;
};

// Per-subcarrier mean amplitude and circular-mean antenna phase, unwrapped
// across subcarriers.
inline AmpPhase amp_phase(const CsiFrame& frame) {
  const int n_sc = frame.n_subcarriers();
  const int n_ant = frame.n_antennas();
  AmpPhase out;
  out.amplitude.resize(n_sc);
  out.phase.resize(n_sc);
  for (int k = 0; k < n_sc; ++k) {
    double amp = 0.0;
    cplx phasor{0.0, 0.0};
    for (int a = 0; a < n_ant; ++a) {
      const double m = std::abs(frame.h(k, a));
      amp += m;
      if (m > 0.0) phasor += frame.h(k, a) / m;
    }
    out.amplitude[k] = amp / n_ant;
    out.phase[k] = std::abs(phasor) > 0.0 ? std::arg(phasor) : 0.0;
  }
  unwrap_phase(out.phase);
  return out;
}

}  // namespace wiperc
