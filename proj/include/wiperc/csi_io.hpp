#pragma once

#include <string>
#include <string_view>

#include "wiperc/csi_core.hpp"
#include "wiperc/io_util.hpp"

namespace wiperc {

// CSB1 layout (little-endian):
//   "CSB1" | u32 K | u32 A | f64 sample_rate | f64 wavelength | f64 subcarrier_spacing
//   per frame: f64 timestamp | K*A*(f32 re, f32 im), subcarrier-major
inline constexpr std::string_view kCsbMagic = "CSB1";

inline std::string encode_csb1(const CsiStream& stream) {
  const auto& cfg = stream.config;
  io::ByteWriter w;
  w.put_bytes(kCsbMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_subcarriers));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_rx_antennas));
  w.put<double>(cfg.sample_rate_hz);
  w.put<double>(cfg.carrier_wavelength_m);
  w.put<double>(cfg.subcarrier_spacing_hz);
  for (const auto& f : stream.frames) {
    if (f.n_subcarriers() != cfg.n_subcarriers || f.n_antennas() != cfg.n_rx_antennas)
      throw ShapeError("frame shape does not match stream config");
    w.put<double>(f.timestamp_s);
    for (int k = 0; k < cfg.n_subcarriers; ++k)
      for (int a = 0; a < cfg.n_rx_antennas; ++a) {
        w.put<float>(static_cast<float>(f.h(k, a).real()));
        w.put<float>(static_cast<float>(f.h(k, a).imag()));
      }
  }
  return w.take();
}

// The header does not carry antenna spacing, noise floor or link id; spacing
// defaults to half a wavelength and the id comes from the caller.
inline CsiStream decode_csb1(std::string_view bytes, const std::string& link_id = "link0") {
  io::ByteReader r(bytes);
  if (r.get_bytes(4) != kCsbMagic) throw IoError("not a CSB1 stream (bad magic)");
  CsiStream s;
  s.config.n_subcarriers = static_cast<int>(r.get<std::uint32_t>());
  s.config.n_rx_antennas = static_cast<int>(r.get<std::uint32_t>());
  s.config.sample_rate_hz = r.get<double>();
  s.config.carrier_wavelength_m = r.get<double>();
  s.config.subcarrier_spacing_hz = r.get<double>();
  s.config.antenna_spacing_m = s.config.carrier_wavelength_m / 2.0;
  const int n_sc = s.config.n_subcarriers;
  const int n_ant = s.config.n_rx_antennas;
  const std::size_t frame_bytes = 8 + static_cast<std::size_t>(n_sc) * n_ant * 8;
  if (r.remaining() % frame_bytes != 0) throw IoError("CSB1 payload is not a whole number of frames");
  const std::size_t n_frames = r.remaining() / frame_bytes;
  s.frames.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    CsiFrame f;
    f.link_id = link_id;
    f.timestamp_s = r.get<double>();
    f.h.resize(n_sc, n_ant);
    for (int k = 0; k < n_sc; ++k)
      for (int a = 0; a < n_ant; ++a) {
        const float re = r.get<float>();
        const float im = r.get<float>();
        f.h(k, a) = cplx(re, im);
      }
    s.frames.push_back(std::move(f));
  }
  return s;
}

inline std::string encode_csv(const CsiStream& stream) {
  std::string out = "t,k,a,re,im\n";
  char line[160];
  for (const auto& f : stream.frames)
    for (int k = 0; k < f.n_subcarriers(); ++k)
      for (int a = 0; a < f.n_antennas(); ++a) {
        std::snprintf(line, sizeof line, "%.9g,%d,%d,%.9g,%.9g\n", f.timestamp_s, k, a,
                      f.h(k, a).real(), f.h(k, a).imag());
        out += line;
      }
  return out;
}

}  // namespace wiperc
