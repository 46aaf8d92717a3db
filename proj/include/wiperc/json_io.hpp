#pragma once

#include <nlohmann/json.hpp>

#include "wiperc/geometry.hpp"
#include "wiperc/spectral_estimation.hpp"
#include "wiperc/synth_channel.hpp"

namespace wiperc {

using nlohmann::json;

inline json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline Vec2 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InputError("expected a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json cplx_json(cplx c) { return json::array({c.real(), c.imag()}); }

inline cplx json_cplx(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) throw InputError("expected a [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline void to_json(json& j, const RadioConfig& r) {
  j = {{"carrier_wavelength_m", r.carrier_wavelength_m}, {"subcarrier_spacing_hz", r.subcarrier_spacing_hz},
       {"n_subcarriers", r.n_subcarriers},               {"n_rx_antennas", r.n_rx_antennas},
       {"antenna_spacing_m", r.antenna_spacing_m},       {"sample_rate_hz", r.sample_rate_hz},
       {"noise_floor_db", r.noise_floor_db}};
}

// Missing keys keep their defaults, so a partial object works as overrides.
inline void from_json(const json& j, RadioConfig& r) {
  r.carrier_wavelength_m = j.value("carrier_wavelength_m", r.carrier_wavelength_m);
  r.subcarrier_spacing_hz = j.value("subcarrier_spacing_hz", r.subcarrier_spacing_hz);
  r.n_subcarriers = j.value("n_subcarriers", r.n_subcarriers);
  r.n_rx_antennas = j.value("n_rx_antennas", r.n_rx_antennas);
  r.antenna_spacing_m = j.value("antenna_spacing_m", r.antenna_spacing_m);
  r.sample_rate_hz = j.value("sample_rate_hz", r.sample_rate_hz);
  r.noise_floor_db = j.value("noise_floor_db", r.noise_floor_db);
}

inline void to_json(json& j, const Link& l) { j = {{"id", l.id}, {"tx", vec_json(l.tx_pos)}, {"rx", vec_json(l.rx_pos)}}; }

inline void from_json(const json& j, Link& l) {
  l.id = j.at("id").get<std::string>();
  l.tx_pos = json_vec(j.at("tx"));
  l.rx_pos = json_vec(j.at("rx"));
}

inline void to_json(json& j, const Scene& s) {
  j = {{"links", s.links}, {"radio", s.radio}, {"seed", s.seed}, {"statics", json::array()}};
  for (const auto& sc : s.statics) j["statics"].push_back({{"pos", vec_json(sc.pos)}, {"reflectivity", cplx_json(sc.reflectivity)}});
}

inline void from_json(const json& j, Scene& s) {
  s.links = j.at("links").get<std::vector<Link>>();
  s.radio = j.value("radio", RadioConfig{});
  s.seed = j.value("seed", std::uint64_t{0});
  s.statics.clear();
  for (const auto& sc : j.value("statics", json::array()))
    s.statics.push_back(Scatterer{json_vec(sc.at("pos")), json_cplx(sc.at("reflectivity")), std::nullopt});
}

// Per-sample body state; keypoints are included for consumers that only
// need the camera-plane ground truth.
inline void to_json(json& j, const MotionTrace& m) {
  j = {{"camera", {{"rows", m.camera.rows}, {"cols", m.camera.cols}, {"px_per_m", m.camera.px_per_m}}},
       {"joint_reflectivity", json::array()},
       {"samples", json::array()}};
  for (const auto& r : m.joint_reflectivity) j["joint_reflectivity"].push_back(cplx_json(r));
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& s = m.samples[i];
    json pose = json::array(), kps = json::array();
    for (const auto& p : s.pose) pose.push_back({p.x(), p.y(), p.z()});
    for (const auto& k : m.keypoints(i)) kps.push_back({k.x(), k.y()});
    j["samples"].push_back({{"t", s.t},
                            {"user_pos", vec_json(s.user_pos)},
                            {"orientation_rad", s.orientation_rad},
                            {"pose", pose},
                            {"keypoints", kps}});
  }
}

inline void from_json(const json& j, MotionTrace& m) {
  m = MotionTrace{};
  if (j.contains("camera")) {
    m.camera.rows = j["camera"].value("rows", m.camera.rows);
    m.camera.cols = j["camera"].value("cols", m.camera.cols);
    m.camera.px_per_m = j["camera"].value("px_per_m", m.camera.px_per_m);
  }
  if (j.contains("joint_reflectivity")) {
    const auto& r = j["joint_reflectivity"];
    if (r.size() != kNumJoints) throw InputError("joint_reflectivity needs 14 entries");
    for (int i = 0; i < kNumJoints; ++i) m.joint_reflectivity[i] = json_cplx(r[i]);
  }
  for (const auto& s : j.at("samples")) {
    BodyPose pose;
    const auto& p = s.at("pose");
    if (p.size() != kNumJoints) throw InputError("pose needs 14 joints");
    for (int i = 0; i < kNumJoints; ++i) pose[i] = Eigen::Vector3d(p[i][0], p[i][1], p[i][2]);
    m.samples.push_back(make_motion_sample(s.at("t"), json_vec(s.at("user_pos")), s.at("orientation_rad"), pose));
  }
}

inline void to_json(json& j, const LinkObservation& o) {
  j = {{"link_id", o.link_id},       {"timestamp_s", o.timestamp_s}, {"aoa_rad", o.aoa_rad},
       {"aoa_powers", o.aoa_powers}, {"tof_s", o.tof_s},             {"tof_powers", o.tof_powers}};
}

inline void from_json(const json& j, LinkObservation& o) {
  o.link_id = j.at("link_id").get<std::string>();
  o.timestamp_s = j.value("timestamp_s", 0.0);
  o.aoa_rad = j.value("aoa_rad", std::vector<double>{});
  o.aoa_powers = j.value("aoa_powers", std::vector<double>{});
  o.tof_s = j.value("tof_s", std::vector<double>{});
  o.tof_powers = j.value("tof_powers", std::vector<double>{});
}

inline void to_json(json& j, const PositionEstimate& p) {
  j = {{"pos", vec_json(p.pos)},
       {"residual", p.residual},
       {"covariance", {{p.covariance(0, 0), p.covariance(0, 1)}, {p.covariance(1, 0), p.covariance(1, 1)}}},
       {"n_constraints", p.n_constraints},
       {"iterations", p.iterations},
       {"converged", p.converged}};
}

}  // namespace wiperc
