#pragma once

// Eigen must precede httplib: <resolv.h> defines an `_res` macro that
// collides with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <sodium.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "wiperc/error.hpp"
#include "wiperc/image.hpp"
#include "wiperc/skeleton.hpp"

namespace wiperc {

inline constexpr double kDefaultTextGuidance = 7.5;
inline constexpr double kDefaultImageGuidance = 1.5;
inline constexpr const char* kEndpointEnv = "WIPERC_AIGC_ENDPOINT";

struct GenerationRequest {
  GrayImage skeleton_image;
  std::string instruction = "turn the skeleton into a boxer";
  int steps = 20;
  double text_guidance = kDefaultTextGuidance;
  double image_guidance = kDefaultImageGuidance;
  double timeout_s = 30.0;

  void validate() const {
    if (skeleton_image.px.empty()) throw InputError("generation request has an empty skeleton image");
    if (steps < 1) throw InputError("steps must be at least 1");
    if (!(text_guidance > 0.0) || !(image_guidance > 0.0)) throw InputError("guidance scales must be positive");
    if (!(timeout_s > 0.0)) throw InputError("timeout must be positive");
  }
};

namespace base64 {

inline void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium failed to initialise");
}

inline std::string encode(std::string_view bytes) {
  ensure_sodium();
  constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    variant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

inline std::string decode(std::string_view text) {
  ensure_sodium();
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                        &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw ProtocolError("invalid base64 payload");
  out.resize(len);
  return out;
}

}  // namespace base64

inline nlohmann::json request_body(const GenerationRequest& req) {
  return {{"image_b64", base64::encode(encode_png(req.skeleton_image))},
          {"instruction", req.instruction},
          {"steps", req.steps},
          {"text_guidance", req.text_guidance},
          {"image_guidance", req.image_guidance}};
}

// Inverse of request_body; used by servers and mocks.
inline GenerationRequest parse_request_body(const std::string& body) {
  GenerationRequest req;
  try {
    const auto j = nlohmann::json::parse(body);
    req.skeleton_image = decode_png(base64::decode(j.at("image_b64").get<std::string>()));
    req.instruction = j.at("instruction").get<std::string>();
    req.steps = j.at("steps").get<int>();
    req.text_guidance = j.at("text_guidance").get<double>();
    req.image_guidance = j.at("image_guidance").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  } catch (const IoError& e) {
    throw ProtocolError(std::string("malformed request image: ") + e.what());
  }
  return req;
}

inline std::string response_body(const GrayImage& img) {
  return nlohmann::json{{"image_b64", base64::encode(encode_png(img))}, {"rows", img.rows}, {"cols", img.cols}}.dump();
}

inline GrayImage parse_response_body(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    auto img = decode_png(base64::decode(j.at("image_b64").get<std::string>()));
    if (j.contains("rows") && j.contains("cols") &&
        (j["rows"].get<int>() != img.rows || j["cols"].get<int>() != img.cols))
      throw ProtocolError("decoded image does not match declared dimensions");
    return img;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  } catch (const IoError& e) {
    throw ProtocolError(std::string("undecodable response image: ") + e.what());
  }
}

struct ClientOptions {
  int max_retries = 2;
  double backoff_s = 0.05;
};

struct GenerationResult {
  GrayImage image;
  int retries = 0;
  double elapsed_s = 0.0;
};

inline std::optional<std::string> endpoint_from_env() {
  const char* v = std::getenv(kEndpointEnv);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

namespace detail {

// Splits "http://host:port/prefix" into the client base and the path prefix.
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const auto path = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path), prefix};
}

}  // namespace detail

// POST {endpoint}/edit. 5xx responses and transport failures are retried;
// the whole exchange, retries included, is bounded by req.timeout_s.
inline GenerationResult generate(const GenerationRequest& req, const std::string& endpoint,
                                 const ClientOptions& opt = {}) {
  req.validate();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(req.timeout_s));
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
  const auto [base, prefix] = detail::split_endpoint(endpoint);
  const std::string body = request_body(req).dump();

  GenerationResult out;
  for (int attempt = 0;; ++attempt) {
    const auto remaining = deadline - Clock::now();
    if (remaining <= Clock::duration::zero()) throw TimeoutError(elapsed());
    const auto remaining_us = std::chrono::duration_cast<std::chrono::microseconds>(remaining);
    httplib::Client cli(base);
    cli.set_connection_timeout(remaining_us);
    cli.set_read_timeout(remaining_us);
    cli.set_write_timeout(remaining_us);
    const auto res = cli.Post(prefix + "/edit", body, "application/json");

    std::string failure;
    int status = 0;
    if (!res) {
      if (Clock::now() >= deadline) throw TimeoutError(elapsed());
      failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      out.image = parse_response_body(res->body);
      out.retries = attempt;
      out.elapsed_s = elapsed();
      return out;
    } else {
      status = res->status;
      failure = res->body.substr(0, 200);
      if (status < 500) throw ServiceError(status, failure);
    }
    if (attempt >= opt.max_retries) throw ServiceError(status, failure);
    const auto pause =
        std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(opt.backoff_s * (1 << attempt)));
    if (Clock::now() + pause >= deadline) throw TimeoutError(elapsed());
    std::this_thread::sleep_for(pause);
  }
}

// Offline stand-in for the editing service.
struct StubModel {
  int size = 64;
  double background = 0.15;
  double figure_gain = 0.7;
  double noise_scale = 4.0;  // noise sigma is noise_scale / steps
  int max_smoothing = 3;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline GrayImage resize_nearest(const GrayImage& img, int rows, int cols) {
  GrayImage out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = img.at(r * img.rows / rows, c * img.cols / cols);
  return out;
}

inline GrayImage dilate(const GrayImage& img) {
  GrayImage out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      double m = 0.0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && cc >= 0 && rr < img.rows && cc < img.cols) m = std::max(m, img.at(rr, cc));
        }
      out.at(r, c) = m;
    }
  return out;
}

// One separable [1 2 1]/4 pass with replicated borders.
inline GrayImage smooth(const GrayImage& img) {
  GrayImage tmp(img.rows, img.cols), out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c)
      tmp.at(r, c) = 0.25 * img.at(r, std::max(c - 1, 0)) + 0.5 * img.at(r, c) +
                     0.25 * img.at(r, std::min(c + 1, img.cols - 1));
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c)
      out.at(r, c) = 0.25 * tmp.at(std::max(r - 1, 0), c) + 0.5 * tmp.at(r, c) +
                     0.25 * tmp.at(std::min(r + 1, img.rows - 1), c);
  return out;
}

}  // namespace detail

inline double stub_contrast(double text_guidance, double image_guidance) {
  return 1.0 - std::exp(-0.15 * text_guidance * image_guidance);
}

// Noise-free figure: the skeleton thickened by two dilations, softened, and
// shaded brighter toward the top, over a flat background.
inline GrayImage stub_figure(const GrayImage& skeleton, double contrast, const StubModel& model = {}) {
  const int n = model.size;
  const auto mask = detail::smooth(detail::dilate(detail::dilate(detail::resize_nearest(skeleton, n, n))));
  GrayImage img(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double shade = 0.7 + 0.3 * (1.0 - static_cast<double>(r) / (n - 1));
      img.at(r, c) = model.background + contrast * model.figure_gain * shade * std::clamp(mask.at(r, c), 0.0, 1.0);
    }
  return img;
}

// The noise field depends only on the seed and the instruction, so requests
// that differ in steps see the same pattern at a different amplitude.
inline GrayImage stub_generate(const GenerationRequest& req, std::uint64_t seed, const StubModel& model = {}) {
  req.validate();
  GrayImage img = stub_figure(req.skeleton_image, stub_contrast(req.text_guidance, req.image_guidance), model);
  std::mt19937_64 rng(seed ^ detail::fnv1a(req.instruction));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = model.noise_scale / req.steps;
  for (auto& v : img.px) v += sigma * noise(rng);
  const int passes = std::min(req.steps, model.max_smoothing);
  for (int i = 0; i < passes; ++i) img = detail::smooth(img);
  return img;
}

// Binary figure mask of a stub output: pixels brighter than halfway between
// background and the shaded figure.
inline GrayImage stub_figure_mask(const GrayImage& img, const GenerationRequest& req, const StubModel& model = {}) {
  const double cut = model.background + 0.5 * 0.7 * stub_contrast(req.text_guidance, req.image_guidance) *
                                            model.figure_gain;
  GrayImage m(img.rows, img.cols);
  for (std::size_t i = 0; i < img.px.size(); ++i) m.px[i] = img.px[i] > cut ? 1.0 : 0.0;
  return m;
}

// Clean stub renders of random poses and headings; the default reference
// set for naturalness scoring.
inline constexpr int kReferenceCorpusSize = 50;
inline constexpr int kReferenceSteps = 100;

inline std::vector<GrayImage> stub_reference_corpus(int count = kReferenceCorpusSize, std::uint64_t seed = 2024,
                                                    const StubModel& model = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GrayImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    PoseParams p;
    p.right_extension = u(rng);
    p.left_extension = u(rng);
    p.right_spread = u(rng);
    p.left_spread = u(rng);
    p.tuck = 0.5 * u(rng);
    p.knee_bend = 0.5 * u(rng);
    const double phi = 6.283185307179586 * u(rng);
    const CameraModel cam;
    GenerationRequest req;
    req.skeleton_image = render_skeleton(project_keypoints(make_body_pose(p), phi, cam), cam.rows, cam.cols);
    req.steps = kReferenceSteps;
    out.push_back(stub_generate(req, rng(), model));
  }
  return out;
}

// Stub when no endpoint is given, otherwise the remote service.
using Generator = std::function<GrayImage(const GenerationRequest&, std::uint64_t seed)>;

inline Generator make_generator(const std::optional<std::string>& endpoint, const StubModel& model = {}) {
  if (!endpoint) return [model](const GenerationRequest& r, std::uint64_t s) { return stub_generate(r, s, model); };
  return [ep = *endpoint](const GenerationRequest& r, std::uint64_t) { return generate(r, ep).image; };
}

}  // namespace wiperc
