#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <thread>

#include "wiperc/aigc_client.hpp"
#include "wiperc/quality_metrics.hpp"

using namespace wiperc;

namespace {

class MockServer {
 public:
  explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/edit", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

GrayImage pattern(int rows, int cols) {
  GrayImage img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img.at(r, c) = ((r * 7 + c * 3) % 256) / 255.0;
  return img;
}

GenerationRequest standing_request(const Keypoints& kp, int steps = 20) {
  GenerationRequest req;
  req.skeleton_image = render_skeleton(kp, 32, 32);
  req.steps = steps;
  return req;
}

Keypoints standing() { return project_keypoints(make_body_pose({}), 1.2); }

}  // namespace

TEST(Base64, RoundTripAndRejectsGarbage) {
  for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)})
    EXPECT_EQ(base64::decode(base64::encode(s)), s);
  EXPECT_EQ(base64::encode("Man"), "TWFu");
  EXPECT_THROW(base64::decode("not base64!"), ProtocolError);
}

TEST(RequestBody, RoundTrip) {
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  req.steps = 17;
  const auto back = parse_request_body(request_body(req).dump());
  EXPECT_EQ(back.steps, 17);
  EXPECT_EQ(back.instruction, req.instruction);
  EXPECT_DOUBLE_EQ(back.text_guidance, kDefaultTextGuidance);
  EXPECT_EQ(to_bytes(back.skeleton_image), to_bytes(req.skeleton_image));
}

TEST(Generate, EchoesFixedImage) {
  const auto fixed = pattern(64, 64);
  std::string seen_body;
  MockServer mock([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(response_body(fixed), "application/json");
  });
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  const auto out = generate(req, mock.endpoint());
  EXPECT_EQ(out.retries, 0);
  EXPECT_EQ(encode_png(out.image), encode_png(fixed));
  const auto sent = nlohmann::json::parse(seen_body);
  for (const char* key : {"image_b64", "instruction", "steps", "text_guidance", "image_guidance"})
    EXPECT_TRUE(sent.contains(key)) << key;
}

TEST(Generate, RetriesTransientFailures) {
  std::atomic<int> calls{0};
  MockServer mock([&](const httplib::Request&, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    res.set_content(response_body(pattern(64, 64)), "application/json");
  });
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  const auto out = generate(req, mock.endpoint());
  EXPECT_EQ(out.retries, 2);
  EXPECT_EQ(mock.hits(), 3);
}

TEST(Generate, GivesUpAfterTwoRetries) {
  MockServer mock([](const httplib::Request&, httplib::Response& res) {
    res.status = 502;
    res.set_content("upstream down", "text/plain");
  });
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  try {
    generate(req, mock.endpoint());
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 502);
    EXPECT_EQ(e.excerpt(), "upstream down");
  }
  EXPECT_EQ(mock.hits(), 3);
}

TEST(Generate, ClientErrorIsNotRetried) {
  MockServer mock([](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("bad steps", "text/plain");
  });
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  EXPECT_THROW(generate(req, mock.endpoint()), ServiceError);
  EXPECT_EQ(mock.hits(), 1);
}

TEST(Generate, StallTimesOut) {
  MockServer mock([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(response_body(pattern(64, 64)), "application/json");
  });
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  req.timeout_s = 0.3;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    generate(req, mock.endpoint());
    FAIL();
  } catch (const TimeoutError& e) {
    EXPECT_GE(e.elapsed_s(), 0.25);
  }
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(took, req.timeout_s + 0.5);
}

TEST(Generate, MalformedPayloads) {
  for (const std::string& body : std::vector<std::string>{std::string("not json"), std::string("{\"other\": 1}"), std::string("{\"image_b64\": \"%%%\"}"),
                           nlohmann::json{{"image_b64", base64::encode("not a png")}}.dump(),
                           nlohmann::json{{"image_b64", base64::encode(encode_png(pattern(8, 8)))}, {"rows", 64}, {"cols", 64}}
                               .dump()}) {
    MockServer mock([body](const httplib::Request&, httplib::Response& res) { res.set_content(body, "application/json"); });
    GenerationRequest req;
    req.skeleton_image = pattern(32, 32);
    EXPECT_THROW(generate(req, mock.endpoint()), ProtocolError) << body;
  }
}

TEST(Generate, UnreachableEndpointFailsWithinDeadline) {
  GenerationRequest req;
  req.skeleton_image = pattern(32, 32);
  req.timeout_s = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(generate(req, "http://127.0.0.1:1"), Error);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.5);
}

TEST(Generate, ConcurrentRequests) {
  MockServer mock([](const httplib::Request& req, httplib::Response& res) {
    const auto r = parse_request_body(req.body);
    res.set_content(response_body(stub_generate(r, 1)), "application/json");
  });
  std::vector<std::thread> threads;
  std::vector<GrayImage> results(4);
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&, i] {
      auto req = standing_request(standing(), 10 + i);
      results[i] = generate(req, mock.endpoint()).image;
    });
  for (auto& t : threads) t.join();
  for (int i = 0; i < 4; ++i) EXPECT_EQ(encode_png(results[i]), encode_png(stub_generate(standing_request(standing(), 10 + i), 1)));
}

TEST(Stub, Deterministic) {
  const auto req = standing_request(standing());
  EXPECT_EQ(stub_generate(req, 5), stub_generate(req, 5));
  EXPECT_NE(stub_generate(req, 5), stub_generate(req, 6));
  EXPECT_EQ(stub_generate(req, 5).rows, 64);
}

TEST(Stub, TotalVariationFallsWithSteps) {
  double prev = 1e9;
  for (int steps = 5; steps <= 50; ++steps) {
    const double tv = total_variation(stub_generate(standing_request(standing(), steps), 11));
    EXPECT_LT(tv, prev) << "steps " << steps;
    prev = tv;
  }
}

TEST(Stub, NaturalnessImprovesWithSteps) {
  const auto ref = reference_stats(stub_reference_corpus());
  double prev = 1e18;
  for (int steps = 5; steps <= 50; steps += 5) {
    const double score = naturalness_score(stub_generate(standing_request(standing(), steps), 11), ref);
    EXPECT_LE(score, prev) << "steps " << steps;
    prev = score;
  }
}

TEST(Stub, GuidanceRaisesContrast) {
  auto req = standing_request(standing(), 50);
  req.text_guidance = 1.0;
  req.image_guidance = 1.0;
  const auto low = stub_generate(req, 3);
  req.text_guidance = 7.5;
  req.image_guidance = 1.5;
  const auto high = stub_generate(req, 3);
  EXPECT_GT(*std::max_element(high.px.begin(), high.px.end()), *std::max_element(low.px.begin(), low.px.end()));
}

TEST(Stub, FigureTracksSkeletonAccuracy) {
  // Reference is the figure region the stub draws for the true skeleton, so
  // both sides of the comparison have the same stroke width.
  const auto gt = standing();
  const auto gt_req = standing_request(gt, 40);
  const auto target = stub_figure_mask(stub_generate(gt_req, 999), gt_req);
  std::vector<double> mean_ssim;
  for (double sigma : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    double total = 0.0;
    for (unsigned s = 0; s < 30; ++s) {
      std::mt19937_64 rng(s);
      std::normal_distribution<double> n(0.0, sigma);
      Keypoints kp = gt;
      for (auto& p : kp) p += Eigen::Vector2d(n(rng), n(rng));
      const auto req = standing_request(kp, 40);
      total += ssim(target, stub_figure_mask(stub_generate(req, s), req));
    }
    mean_ssim.push_back(total / 30);
  }
  for (std::size_t i = 1; i < mean_ssim.size(); ++i) EXPECT_LE(mean_ssim[i], mean_ssim[i - 1]) << i;
}

TEST(Stub, GeneratorSelectsStubWithoutEndpoint) {
  const auto gen = make_generator(std::nullopt);
  const auto req = standing_request(standing());
  EXPECT_EQ(gen(req, 4), stub_generate(req, 4));
}
