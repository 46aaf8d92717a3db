// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (no arguments runs all eleven)

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "wiperc/aigc_client.hpp"
#include "wiperc/edge_scheduler.hpp"
#include "wiperc/geometry.hpp"
#include "wiperc/pipeline.hpp"
#include "wiperc/quality_metrics.hpp"
#include "wiperc/skeleton_net.hpp"
#include "wiperc/spectral_estimation.hpp"
#include "wiperc/synth_channel.hpp"

using namespace wiperc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  explicit Report(std::ostringstream& os) : os_(os) {}
  // Records a check; the criterion passes only if every check passes.
  void check(bool ok, const std::string& what) {
    all_ &= ok;
    os_ << (ok ? "" : "!") << what << "; ";
  }
  bool ok() const { return all_; }

 private:
  std::ostringstream& os_;
  bool all_ = true;
};

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome budget_formula() {
  std::ostringstream os;
  Report r(os);
  const ScheduleConfig cfg;
  const auto b5 = budget(5, cfg);
  r.check(std::abs(b5.aigc_time_s - 0.45) < 1e-12, "budget(5)=" + fmt(b5.aigc_time_s, 12) + " s");
  const auto range = feasible_range(cfg);
  bool decreasing = true;
  for (int n = range.n_min + 1; n <= range.n_max; ++n)
    decreasing &= budget(n, cfg).aigc_time_s < budget(n - 1, cfg).aigc_time_s;
  r.check(decreasing, "strictly decreasing over n=" + std::to_string(range.n_min) + ".." + std::to_string(range.n_max));
  return {r.ok(), os.str()};
}

Outcome fig6_trend() {
  std::ostringstream os;
  Report r(os);
  Fig6Config cfg;
  const auto res = reproduce_fig6(cfg);
  auto trend = [&](const char* name, double Fig6Row::* col, const std::vector<std::vector<double>>& per_seed) {
    const auto v = res.column(col);
    std::string series;
    for (double x : v) series += fmt(x, 4) + " ";
    const double agree = Fig6Result::endpoint_agreement(per_seed);
    r.check(Fig6Result::non_decreasing(v), std::string(name) + " [" + series.substr(0, series.size() - 1) + "] non-decreasing");
    r.check(v.back() > v.front() && agree >= 0.95, std::string(name) + " endpoint agreement " + fmt(agree, 3));
  };
  trend("similarity", &Fig6Row::similarity, res.similarity);
  trend("tv", &Fig6Row::tv, res.tv);
  trend("naturalness", &Fig6Row::naturalness, res.naturalness);
  return {r.ok(), os.str()};
}

PathTruth single_path(double tof_s, double aoa_rad, cplx gain) {
  PathTruth p;
  p.tof_s = tof_s;
  p.aoa_rad = aoa_rad;
  p.gain = gain;
  return p;
}

CsiFrame with_noise(const CsiFrame& f, const RadioConfig& radio, double snr_db, std::uint64_t seed) {
  CsiStream s;
  s.config = radio;
  s.frames.push_back(f);
  return inject_impairments(s, 0.0, snr_db, seed).frames[0];
}

Outcome estimation_accuracy() {
  std::ostringstream os;
  Report r(os);
  const RadioConfig radio;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> utof(10e-9, 60e-9), uaoa(-1.0, 1.0), uph(-kPi, kPi);
  double worst_aoa = 0, worst_tof = 0;
  std::vector<double> aoa_err, tof_err;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const double tof = utof(rng), aoa = uaoa(rng);
    const CsiFrame clean{render_paths({single_path(tof, aoa, std::polar(0.5, uph(rng)))}, radio), 0.0, "l"};
    if (trial < 20) {
      const auto a = estimate_aoa(clean, radio);
      const auto t = estimate_tof(clean, radio);
      worst_aoa = std::max(worst_aoa, a.size() == 1 ? std::abs(a[0].aoa_rad - aoa) : 1.0);
      worst_tof = std::max(worst_tof, t.size() == 1 ? std::abs(t[0].tof_s - tof) : 1.0);
    }
    const auto noisy = with_noise(clean, radio, 20.0, 1000 + trial);
    const auto a = estimate_aoa(noisy, radio);
    const auto t = estimate_tof(noisy, radio);
    double ea = kPi, et = 1.0;
    for (const auto& e : a) ea = std::min(ea, std::abs(e.aoa_rad - aoa));
    for (const auto& e : t) et = std::min(et, std::abs(e.tof_s - tof));
    aoa_err.push_back(ea);
    tof_err.push_back(et);
  }
  r.check(worst_aoa < 1e-6, "noiseless AoA max err " + fmt(worst_aoa) + " rad");
  r.check(worst_tof < 0.1e-9, "noiseless ToF max err " + fmt(worst_tof * 1e9) + " ns");
  const double ma = median(aoa_err) * 180 / kPi, mt = median(tof_err) * 1e9;
  r.check(ma < 2.0, "20 dB AoA median " + fmt(ma) + " deg");
  r.check(mt < 5.0, "20 dB ToF median " + fmt(mt) + " ns");
  return {r.ok(), os.str()};
}

LinkObservation observe_reflector(const Link& l, const Vec2& u, double snr_db, std::uint64_t seed) {
  const RadioConfig radio;
  CsiFrame f{render_paths({bounce_path(l, u, cplx(0.3, 0.0))}, radio), 0.0, l.id};
  if (std::isfinite(snr_db)) f = with_noise(f, radio, snr_db, seed);
  return observe_link(f, f, radio);
}

Outcome localization() {
  std::ostringstream os;
  Report r(os);
  const auto links = preset_scenario("case_study_5rx", 1).scene.links;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ux(2.6, 5.4), uy(2.0, 4.0);
  double worst = 0;
  std::vector<double> errs;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const Vec2 u(ux(rng), uy(rng));
    std::vector<LinkObservation> clean, noisy;
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (trial < 20) clean.push_back(observe_reflector(links[i], u, INFINITY, 0));
      noisy.push_back(observe_reflector(links[i], u, 20.0, trial * 17 + i));
    }
    if (trial < 20) worst = std::max(worst, (locate_user(clean, links).pos - u).norm());
    errs.push_back((locate_user(noisy, links).pos - u).norm());
  }
  r.check(worst < 1e-3, "noiseless max err " + fmt(worst) + " m");
  r.check(median(errs) < 0.3, "20 dB median err " + fmt(median(errs)) + " m");
  return {r.ok(), os.str()};
}

Outcome orientation() {
  std::ostringstream os;
  Report r(os);
  Scene scene;
  scene.links = {Link{"a", Vec2(0, 0), Vec2(4, 0)}, Link{"b", Vec2(5, 1), Vec2(5, 5)}};
  const double fs = scene.radio.sample_rate_hz;
  RenderOptions body_only;
  body_only.direct = false;
  body_only.statics = false;
  std::vector<double> errs;
  for (int h = 0; h < 8; ++h) {
    const double heading = h * kPi / 8 + 0.1;
    const Vec2 dir(std::cos(heading), std::sin(heading));
    const Vec2 start = Vec2(2, 3) - 0.6 * dir;
    MotionTrace walk;
    for (int i = 0; i < static_cast<int>(4.0 * fs); ++i) {
      MotionSample s;
      s.t = i / fs;
      s.user_pos = start + dir * 0.3 * s.t;
      s.orientation_rad = heading;
      s.joints.fill(s.user_pos);
      walk.samples.push_back(s);
    }
    const auto out = render_csi(scene, walk, body_only);
    std::vector<OrientationSample> windows;
    for (std::size_t c = 50; c + 50 < walk.size(); c += 50) {
      OrientationSample w;
      w.user_pos = walk.samples[c].user_pos;
      for (std::size_t i = 0; i < scene.links.size(); ++i)
        w.fluct[scene.links[i].id] = motion_fluctuation(out.streams[i], c, 1.0, scene.links[i], w.user_pos);
      windows.push_back(w);
    }
    errs.push_back(axis_distance(estimate_orientation(windows, scene.links).phi, heading) * 180 / kPi);
  }
  r.check(median(errs) < 10.0, "8 headings median axis err " + fmt(median(errs)) + " deg");
  return {r.ok(), os.str()};
}

InputTensor random_input(const NetConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  InputTensor x(cfg.in_t, cfg.in_k, cfg.in_c);
  for (auto& v : x.data) v = g(rng);
  return x;
}

Outcome gradient_checks() {
  std::ostringstream os;
  Report r(os);
  const NetConfig cfg;
  SkeletonNet net(cfg, 11);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(2.0, 29.0);
  std::vector<Eigen::Vector2d> kp(kNumJoints);
  for (auto& p : kp) p = Eigen::Vector2d(u(rng), u(rng));
  const auto desk = gradient_check(net, Sample{random_input(cfg, 12), make_target(kp, 32, 32)}, 1e-4, 200, 14);
  r.check(desk.max_rel_error < 1e-3, "desk config max rel err " + fmt(desk.max_rel_error) + " over " +
                                         std::to_string(desk.checked) + " params");
  LinearProbe probe(12, 5, 3);
  const auto lin = probe.check(1e-4, 65, 1);
  r.check(lin.max_rel_error < 1e-6, "linear probe max rel err " + fmt(lin.max_rel_error));
  return {r.ok(), os.str()};
}

Outcome training_sanity() {
  std::ostringstream os;
  Report r(os);
  const NetConfig cfg;
  // Keypoints are a fixed smooth function of the input.
  std::vector<Sample> data;
  for (int i = 0; i < 200; ++i) {
    auto x = random_input(cfg, 500 + i);
    std::vector<Eigen::Vector2d> kp(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j)
      kp[j] = Eigen::Vector2d(15.5 + 8.0 * std::tanh(x.data[j]), 15.5 + 8.0 * std::tanh(x.data[100 + j]));
    data.push_back({std::move(x), make_target(kp, cfg.out_h, cfg.out_w)});
  }
  TrainConfig tc;  // 64 epochs, batch 32, lr 1e-3
  tc.seed = 5;
  SkeletonNet a(cfg, 9), b(cfg, 9);
  const auto ra = train(a, data, {}, tc);
  const auto rb = train(b, data, {}, tc);
  const double ratio = ra.final_train.loss / ra.initial.loss;
  r.check(ratio < 0.5, "loss " + fmt(ra.initial.loss) + " -> " + fmt(ra.final_train.loss) + " (ratio " + fmt(ratio, 3) + ")");
  bool same = ra.epochs.size() == rb.epochs.size() && ra.final_train.loss == rb.final_train.loss;
  for (std::size_t e = 0; same && e < ra.epochs.size(); ++e) same = ra.epochs[e].train_loss == rb.epochs[e].train_loss;
  r.check(same, "deterministic given seed");
  return {r.ok(), os.str()};
}

Outcome multiscale_ablation_check() {
  std::ostringstream os;
  Report r(os);
  AblationConfig cfg;
  int wins = 0;
  std::string pairs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = multiscale_ablation(cfg, seed);
    wins += p.on_error_px <= p.off_error_px;
    pairs += fmt(p.on_error_px, 3) + "/" + fmt(p.off_error_px, 3) + " ";
  }
  r.check(wins >= 8, "on<=off in " + std::to_string(wins) + "/10 seeds (on/off px: " + pairs.substr(0, pairs.size() - 1) + ")");
  return {r.ok(), os.str()};
}

Outcome metric_units() {
  std::ostringstream os;
  Report r(os);
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g(0.5, 0.1);
  GrayImage img(24, 24), other(24, 24);
  for (auto& v : img.px) v = g(rng);
  for (auto& v : other.px) v = g(rng);
  r.check(total_variation(GrayImage(16, 16, 0.4)) == 0.0, "TV(const)=0");
  GrayImage scaled = img;
  for (auto& v : scaled.px) v *= 3.0;
  r.check(std::abs(total_variation(scaled) - 3.0 * total_variation(img)) < 1e-12, "TV homogeneity");
  r.check(std::abs(ssim(img, img) - 1.0) < 1e-12, "SSIM identity");
  r.check(std::abs(ssim(img, other) - ssim(other, img)) < 1e-12, "SSIM symmetry");
  std::normal_distribution<double> n01;
  std::exponential_distribution<double> e1;
  std::bernoulli_distribution coin;
  std::vector<double> gx(10000), lx(10000);
  for (auto& v : gx) v = n01(rng);
  for (auto& v : lx) v = coin(rng) ? e1(rng) : -e1(rng);
  const double ag = aggd_fit(gx).alpha, al = aggd_fit(lx).alpha;
  r.check(std::abs(ag - 2.0) <= 0.2, "AGGD Gaussian alpha " + fmt(ag, 3));
  r.check(std::abs(al - 1.0) <= 0.15, "AGGD Laplacian alpha " + fmt(al, 3));
  return {r.ok(), os.str()};
}

bool budget_ok(int n, const ScheduleConfig& cfg) {
  try {
    budget(n, cfg);
    return true;
  } catch (const InfeasibleError&) {
    return false;
  }
}

Outcome scheduler_controller() {
  std::ostringstream os;
  Report r(os);
  bool feasible_ok = true, dwell_ok = true;
  for (unsigned seed = 0; seed < 20; ++seed) {
    ScheduleConfig cfg;
    std::mt19937_64 rng(seed);
    cfg.per_step_s = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
    const auto range = feasible_range(cfg);
    auto s = initial_state(cfg);
    int last_change = -1000;
    for (int i = 0; i < 1000; ++i) {
      const auto kind = static_cast<FeedbackKind>(std::uniform_int_distribution<int>(0, 2)(rng));
      const auto next = feedback_step(s, {kind, double(i)}, cfg);
      feasible_ok &= next.n_links >= range.n_min && next.n_links <= range.n_max && budget_ok(next.n_links, cfg) &&
                     next.steps >= cfg.min_steps;
      if (next.n_links != s.n_links) {
        dwell_ok &= i - last_change >= cfg.dwell_frames && std::abs(next.n_links - s.n_links) == 1;
        last_change = i;
      }
      s = next;
    }
  }
  r.check(feasible_ok, "20x1000 random events always feasible");
  r.check(dwell_ok, "changes respect dwell");
  const ScheduleConfig cfg;
  const auto range = feasible_range(cfg);
  const ParametricQuality q;
  std::mt19937_64 dummy(0);
  bool converged = true;
  std::string got;
  for (double target : {0.3, 0.5, 0.6, 0.7, 0.8, 0.85}) {
    int expected = range.n_max;
    for (int n = range.n_min; n <= range.n_max; ++n)
      if (q(n, 1, dummy).similarity >= target) {
        expected = n;
        break;
      }
    const auto t = simulate(cfg, q, ThresholdPolicy(target), 200, 3);
    for (int i = 150; i < 200; ++i) converged &= t.frames[i].n_links == expected;
    got += std::to_string(t.frames.back().n_links) + " ";
  }
  r.check(converged, "threshold feedback settles at minimal n (" + got.substr(0, got.size() - 1) + ")");
  return {r.ok(), os.str()};
}

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

Outcome client_protocol() {
  std::ostringstream os;
  Report r(os);
  GrayImage fixed(64, 64);
  for (int i = 0; i < fixed.rows; ++i)
    for (int j = 0; j < fixed.cols; ++j) fixed.at(i, j) = ((i * 5 + j * 3) % 17) * 15 / 255.0;  // exact in 8-bit PNG
  GenerationRequest req;
  req.skeleton_image = render_skeleton(project_keypoints(make_body_pose({}), 1.2), 32, 32);

  {
    MockServer ok([&](const httplib::Request&, httplib::Response& res) { res.set_content(response_body(fixed), "application/json"); });
    const auto out = generate(req, ok.endpoint());
    r.check(out.image == fixed && out.retries == 0, "success");
  }
  {
    std::atomic<int> calls{0};
    MockServer flaky([&](const httplib::Request&, httplib::Response& res) {
      if (calls++ < 2) {
        res.status = 503;
        return;
      }
      res.set_content(response_body(fixed), "application/json");
    });
    const auto out = generate(req, flaky.endpoint());
    r.check(out.image == fixed && out.retries == 2 && flaky.hits() == 3, "retry then success");
  }
  {
    MockServer stall([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content("{}", "application/json");
    });
    auto slow = req;
    slow.timeout_s = 0.3;
    bool timed_out = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      generate(slow, stall.endpoint());
    } catch (const TimeoutError&) {
      timed_out = true;
    }
    const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.check(timed_out && took < 0.8, "timeout after " + fmt(took, 3) + " s");
  }
  {
    int rejected = 0;
    const std::vector<std::string> bodies{"not json", R"({"other": 1})", R"({"image_b64": "%%%"})",
                                          nlohmann::json{{"image_b64", base64::encode("not a png")}}.dump()};
    for (const auto& body : bodies) {
      MockServer bad([body](const httplib::Request&, httplib::Response& res) { res.set_content(body, "application/json"); });
      try {
        generate(req, bad.endpoint());
      } catch (const ProtocolError&) {
        ++rejected;
      }
    }
    r.check(rejected == static_cast<int>(bodies.size()), "malformed payloads rejected " + std::to_string(rejected) + "/" +
                                                              std::to_string(bodies.size()));
  }
  auto stub_req = req;
  stub_req.steps = 20;
  r.check(stub_generate(stub_req, 5) == stub_generate(stub_req, 5), "stub deterministic");
  bool monotone = true;
  double prev = INFINITY;
  for (int steps = 5; steps <= 50; ++steps) {
    stub_req.steps = steps;
    const double tv = total_variation(stub_generate(stub_req, 11));
    monotone &= tv < prev;
    prev = tv;
  }
  r.check(monotone, "stub TV strictly falls with steps 5..50");
  return {r.ok(), os.str()};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "budget formula", 1, budget_formula},
      {2, "fig6 trend (stub, 20 seeds, n=1..5)", 600, fig6_trend},
      {3, "estimation accuracy", 120, estimation_accuracy},
      {4, "localization", 120, localization},
      {5, "orientation", 60, orientation},
      {6, "gradient check", 120, gradient_checks},
      {7, "training sanity", 600, training_sanity},
      {8, "multiscale ablation", 0, multiscale_ablation_check},
      {9, "metric unit properties", 60, metric_units},
      {10, "scheduler controller", 60, scheduler_controller},
      {11, "client protocol", 60, client_protocol},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string time_note = fmt(took, 3) + " s";
    if (c.limit_s > 0) {
      time_note += " (limit " + fmt(c.limit_s, 4) + " s)";
      if (took >= c.limit_s) {
        o.pass = false;
        time_note += " over budget";
      }
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << time_note << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
