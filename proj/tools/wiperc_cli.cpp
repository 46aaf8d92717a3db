#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wiperc/csi_io.hpp"
#include "wiperc/pipeline.hpp"

using namespace wiperc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, const json& config,
                    const std::vector<std::string>& files) {
  io::write_file_atomic(dir / "manifest.json",
                        json{{"command", command}, {"seed", seed}, {"config", config}, {"files", files}}.dump(2));
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    io::write_file_atomic(path, text);
}

Preset scenario_from(const std::string& preset, std::uint64_t seed, const std::string& scene_path,
                     const std::string& motion_path) {
  auto p = preset_scenario(preset, seed);
  if (!scene_path.empty()) p.scene = read_json(scene_path).get<Scene>();
  if (!motion_path.empty()) p.motion = read_json(motion_path).get<MotionTrace>();
  p.scene.validate();
  return p;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string preset = "case_study_5rx";
  std::string scene, motion, out = "synth";
  std::uint64_t seed = 1;
  double snr_db = 20.0, cfo_hz = 40.0;
  bool csv = false;
};

int cmd_synth(const SynthArgs& a) {
  const auto p = scenario_from(a.preset, a.seed, a.scene, a.motion);
  const auto rendered = render_csi(p.scene, p.motion);
  fs::create_directories(a.out);
  std::vector<std::string> files{"scene.json", "motion.json"};
  io::write_file_atomic(fs::path(a.out) / "scene.json", json(p.scene).dump(2));
  io::write_file_atomic(fs::path(a.out) / "motion.json", json(p.motion).dump());
  for (std::size_t l = 0; l < p.scene.links.size(); ++l) {
    const auto& id = p.scene.links[l].id;
    const auto seed = link_seed(a.seed, l);
    const auto raw = inject_impairments(rendered.streams[l], a.cfo_hz, a.snr_db, seed);
    const auto cal = inject_impairments(rendered.streams[l], 0.0, a.snr_db, seed);
    io::write_file_atomic(fs::path(a.out) / (id + ".csb1"), encode_csb1(raw));
    io::write_file_atomic(fs::path(a.out) / (id + ".calibrated.csb1"), encode_csb1(cal));
    files.push_back(id + ".csb1");
    files.push_back(id + ".calibrated.csb1");
    if (a.csv) {
      io::write_file_atomic(fs::path(a.out) / (id + ".csv"), encode_csv(raw));
      files.push_back(id + ".csv");
    }
  }
  write_manifest(a.out, "synth", a.seed,
                 {{"preset", a.preset}, {"snr_db", a.snr_db}, {"cfo_hz", a.cfo_hz}}, files);
  std::cout << "wrote " << files.size() << " files to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::vector<std::string> inputs;
  std::string out;
  double static_window_s = 1.0;
  int every = 1;
};

// Link id from "<id>.csb1" or "<id>.calibrated.csb1".
std::string link_id_from(const fs::path& p) {
  auto stem = p.filename().string();
  return stem.substr(0, stem.find('.'));
}

int cmd_estimate(const EstimateArgs& a) {
  if (a.every < 1) throw ConfigError("--every must be >= 1");
  std::ostringstream os;
  for (const auto& in : a.inputs) {
    const auto stream = remove_static(decode_csb1(io::read_file(in), link_id_from(in)), a.static_window_s);
    for (std::size_t f = 0; f < stream.size(); f += a.every) {
      try {
        os << json(observe_link(stream.frames[f], stream.frames[f], stream.config)).dump() << '\n';
      } catch (const Error& e) {
        throw StageError("estimate", static_cast<int>(f), e.what());
      }
    }
  }
  emit(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct LocateArgs {
  std::string obs, scene, out;
};

int cmd_locate(const LocateArgs& a) {
  const auto scene = read_json(a.scene).get<Scene>();
  std::ifstream in(a.obs);
  if (!in) throw IoError("cannot open " + a.obs);
  std::map<double, std::vector<LinkObservation>> by_time;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto o = json::parse(line).get<LinkObservation>();
      by_time[o.timestamp_s].push_back(o);
    } catch (const json::exception& e) {
      throw InputError(std::string("bad observation line: ") + e.what());
    }
  }
  std::ostringstream os;
  int frame = 0;
  std::optional<Vec2> prev;
  const double max_path = detail::max_path_length(scene.links);
  for (auto& [t, obs] : by_time) {
    for (auto& o : obs) o = detail::gate_observation(o, scene.link(o.link_id), max_path);
    try {
      const auto est = locate_user(obs, scene.links, prev);
      prev = est.pos;
      auto j = json(est);
      j["timestamp_s"] = t;
      os << j.dump() << '\n';
    } catch (const Error& e) {
      throw StageError("locate", frame, e.what());
    }
    ++frame;
  }
  emit(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string preset = "case_study_5rx";
  std::string out = "model.skn1", metrics, dataset, save_dataset;
  int scenes = 8, epochs = 64, batch = 32, n_links = 0;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool no_multiscale = false;
  int window = 16, stride = 8;
};

int cmd_train(const TrainArgs& a) {
  FeatureOptions opt;
  opt.multiscale = !a.no_multiscale;
  opt.n_links = a.n_links;
  const WindowOptions w{a.window, a.stride};
  WindowSet set;
  if (!a.dataset.empty()) {
    set = decode_ftw1(io::read_file(a.dataset));
    if (set.labels.size() != set.windows.size()) throw InputError("dataset has no keypoint labels");
  } else {
    for (int i = 0; i < a.scenes; ++i) {
      const auto scene_seed = kTrainSeedBase + a.seed * 1000 + i;
      const auto p = preset_scenario(a.preset, scene_seed);
      const auto feats = extract_features(p.scene, p.motion, opt, scene_seed);
      for (auto& lw : make_windows(feats, w)) {
        set.windows.push_back(lw.sample.x);
        const auto& kp = feats.truth.keypoints[lw.end_frame];
        set.labels.emplace_back(kp.begin(), kp.end());
      }
    }
  }
  if (!a.save_dataset.empty()) io::write_file_atomic(a.save_dataset, encode_ftw1(set));
  if (set.windows.empty()) throw InputError("no training windows");

  const CameraModel cam;
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < set.windows.size(); ++i)
    samples.push_back({set.windows[i], make_target(set.labels[i], cam.rows, cam.cols)});
  NetConfig nc;
  nc.in_t = set.windows.front().t;
  nc.in_k = set.windows.front().k;
  nc.in_c = set.windows.front().c;
  SkeletonNet net(nc, a.seed);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  const auto r = train(net, samples, {}, tc, [](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << " loss " << m.train_loss << " joint_err_px " << m.train_joint_error << "\n";
  });
  save_checkpoint(a.out, net,
                  {{"preset", a.preset}, {"multiscale", opt.multiscale}, {"seed", a.seed}, {"windows", samples.size()}});
  if (!a.metrics.empty()) io::write_file_atomic(a.metrics, metrics_csv(r));
  std::cout << json{{"initial_loss", r.initial.loss},
                    {"final_loss", r.final_train.loss},
                    {"final_joint_error_px", r.final_train.joint_error_px},
                    {"windows", samples.size()},
                    {"checkpoint", a.out}}
                   .dump(2)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config, preset, checkpoint, out, endpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_links;
  bool stub = false, no_multiscale = false, no_images = false;
};

int cmd_run(const RunArgs& a) {
  PipelineConfig cfg;
  if (!a.config.empty()) cfg = read_json(a.config).get<PipelineConfig>();
  if (!a.preset.empty()) cfg.preset = a.preset;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.seed) cfg.seed = *a.seed;
  if (a.n_links) cfg.features.n_links = *a.n_links;
  if (a.no_multiscale) cfg.features.multiscale = false;
  if (a.no_images) cfg.write_images = false;
  if (!a.endpoint.empty()) cfg.aigc_endpoint = a.endpoint;
  if (!cfg.aigc_endpoint) cfg.aigc_endpoint = endpoint_from_env();
  if (a.stub) cfg.aigc_endpoint.reset();
  const auto rep = run_pipeline(cfg);
  std::cout << json{{"report", (cfg.output_dir / "report.json").string()},
                    {"mean_joint_error_px", rep.mean_joint_error_px},
                    {"median_position_error_m", rep.median_position_error_m},
                    {"ssim", rep.mean_similarity},
                    {"tv", rep.mean_tv},
                    {"naturalness", rep.mean_naturalness}}
                   .dump(2)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ScheduleArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
};

// Config: {"schedule": {...}, "quality": {...parametric} | {"table": {"1": {...}}},
//          "policy": {"kind": "threshold", "target": 0.7} | {"kind": "ok"}, "frames": 200, "seed": 1}
int cmd_schedule_sim(const ScheduleArgs& a) {
  const json j = a.config.empty() ? json::object() : read_json(a.config);
  const auto cfg = j.value("schedule", ScheduleConfig{});
  cfg.validate();
  QualityModel quality;
  const json q = j.value("quality", json::object());
  if (q.contains("table")) {
    EmpiricalQuality e;
    for (const auto& [key, v] : q["table"].items())
      e.table[std::stoi(key)] = {v.at("similarity").get<double>(), v.at("tv").get<double>(), v.at("naturalness").get<double>()};
    quality = e;
  } else {
    quality = q.get<ParametricQuality>();
  }
  const json pol = j.value("policy", json{{"kind", "threshold"}, {"target", 0.7}});
  const auto kind = pol.value("kind", std::string("threshold"));
  FeedbackPolicy policy =
      kind == "threshold" ? FeedbackPolicy(ThresholdPolicy(pol.value("target", 0.7))) : always(feedback_from_string(kind));
  const int frames = a.frames.value_or(j.value("frames", 200));
  const auto seed = a.seed.value_or(j.value("seed", std::uint64_t{1}));
  emit(a.out, simulate(cfg, quality, policy, frames, seed).csv());
  return 0;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
  std::string image, reference, ref_stats, write_ref_stats, out;
  std::vector<std::string> corpus;
};

int cmd_metrics(const MetricsArgs& a) {
  if (!a.write_ref_stats.empty()) {
    ReferenceStats stats;
    if (a.corpus.empty()) {
      stats = default_reference_stats();
    } else {
      std::vector<GrayImage> imgs;
      for (const auto& p : a.corpus) imgs.push_back(load_image(p));
      stats = reference_stats(imgs);
    }
    io::write_file_atomic(a.write_ref_stats, json(stats).dump());
    if (a.image.empty()) return 0;
  }
  if (a.image.empty()) throw ConfigError("--image is required");
  const auto img = load_image(a.image);
  const auto ref = a.ref_stats.empty() ? default_reference_stats() : read_json(a.ref_stats).get<ReferenceStats>();
  json out{{"tv", total_variation(img)}, {"naturalness", naturalness_score(img, ref)}, {"ssim", nullptr}};
  if (!a.reference.empty()) out["ssim"] = ssim(img, load_image(a.reference));
  emit(a.out, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct Fig6Args {
  std::string config, out = "fig6", checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds, epochs;
};

int cmd_fig6(const Fig6Args& a) {
  Fig6Config cfg;
  if (!a.config.empty()) cfg = read_json(a.config).get<Fig6Config>();
  if (a.seed) cfg.seed = *a.seed;
  if (a.seeds) cfg.seeds = *a.seeds;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (cfg.seeds < 1) throw ConfigError("seeds must be >= 1");
  const auto res = reproduce_fig6(cfg, [](const std::string& m) { std::cerr << m << "\n"; });
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  io::write_file_atomic(dir / "fig6.csv", res.csv());
  io::write_file_atomic(dir / "summary.json", res.summary().dump(2));
  write_manifest(dir, "reproduce-fig6", cfg.seed, {{"preset", cfg.preset}, {"seeds", cfg.seeds}},
                 {"fig6.csv", "summary.json"});
  std::cout << res.csv() << res.summary().dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WiFi sensing to generated imagery pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "render a preset or scene/motion pair to CSB1 captures");
  s->add_option("--preset", synth.preset, "preset scenario name");
  s->add_option("--scene", synth.scene, "scene JSON (overrides the preset scene)");
  s->add_option("--motion", synth.motion, "motion JSON (overrides the preset motion)");
  s->add_option("--out", synth.out, "output directory");
  s->add_option("--seed", synth.seed);
  s->add_option("--snr-db", synth.snr_db);
  s->add_option("--cfo-hz", synth.cfo_hz);
  s->add_flag("--csv", synth.csv, "also write t,k,a,re,im CSV per link");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "CSB1 captures in, LinkObservation JSON lines out");
  e->add_option("inputs", est.inputs, "calibrated CSB1 files named <link>.*.csb1")->required();
  e->add_option("--out", est.out, "output file (default stdout)");
  e->add_option("--static-window", est.static_window_s, "static removal window, s");
  e->add_option("--every", est.every, "estimate every n-th frame");

  LocateArgs loc;
  auto* l = app.add_subcommand("locate", "LinkObservation JSON lines in, PositionEstimate JSON lines out");
  l->add_option("--obs", loc.obs)->required();
  l->add_option("--scene", loc.scene)->required();
  l->add_option("--out", loc.out, "output file (default stdout)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a skeleton network on synthetic scenes");
  t->add_option("--preset", tr.preset);
  t->add_option("--scenes", tr.scenes, "training scenes to synthesize");
  t->add_option("--dataset", tr.dataset, "FTW1 training set instead of synthesizing");
  t->add_option("--save-dataset", tr.save_dataset, "write the windows as FTW1");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch", tr.batch);
  t->add_option("--lr", tr.lr);
  t->add_option("--n-links", tr.n_links, "use the first n links (0 = all)");
  t->add_option("--seed", tr.seed);
  t->add_option("--window", tr.window, "frames per window");
  t->add_option("--stride", tr.stride, "frames between windows");
  t->add_flag("--no-multiscale", tr.no_multiscale, "uniform link fusion (2 channels)");
  t->add_option("--out", tr.out, "checkpoint path");
  t->add_option("--metrics", tr.metrics, "per-epoch metrics CSV");

  RunArgs run;
  auto* r = app.add_subcommand("run", "end-to-end pipeline into a run directory");
  r->add_option("--config", run.config, "PipelineConfig JSON");
  r->add_option("--preset", run.preset);
  r->add_option("--checkpoint", run.checkpoint);
  r->add_option("--out", run.out, "run directory");
  r->add_option("--seed", run.seed);
  r->add_option("--n-links", run.n_links);
  r->add_option("--endpoint", run.endpoint, "AIGC service URL (default: $" + std::string(kEndpointEnv) + ")");
  r->add_flag("--aigc-stub", run.stub, "force the offline generator");
  r->add_flag("--no-multiscale", run.no_multiscale);
  r->add_flag("--no-images", run.no_images);

  ScheduleArgs sch;
  auto* sc = app.add_subcommand("schedule-sim", "simulate the link/steps controller, CSV trace out");
  sc->add_option("--config", sch.config);
  sc->add_option("--out", sch.out, "CSV path (default stdout)");
  sc->add_option("--seed", sch.seed);
  sc->add_option("--frames", sch.frames);

  MetricsArgs met;
  auto* m = app.add_subcommand("metrics", "image quality metrics as JSON");
  m->add_option("--image", met.image);
  m->add_option("--reference", met.reference, "second image for SSIM");
  m->add_option("--ref-stats", met.ref_stats, "naturalness reference statistics JSON");
  m->add_option("--write-ref-stats", met.write_ref_stats, "persist reference statistics");
  m->add_option("--corpus", met.corpus, "images for --write-ref-stats (default: built-in corpus)");
  m->add_option("--out", met.out, "output file (default stdout)");

  Fig6Args f6;
  auto* f = app.add_subcommand("reproduce-fig6", "sweep the link count and write CSV + verdicts");
  f->add_option("--config", f6.config);
  f->add_option("--out", f6.out, "output directory");
  f->add_option("--seed", f6.seed);
  f->add_option("--seeds", f6.seeds, "evaluation seeds");
  f->add_option("--epochs", f6.epochs);
  f->add_option("--checkpoint", f6.checkpoint, "reuse a trained sweep network");
  f->add_flag("--aigc-stub", "the sweep always uses the offline generator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*e) return cmd_estimate(est);
    if (*l) return cmd_locate(loc);
    if (*t) return cmd_train(tr);
    if (*r) return cmd_run(run);
    if (*sc) return cmd_schedule_sim(sch);
    if (*m) return cmd_metrics(met);
    if (*f) return cmd_fig6(f6);
  } catch (const StageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.config_error() ? 2 : 1;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const IoError& err) {
    std::cerr << "io error: " << err.what() << "\n";
    return 2;
  } catch (const InputError& err) {
    std::cerr << "input error: " << err.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
