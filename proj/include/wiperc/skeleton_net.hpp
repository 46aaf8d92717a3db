#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wiperc/error.hpp"
#include "wiperc/io_util.hpp"
#include "wiperc/multiscale_features.hpp"
#include "wiperc/nn.hpp"
#include "wiperc/skeleton.hpp"

namespace wiperc {

// Encoder: three blocks of {3x3 stride 2, 1x1 stride 1}, then a dense layer
// onto the latent grid. Decoder: 1x1, 1x1, then five 3x3, with nearest x2
// upsampling in front of the third and fifth layers.
struct NetConfig {
  int in_t = 16;
  int in_k = 30;
  int in_c = 4;
  std::vector<int> encoder_widths{8, 16, 16};
  int latent_c = 4;
  int latent_h = 8;
  int latent_w = 8;
  std::vector<int> decoder_widths{16, 16, 8, 8, 8, 8};  // hidden layers; the last layer emits `joints`
  int joints = kNumJoints;
  int out_h = 32;
  int out_w = 32;

  static constexpr int kEncoderBlocks = 3;
  static constexpr int kDecoderLayers = 7;

  void validate() const {
    if (in_t < 1 || in_k < 1 || in_c < 1) throw ConfigError("input dims must be positive");
    if (encoder_widths.size() != kEncoderBlocks) throw ConfigError("encoder needs exactly 3 block widths");
    if (decoder_widths.size() != kDecoderLayers - 1) throw ConfigError("decoder needs exactly 6 hidden widths");
    for (int w : encoder_widths)
      if (w < 1) throw ConfigError("encoder widths must be positive");
    for (int w : decoder_widths)
      if (w < 1) throw ConfigError("decoder widths must be positive");
    if (latent_c < 1 || latent_h < 1 || latent_w < 1 || joints < 1) throw ConfigError("latent dims must be positive");
    if (out_h != 4 * latent_h || out_w != 4 * latent_w) throw ConfigError("output must be 4x the latent grid");
  }

  // Spatial size after the encoder (each block halves, rounding up).
  std::pair<int, int> encoded_hw() const {
    int h = in_t, w = in_k;
    for (int b = 0; b < kEncoderBlocks; ++b) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    return {h, w};
  }
};

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"in_t", c.in_t},         {"in_k", c.in_k},         {"in_c", c.in_c},
       {"encoder_widths", c.encoder_widths}, {"latent_c", c.latent_c}, {"latent_h", c.latent_h},
       {"latent_w", c.latent_w}, {"decoder_widths", c.decoder_widths}, {"joints", c.joints},
       {"out_h", c.out_h},       {"out_w", c.out_w}};
}

inline void from_json(const nlohmann::json& j, NetConfig& c) {
  j.at("in_t").get_to(c.in_t);
  j.at("in_k").get_to(c.in_k);
  j.at("in_c").get_to(c.in_c);
  j.at("encoder_widths").get_to(c.encoder_widths);
  j.at("latent_c").get_to(c.latent_c);
  j.at("latent_h").get_to(c.latent_h);
  j.at("latent_w").get_to(c.latent_w);
  j.at("decoder_widths").get_to(c.decoder_widths);
  j.at("joints").get_to(c.joints);
  j.at("out_h").get_to(c.out_h);
  j.at("out_w").get_to(c.out_w);
}

// Layer-by-layer weight and bias count.
inline std::size_t closed_form_parameter_count(const NetConfig& c) {
  std::size_t n = 0;
  int cin = c.in_c;
  for (int w : c.encoder_widths) {
    n += static_cast<std::size_t>(w) * cin * 9 + w;
    n += static_cast<std::size_t>(w) * w + w;
    cin = w;
  }
  const auto [h, w] = c.encoded_hw();
  const std::size_t flat = static_cast<std::size_t>(cin) * h * w;
  const std::size_t latent = static_cast<std::size_t>(c.latent_c) * c.latent_h * c.latent_w;
  n += flat * latent + latent;
  cin = c.latent_c;
  for (int i = 0; i < NetConfig::kDecoderLayers; ++i) {
    const int cout = i + 1 < NetConfig::kDecoderLayers ? c.decoder_widths[i] : c.joints;
    const int k = i < 2 ? 1 : 3;
    n += static_cast<std::size_t>(cout) * cin * k * k + cout;
    cin = cout;
  }
  return n;
}

// Training target: keypoints (col, row) and one normalized heatmap per joint.
struct HeatmapTarget {
  std::vector<Eigen::Vector2d> keypoints;
  Eigen::MatrixXd heatmaps;  // joints x (rows*cols)
  int rows = 0, cols = 0;
};

inline HeatmapTarget make_target(const std::vector<Eigen::Vector2d>& kp, int rows, int cols) {
  HeatmapTarget t;
  t.keypoints = kp;
  t.rows = rows;
  t.cols = cols;
  t.heatmaps.resize(static_cast<Eigen::Index>(kp.size()), static_cast<Eigen::Index>(rows) * cols);
  for (std::size_t j = 0; j < kp.size(); ++j) {
    const auto hm = gaussian_heatmap(kp[j], rows, cols);
    for (std::size_t i = 0; i < hm.size(); ++i) t.heatmaps(static_cast<Eigen::Index>(j), i) = hm[i];
  }
  return t;
}

inline HeatmapTarget make_target(const SkeletonFrame& f) {
  return make_target(std::vector<Eigen::Vector2d>(f.keypoints.begin(), f.keypoints.end()), f.rows, f.cols);
}

inline constexpr double kHeatmapL2Weight = 0.1;

struct LossResult {
  double loss = 0.0;
  double joint_error_px = 0.0;
  std::vector<Eigen::Vector2d> keypoints;  // soft-argmax of the prediction
  Eigen::MatrixXd grad;                     // d loss / d heatmaps, when requested
};

// Expected (col, row) under each joint's heatmap.
inline std::vector<Eigen::Vector2d> soft_argmax(const Eigen::MatrixXd& heatmaps, int cols) {
  std::vector<Eigen::Vector2d> out(static_cast<std::size_t>(heatmaps.rows()), Eigen::Vector2d::Zero());
  for (Eigen::Index j = 0; j < heatmaps.rows(); ++j)
    for (Eigen::Index i = 0; i < heatmaps.cols(); ++i) {
      out[j].x() += heatmaps(j, i) * static_cast<double>(i % cols);
      out[j].y() += heatmaps(j, i) * static_cast<double>(i / cols);
    }
  return out;
}

// Mean Euclidean keypoint distance plus a 0.1-weighted squared heatmap
// difference (summed over pixels, averaged over joints).
inline LossResult heatmap_loss(const Eigen::MatrixXd& heatmaps, const HeatmapTarget& gt, bool want_grad = false) {
  if (heatmaps.rows() != gt.heatmaps.rows() || heatmaps.cols() != gt.heatmaps.cols())
    throw ShapeError("prediction and target heatmaps differ in shape");
  const auto nj = static_cast<double>(heatmaps.rows());
  LossResult r;
  r.keypoints = soft_argmax(heatmaps, gt.cols);
  if (want_grad) r.grad = Eigen::MatrixXd::Zero(heatmaps.rows(), heatmaps.cols());
  double dist = 0.0;
  for (Eigen::Index j = 0; j < heatmaps.rows(); ++j) {
    const Eigen::Vector2d d = r.keypoints[j] - gt.keypoints[j];
    const double n = d.norm();
    dist += n;
    if (want_grad && n > 1e-12) {
      const Eigen::Vector2d u = d / (n * nj);
      for (Eigen::Index i = 0; i < heatmaps.cols(); ++i)
        r.grad(j, i) = u.x() * static_cast<double>(i % gt.cols) + u.y() * static_cast<double>(i / gt.cols);
    }
  }
  r.joint_error_px = dist / nj;
  const Eigen::MatrixXd diff = heatmaps - gt.heatmaps;
  r.loss = r.joint_error_px + kHeatmapL2Weight * diff.squaredNorm() / nj;
  if (want_grad) r.grad += (2.0 * kHeatmapL2Weight / nj) * diff;
  return r;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.rows(); ++j) {
    const double mx = logits.row(j).maxCoeff();
    p.row(j) = (logits.row(j).array() - mx).exp();
    p.row(j) /= p.row(j).sum();
  }
  return p;
}

inline nn::Tensor to_tensor(const InputTensor& x) {
  nn::Tensor t(x.c, x.t, x.k);
  for (int c = 0; c < x.c; ++c)
    for (int i = 0; i < x.t; ++i)
      for (int k = 0; k < x.k; ++k) t.m(c, i * x.k + k) = x.at(c, i, k);
  return t;
}

class SkeletonNet {
 public:
  explicit SkeletonNet(const NetConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    int cin = cfg_.in_c;
    for (int b = 0; b < NetConfig::kEncoderBlocks; ++b) {
      const int w = cfg_.encoder_widths[b];
      add_conv("enc" + std::to_string(b) + ".down", cin, w, 3, 2, rng, true);
      add_conv("enc" + std::to_string(b) + ".mix", w, w, 1, 1, rng, true);
      cin = w;
    }
    const auto [h, w] = cfg_.encoded_hw();
    auto fc = std::make_unique<nn::Dense>("fc", cin * h * w, cfg_.latent_c, cfg_.latent_h, cfg_.latent_w);
    nn::init_uniform(*fc->params()[0], fc->fan_in(), rng);
    seq_.add(std::move(fc));
    seq_.add(std::make_unique<nn::Relu>("fc.relu"));
    cin = cfg_.latent_c;
    for (int i = 0; i < NetConfig::kDecoderLayers; ++i) {
      if (i == 2 || i == 4) seq_.add(std::make_unique<nn::Upsample2>("dec" + std::to_string(i) + ".up"));
      const bool last = i + 1 == NetConfig::kDecoderLayers;
      const int cout = last ? cfg_.joints : cfg_.decoder_widths[i];
      add_conv("dec" + std::to_string(i), cin, cout, i < 2 ? 1 : 3, 1, rng, !last);
      cin = cout;
    }
  }

  const NetConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params() { return seq_.params(); }
  std::size_t parameter_count() { return seq_.parameter_count(); }
  nn::Sequential& layers() { return seq_; }

  nn::Tensor logits(const InputTensor& x, std::string* bad_layer = nullptr) {
    check_input(x);
    return seq_.forward(to_tensor(x), bad_layer);
  }

  // Per-joint heatmaps (joints x out_h*out_w), each summing to one.
  Eigen::MatrixXd forward(const InputTensor& x) { return softmax_rows(logits(x).m); }

  std::vector<Eigen::Vector2d> predict_keypoints(const InputTensor& x) { return soft_argmax(forward(x), cfg_.out_w); }

  LossResult evaluate(const InputTensor& x, const HeatmapTarget& gt) { return heatmap_loss(forward(x), gt); }

  // Forward and backward for one sample; gradients accumulate into params,
  // scaled by `scale`.
  LossResult loss_and_grad(const InputTensor& x, const HeatmapTarget& gt, double scale = 1.0,
                           std::string* bad_layer = nullptr) {
    const nn::Tensor z = logits(x, bad_layer);
    const Eigen::MatrixXd p = softmax_rows(z.m);
    LossResult r = heatmap_loss(p, gt, true);
    nn::Tensor dz(z.c, z.h, z.w);
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      const double dot = p.row(j).dot(r.grad.row(j));
      dz.m.row(j) = scale * p.row(j).array() * (r.grad.row(j).array() - dot);
    }
    seq_.backward(dz);
    return r;
  }

 private:
  void add_conv(const std::string& name, int cin, int cout, int k, int stride, std::mt19937_64& rng, bool relu) {
    auto conv = std::make_unique<nn::Conv2d>(name, cin, cout, k, stride);
    nn::init_uniform(*conv->params()[0], conv->fan_in(), rng);
    seq_.add(std::move(conv));
    if (relu) seq_.add(std::make_unique<nn::Relu>(name + ".relu"));
  }

  void check_input(const InputTensor& x) const {
    if (x.t != cfg_.in_t || x.k != cfg_.in_k || x.c != cfg_.in_c)
      throw ShapeError("input is " + std::to_string(x.c) + "x" + std::to_string(x.t) + "x" + std::to_string(x.k) +
                       ", network expects " + std::to_string(cfg_.in_c) + "x" + std::to_string(cfg_.in_t) + "x" +
                       std::to_string(cfg_.in_k));
  }

  NetConfig cfg_;
  nn::Sequential seq_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 64;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  }
};

struct Sample {
  InputTensor x;
  HeatmapTarget y;
};

struct EvalResult {
  double loss = 0.0;
  double joint_error_px = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;        // mean over the epoch's minibatches
  double train_joint_error = 0.0;
  double val_loss = std::nan("");
  double val_joint_error = std::nan("");
};

struct TrainResult {
  EvalResult initial;
  EvalResult final_train;
  std::vector<EpochMetrics> epochs;
};

inline EvalResult evaluate(SkeletonNet& net, const std::vector<Sample>& set) {
  EvalResult e;
  if (set.empty()) return e;
  for (const auto& s : set) {
    const auto r = net.evaluate(s.x, s.y);
    e.loss += r.loss;
    e.joint_error_px += r.joint_error_px;
  }
  e.loss /= set.size();
  e.joint_error_px /= set.size();
  return e;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Adam over shuffled minibatches. The minibatch gradient is the mean of the
// per-sample gradients, accumulated in a fixed order.
inline TrainResult train(SkeletonNet& net, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw InputError("training set is empty");
  TrainResult result;
  result.initial = evaluate(net, train_set);
  nn::Adam opt(net.params(), {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics m;
    m.epoch = epoch + 1;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      net.layers().zero_grad();
      double bl = 0.0, be = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train_set[order[i]];
        std::string bad;
        const auto r = net.loss_and_grad(s.x, s.y, scale, &bad);
        if (!bad.empty() || !std::isfinite(r.loss)) throw NumericError(m.epoch, batches + 1, bad.empty() ? "loss" : bad);
        bl += r.loss;
        be += r.joint_error_px;
      }
      for (auto* p : net.params())
        if (!p->grad.allFinite()) throw NumericError(m.epoch, batches + 1, p->name);
      opt.step();
      m.train_loss += bl * scale;
      m.train_joint_error += be * scale;
      ++batches;
    }
    m.train_loss /= batches;
    m.train_joint_error /= batches;
    if (!val_set.empty()) {
      const auto v = evaluate(net, val_set);
      m.val_loss = v.loss;
      m.val_joint_error = v.joint_error_px;
    }
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.final_train = evaluate(net, train_set);
  return result;
}

inline std::string metrics_csv(const TrainResult& r) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,train_joint_error_px,val_loss,val_joint_error_px\n";
  os << 0 << ',' << r.initial.loss << ',' << r.initial.joint_error_px << ",,\n";
  for (const auto& m : r.epochs) {
    os << m.epoch << ',' << m.train_loss << ',' << m.train_joint_error << ',';
    if (std::isfinite(m.val_loss)) os << m.val_loss << ',' << m.val_joint_error;
    else os << ',';
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int resampled = 0;  // draws rejected because a perturbation flipped a ReLU
};

// Central differences on randomly drawn parameter entries. `loss` runs a
// forward pass and, when asked, a backward pass that accumulates into the
// params. A draw whose +-eps perturbation changes any ReLU activation is
// rejected and redrawn.
inline GradCheckResult gradient_check(nn::Sequential& seq, const std::function<double(bool)>& loss, double eps = 1e-4,
                                      int n_samples = 200, std::uint64_t seed = 0) {
  seq.zero_grad();
  loss(true);
  const auto base_pattern = seq.activation_pattern();
  auto params = seq.params();
  std::vector<Eigen::MatrixXd> analytic;
  std::size_t total = 0;
  for (auto* p : params) {
    analytic.push_back(p->grad);
    total += static_cast<std::size_t>(p->size());
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  GradCheckResult res;
  const int max_draws = 50 * n_samples;
  for (int draw = 0; res.checked < n_samples && draw < max_draws; ++draw) {
    std::size_t flat = pick(rng);
    std::size_t pi = 0;
    while (flat >= static_cast<std::size_t>(params[pi]->size())) flat -= params[pi++]->size();
    double& v = params[pi]->value.data()[flat];
    const double saved = v;
    v = saved + eps;
    const double up = loss(false);
    const bool up_same = seq.activation_pattern() == base_pattern;
    v = saved - eps;
    const double down = loss(false);
    const bool down_same = seq.activation_pattern() == base_pattern;
    v = saved;
    if (!up_same || !down_same) {
      ++res.resampled;
      continue;
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[pi].data()[flat];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.checked;
  }
  return res;
}

inline GradCheckResult gradient_check(SkeletonNet& net, const Sample& sample, double eps = 1e-4, int n_samples = 200,
                                      std::uint64_t seed = 0) {
  return gradient_check(
      net.layers(),
      [&](bool backward) {
        if (backward) return net.loss_and_grad(sample.x, sample.y).loss;
        return net.evaluate(sample.x, sample.y).loss;
      },
      eps, n_samples, seed);
}

// A single dense layer under a squared-error loss; its loss is quadratic in
// the parameters, so central differences are exact up to rounding.
struct LinearProbe {
  nn::Sequential seq;
  nn::Tensor input;
  Eigen::VectorXd target;

  LinearProbe(int in_features, int out_features, std::uint64_t seed) : input(1, 1, in_features) {
    std::mt19937_64 rng(seed);
    auto dense = std::make_unique<nn::Dense>("probe", in_features, out_features, 1, 1);
    nn::init_uniform(*dense->params()[0], in_features, rng);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < dense->params()[1]->size(); ++i) dense->params()[1]->value.data()[i] = g(rng);
    seq.add(std::move(dense));
    for (Eigen::Index i = 0; i < input.m.size(); ++i) input.m.data()[i] = g(rng);
    target = Eigen::VectorXd::NullaryExpr(out_features, [&](Eigen::Index) { return g(rng); });
  }

  double loss(bool backward) {
    const nn::Tensor y = seq.forward(input);
    const Eigen::Map<const Eigen::VectorXd> out(y.m.data(), y.m.size());
    const Eigen::VectorXd r = out - target;
    if (backward) {
      nn::Tensor dy(y.c, y.h, y.w);
      Eigen::Map<Eigen::VectorXd>(dy.m.data(), dy.m.size()) = r;
      seq.backward(dy);
    }
    return 0.5 * r.squaredNorm();
  }

  GradCheckResult check(double eps = 1e-4, int n_samples = 200, std::uint64_t seed = 0) {
    return gradient_check(seq, [this](bool b) { return loss(b); }, eps, n_samples, seed);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// SKN1 layout, little-endian:
//   "SKN1", u32 json_len, json_len bytes of JSON {"config": NetConfig, "meta": {...}}
//   u32 n_tensors, then per tensor: u32 name_len, name bytes, u32 ndim, ndim x u32 dims
//   then every tensor's values as f32 in table order, row-major over its dims.

inline std::string encode_checkpoint(SkeletonNet& net, const nlohmann::json& meta = nlohmann::json::object()) {
  io::ByteWriter w;
  w.put_bytes("SKN1");
  const std::string js = nlohmann::json{{"config", net.config()}, {"meta", meta}}.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(js.size()));
  w.put_bytes(js);
  const auto params = net.params();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->name.size()));
    w.put_bytes(p->name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (const auto* p : params)
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) w.put<float>(static_cast<float>(p->value(r, c)));
  return w.take();
}

struct Checkpoint {
  NetConfig config;
  nlohmann::json meta;
};

inline Checkpoint read_checkpoint_header(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4) != "SKN1") throw IoError("not an SKN1 checkpoint");
  const auto len = r.get<std::uint32_t>();
  try {
    const auto j = nlohmann::json::parse(r.get_bytes(len));
    return {j.at("config").get<NetConfig>(), j.value("meta", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
}

inline SkeletonNet decode_checkpoint(std::string_view bytes, nlohmann::json* meta = nullptr) {
  const Checkpoint ck = read_checkpoint_header(bytes);
  if (meta) *meta = ck.meta;
  SkeletonNet net(ck.config);
  io::ByteReader r(bytes);
  r.get_bytes(4);
  r.get_bytes(r.get<std::uint32_t>());
  auto params = net.params();
  if (r.get<std::uint32_t>() != params.size()) throw IoError("checkpoint tensor count does not match config");
  for (auto* p : params) {
    const std::string name(r.get_bytes(r.get<std::uint32_t>()));
    std::vector<int> shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
    if (name != p->name || shape != p->shape) throw IoError("checkpoint tensor '" + name + "' does not match network");
  }
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) p->value(i, c) = r.get<float>();
  if (r.remaining() != 0) throw IoError("trailing bytes after checkpoint payload");
  return net;
}

inline void save_checkpoint(const std::filesystem::path& path, SkeletonNet& net,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  io::write_file_atomic(path, encode_checkpoint(net, meta));
}

inline SkeletonNet load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  return decode_checkpoint(io::read_file(path), meta);
}

}  // namespace wiperc
