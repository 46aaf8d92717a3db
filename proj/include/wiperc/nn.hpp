#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wiperc/error.hpp"

// Minimal double-precision layers with hand-written backward passes.
namespace wiperc::nn {

// Feature map of c channels over an h x w grid, stored as a c x (h*w) matrix
// with spatial index r*w + col.
struct Tensor {
  int c = 0, h = 0, w = 0;
  Eigen::MatrixXd m;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), m(Eigen::MatrixXd::Zero(c_, h_ * w_)) {}
  bool all_finite() const { return m.allFinite(); }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Param(std::string n, std::vector<int> s, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), shape(std::move(s)), value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}
  Eigen::Index size() const { return value.size(); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::string name() const = 0;
  // Activation pattern of piecewise-linear units from the last forward pass.
  virtual void append_pattern(std::vector<bool>&) const {}
};

inline int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int cin, int cout, int k, int stride)
      : name_(std::move(name)), cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(k / 2),
        weight_(name_ + ".weight", {cout, cin, k, k}, cout, static_cast<Eigen::Index>(cin) * k * k),
        bias_(name_ + ".bias", {cout}, cout, 1) {
    if (cin < 1 || cout < 1 || k < 1 || stride < 1) throw ConfigError("invalid conv layer " + name_);
  }

  Tensor forward(const Tensor& x) override {
    if (x.c != cin_) throw ShapeError(name_ + ": expected " + std::to_string(cin_) + " channels");
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = conv_out(x.h, k_, stride_, pad_);
    const int ow = conv_out(x.w, k_, stride_, pad_);
    Tensor y(cout_, oh, ow);
    if (k_ == 1 && stride_ == 1) {
      cols_ = x.m;
    } else {
      cols_.setZero(static_cast<Eigen::Index>(cin_) * k_ * k_, static_cast<Eigen::Index>(oh) * ow);
      for (int ci = 0; ci < cin_; ++ci)
        for (int dy = 0; dy < k_; ++dy)
          for (int dx = 0; dx < k_; ++dx) {
            const Eigen::Index row = (static_cast<Eigen::Index>(ci) * k_ + dy) * k_ + dx;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ + dy - pad_;
              if (iy < 0 || iy >= x.h) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ + dx - pad_;
                if (ix < 0 || ix >= x.w) continue;
                cols_(row, oy * ow + ox) = x.m(ci, iy * x.w + ix);
              }
            }
          }
    }
    y.m.noalias() = weight_.value * cols_;
    y.m.colwise() += bias_.value.col(0);
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    weight_.grad.noalias() += dy.m * cols_.transpose();
    bias_.grad.col(0) += dy.m.rowwise().sum();
    const Eigen::MatrixXd dcols = weight_.value.transpose() * dy.m;
    Tensor dx(cin_, in_h_, in_w_);
    if (k_ == 1 && stride_ == 1) {
      dx.m = dcols;
      return dx;
    }
    const int oh = dy.h, ow = dy.w;
    for (int ci = 0; ci < cin_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const Eigen::Index row = (static_cast<Eigen::Index>(ci) * k_ + ky) * k_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_h_) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix < 0 || ix >= in_w_) continue;
              dx.m(ci, iy * in_w_ + ix) += dcols(row, oy * ow + ox);
            }
          }
        }
    return dx;
  }

  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string name() const override { return name_; }
  int fan_in() const { return cin_ * k_ * k_; }

 private:
  std::string name_;
  int cin_, cout_, k_, stride_, pad_;
  int in_h_ = 0, in_w_ = 0;
  Param weight_, bias_;
  Eigen::MatrixXd cols_;
};

class Relu : public Layer {
 public:
  explicit Relu(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x) override {
    mask_ = (x.m.array() > 0.0);
    Tensor y = x;
    y.m = mask_.select(x.m, 0.0);
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.m = mask_.select(dy.m, 0.0);
    return dx;
  }
  std::string name() const override { return name_; }
  void append_pattern(std::vector<bool>& out) const override {
    for (Eigen::Index i = 0; i < mask_.size(); ++i) out.push_back(mask_.data()[i]);
  }

 private:
  std::string name_;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask_;
};

// Fully connected map from the flattened input to an (out_c, out_h, out_w)
// grid. Flattening follows the storage order of Tensor::m.
class Dense : public Layer {
 public:
  Dense(std::string name, int in_features, int out_c, int out_h, int out_w)
      : name_(std::move(name)), in_(in_features), out_c_(out_c), out_h_(out_h), out_w_(out_w),
        weight_(name_ + ".weight", {out_c * out_h * out_w, in_features}, out_c * out_h * out_w, in_features),
        bias_(name_ + ".bias", {out_c * out_h * out_w}, out_c * out_h * out_w, 1) {
    if (in_features < 1 || out_c < 1 || out_h < 1 || out_w < 1) throw ConfigError("invalid dense layer " + name_);
  }

  Tensor forward(const Tensor& x) override {
    if (x.m.size() != in_) throw ShapeError(name_ + ": expected " + std::to_string(in_) + " inputs");
    in_c_ = x.c;
    in_h_ = x.h;
    in_w_ = x.w;
    input_ = Eigen::Map<const Eigen::VectorXd>(x.m.data(), x.m.size());
    Tensor y(out_c_, out_h_, out_w_);
    Eigen::Map<Eigen::VectorXd>(y.m.data(), y.m.size()).noalias() = weight_.value * input_ + bias_.value.col(0);
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const Eigen::Map<const Eigen::VectorXd> g(dy.m.data(), dy.m.size());
    weight_.grad.noalias() += g * input_.transpose();
    bias_.grad.col(0) += g;
    Tensor dx(in_c_, in_h_, in_w_);
    Eigen::Map<Eigen::VectorXd>(dx.m.data(), dx.m.size()).noalias() = weight_.value.transpose() * g;
    return dx;
  }

  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string name() const override { return name_; }
  int fan_in() const { return in_; }

 private:
  std::string name_;
  int in_, out_c_, out_h_, out_w_;
  int in_c_ = 0, in_h_ = 0, in_w_ = 0;
  Param weight_, bias_;
  Eigen::VectorXd input_;
};

class Upsample2 : public Layer {
 public:
  explicit Upsample2(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x) override {
    Tensor y(x.c, 2 * x.h, 2 * x.w);
    for (int r = 0; r < y.h; ++r)
      for (int c = 0; c < y.w; ++c) y.m.col(r * y.w + c) = x.m.col((r / 2) * x.w + c / 2);
    return y;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx(dy.c, dy.h / 2, dy.w / 2);
    for (int r = 0; r < dy.h; ++r)
      for (int c = 0; c < dy.w; ++c) dx.m.col((r / 2) * dx.w + c / 2) += dy.m.col(r * dy.w + c);
    return dx;
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
};

class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  // Throws ShapeError on mismatched shapes. When `check_finite` is set, the
  // first layer producing a non-finite value is reported through `bad_layer`.
  Tensor forward(const Tensor& x, std::string* bad_layer = nullptr) {
    Tensor cur = x;
    for (auto& l : layers_) {
      cur = l->forward(cur);
      if (bad_layer && bad_layer->empty() && !cur.all_finite()) *bad_layer = l->name();
    }
    return cur;
  }

  Tensor backward(const Tensor& dy) {
    Tensor cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.setZero();
  }

  std::vector<bool> activation_pattern() const {
    std::vector<bool> out;
    for (const auto& l : layers_) l->append_pattern(out);
    return out;
  }

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += static_cast<std::size_t>(p->size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
  }

  // Applies one update from the gradients currently stored in the params.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      params_[i]->value.array() -=
          cfg_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Eigen::MatrixXd> m_, v_;
  int t_ = 0;
};

// He-style uniform weights scaled by fan-in; zero biases.
inline void init_uniform(Param& weight, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = u(rng);
}

}  // namespace wiperc::nn
