#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "wiperc/error.hpp"
#include "wiperc/image.hpp"

namespace wiperc {

// Anisotropic TV: forward differences at every pixel that has both a right
// and a lower neighbour, averaged over those (H-1)(W-1) pixels.
inline double total_variation(const GrayImage& img) {
  if (img.rows < 2 || img.cols < 2) throw InputError("total variation needs at least a 2x2 image");
  double tv = 0.0;
  for (int r = 0; r + 1 < img.rows; ++r)
    for (int c = 0; c + 1 < img.cols; ++c)
      tv += std::abs(img.at(r, c + 1) - img.at(r, c)) + std::abs(img.at(r + 1, c) - img.at(r, c));
  return tv / ((img.rows - 1.0) * (img.cols - 1.0));
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable filter; `valid` keeps only full windows, otherwise borders are
// replicated and the output has the input size.
inline GrayImage filter2(const GrayImage& img, const std::vector<double>& k, bool valid) {
  const int n = static_cast<int>(k.size());
  const int h = n / 2;
  const int out_r = valid ? img.rows - n + 1 : img.rows;
  const int out_c = valid ? img.cols - n + 1 : img.cols;
  GrayImage tmp(img.rows, out_c);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < out_c; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const int cc = valid ? c + i : std::clamp(c + i - h, 0, img.cols - 1);
        s += k[i] * img.at(r, cc);
      }
      tmp.at(r, c) = s;
    }
  GrayImage out(out_r, out_c);
  for (int r = 0; r < out_r; ++r)
    for (int c = 0; c < out_c; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const int rr = valid ? r + i : std::clamp(r + i - h, 0, img.rows - 1);
        s += k[i] * tmp.at(rr, c);
      }
      out.at(r, c) = s;
    }
  return out;
}

inline GrayImage product(const GrayImage& a, const GrayImage& b) {
  GrayImage out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.px.size(); ++i) out.px[i] = a.px[i] * b.px[i];
  return out;
}

}  // namespace detail

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5). The dynamic range
// L is the value span across both images, or 1 if both are constant and equal.
inline double ssim(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim inputs differ in shape");
  if (a.rows < 11 || a.cols < 11) throw InputError("ssim needs at least 11x11 images");
  const auto [amin, amax] = std::minmax_element(a.px.begin(), a.px.end());
  const auto [bmin, bmax] = std::minmax_element(b.px.begin(), b.px.end());
  double range = std::max(*amax, *bmax) - std::min(*amin, *bmin);
  if (!(range > 0.0)) range = 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const auto k = detail::gaussian_kernel(11, 1.5);
  const auto mu_a = detail::filter2(a, k, true);
  const auto mu_b = detail::filter2(b, k, true);
  const auto saa = detail::filter2(detail::product(a, a), k, true);
  const auto sbb = detail::filter2(detail::product(b, b), k, true);
  const auto sab = detail::filter2(detail::product(a, b), k, true);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.px.size(); ++i) {
    const double ma = mu_a.px[i], mb = mu_b.px[i];
    const double va = saa.px[i] - ma * ma;
    const double vb = sbb.px[i] - mb * mb;
    const double cov = sab.px[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.px.size());
}

// Mean-subtracted contrast-normalized coefficients on the 0..255 scale,
// 7x7 Gaussian (sigma 7/6) with replicated borders.
inline GrayImage mscn(const GrayImage& img) {
  if (img.rows < 16 || img.cols < 16) throw InputError("mscn needs at least 16x16 images");
  GrayImage scaled = img;
  for (auto& v : scaled.px) v *= 255.0;
  const auto k = detail::gaussian_kernel(7, 7.0 / 6.0);
  const auto mu = detail::filter2(scaled, k, false);
  const auto sq = detail::filter2(detail::product(scaled, scaled), k, false);
  GrayImage out(img.rows, img.cols);
  for (std::size_t i = 0; i < out.px.size(); ++i) {
    const double sigma = std::sqrt(std::max(0.0, sq.px[i] - mu.px[i] * mu.px[i]));
    out.px[i] = (scaled.px[i] - mu.px[i]) / (sigma + 1.0);
  }
  return out;
}

struct AggdFit {
  double alpha = 0.0;
  double sigma_left = 0.0;
  double sigma_right = 0.0;
  double mean = 0.0;
};

namespace detail {

struct RhoTable {
  std::vector<double> alpha, rho;
  RhoTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double a = 0.2 + 0.001 * i;
      alpha.push_back(a);
      rho.push_back(std::exp(2.0 * std::lgamma(2.0 / a) - std::lgamma(1.0 / a) - std::lgamma(3.0 / a)));
    }
  }
};

inline const RhoTable& rho_table() {
  static const RhoTable t;
  return t;
}

}  // namespace detail

// Moment-matching fit of an asymmetric generalized Gaussian; the shape comes
// from the tabulated inverse of rho(a) = G(2/a)^2 / (G(1/a) G(3/a)) on a
// 0.2:0.001:10 grid.
inline AggdFit aggd_fit(const std::vector<double>& x) {
  if (x.size() < 100) throw InputError("aggd fit needs at least 100 samples");
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n_left = 0, n_right = 0;
  for (double v : x) {
    if (v < 0.0) {
      left_sq += v * v;
      ++n_left;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++n_right;
    }
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  if (!(sq_sum > 0.0)) throw DegenerateSampleError("aggd fit on all-zero samples");
  const double n = static_cast<double>(x.size());
  AggdFit f;
  f.sigma_left = n_left ? std::sqrt(left_sq / n_left) : 0.0;
  f.sigma_right = n_right ? std::sqrt(right_sq / n_right) : 0.0;
  const double gamma = f.sigma_right > 0.0 ? f.sigma_left / f.sigma_right : 0.0;
  const double r = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
  const double big_r = r * (gamma * gamma * gamma + 1.0) * (gamma + 1.0) / ((gamma * gamma + 1.0) * (gamma * gamma + 1.0));
  const auto& t = detail::rho_table();
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.rho.size(); ++i)
    if (std::abs(t.rho[i] - big_r) < std::abs(t.rho[best] - big_r)) best = i;
  f.alpha = t.alpha[best];
  const double scale = std::exp(0.5 * (std::lgamma(1.0 / f.alpha) - std::lgamma(3.0 / f.alpha)));
  f.mean = (f.sigma_right - f.sigma_left) * scale * std::exp(std::lgamma(2.0 / f.alpha) - std::lgamma(1.0 / f.alpha));
  return f;
}

inline constexpr int kNaturalnessFeatures = 36;
using NaturalnessFeatures = Eigen::Matrix<double, kNaturalnessFeatures, 1>;

// 2x2 block average (odd trailing row/column dropped).
inline GrayImage half_scale(const GrayImage& img) {
  GrayImage out(img.rows / 2, img.cols / 2);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = 0.25 * (img.at(2 * r, 2 * c) + img.at(2 * r, 2 * c + 1) + img.at(2 * r + 1, 2 * c) +
                             img.at(2 * r + 1, 2 * c + 1));
  return out;
}

// Per scale: shape and mean variance of the MSCN field, then for the
// horizontal, vertical and two diagonal neighbour products: shape, mean,
// left variance, right variance.
inline NaturalnessFeatures naturalness_features(const GrayImage& img) {
  if (img.rows < 32 || img.cols < 32) throw InputError("naturalness features need at least 32x32 images");
  NaturalnessFeatures f;
  int idx = 0;
  GrayImage level = img;
  for (int scale = 0; scale < 2; ++scale) {
    const auto m = mscn(level);
    const auto g = aggd_fit(m.px);
    f[idx++] = g.alpha;
    f[idx++] = 0.5 * (g.sigma_left * g.sigma_left + g.sigma_right * g.sigma_right);
    constexpr std::array<std::array<int, 2>, 4> shifts{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
    for (const auto& [dr, dc] : shifts) {
      std::vector<double> prod;
      prod.reserve(m.px.size());
      for (int r = 0; r + dr < m.rows; ++r)
        for (int c = std::max(0, -dc); c < m.cols && c + dc < m.cols; ++c) prod.push_back(m.at(r, c) * m.at(r + dr, c + dc));
      const auto a = aggd_fit(prod);
      f[idx++] = a.alpha;
      f[idx++] = a.mean;
      f[idx++] = a.sigma_left * a.sigma_left;
      f[idx++] = a.sigma_right * a.sigma_right;
    }
    level = half_scale(level);
  }
  return f;
}

inline constexpr double kReferenceRidge = 1e-3;

struct ReferenceStats {
  NaturalnessFeatures mean = NaturalnessFeatures::Zero();
  Eigen::Matrix<double, kNaturalnessFeatures, kNaturalnessFeatures> covariance =
      Eigen::Matrix<double, kNaturalnessFeatures, kNaturalnessFeatures>::Zero();
  int count = 0;
};

// Population covariance of the corpus features.
inline ReferenceStats reference_stats(const std::vector<NaturalnessFeatures>& feats) {
  if (feats.empty()) throw InputError("reference corpus is empty");
  ReferenceStats s;
  s.count = static_cast<int>(feats.size());
  for (const auto& f : feats) s.mean += f;
  s.mean /= s.count;
  for (const auto& f : feats) s.covariance += (f - s.mean) * (f - s.mean).transpose();
  s.covariance /= s.count;
  return s;
}

inline ReferenceStats reference_stats(const std::vector<GrayImage>& corpus) {
  std::vector<NaturalnessFeatures> feats;
  feats.reserve(corpus.size());
  for (const auto& img : corpus) feats.push_back(naturalness_features(img));
  return reference_stats(feats);
}

// Mahalanobis distance to the reference mean under the ridge-regularized
// covariance. Larger means less natural.
inline double naturalness_score(const NaturalnessFeatures& f, const ReferenceStats& ref) {
  const Eigen::MatrixXd cov =
      ref.covariance + kReferenceRidge * Eigen::MatrixXd::Identity(kNaturalnessFeatures, kNaturalnessFeatures);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.vectorD().minCoeff() > 0.0))
    throw ConfigError("reference covariance is singular after regularization");
  const Eigen::VectorXd d = f - ref.mean;
  return std::sqrt(std::max(0.0, d.dot(ldlt.solve(d))));
}

inline double naturalness_score(const GrayImage& img, const ReferenceStats& ref) {
  return naturalness_score(naturalness_features(img), ref);
}

inline void to_json(nlohmann::json& j, const ReferenceStats& s) {
  std::vector<double> mean(s.mean.data(), s.mean.data() + s.mean.size());
  std::vector<std::vector<double>> cov(kNaturalnessFeatures);
  for (int r = 0; r < kNaturalnessFeatures; ++r)
    for (int c = 0; c < kNaturalnessFeatures; ++c) cov[r].push_back(s.covariance(r, c));
  j = {{"count", s.count}, {"mean", mean}, {"covariance", cov}};
}

inline void from_json(const nlohmann::json& j, ReferenceStats& s) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
  if (mean.size() != kNaturalnessFeatures || cov.size() != kNaturalnessFeatures)
    throw InputError("reference stats must have 36 features");
  s.count = j.value("count", 0);
  for (int r = 0; r < kNaturalnessFeatures; ++r) {
    s.mean[r] = mean[r];
    if (cov[r].size() != kNaturalnessFeatures) throw InputError("reference covariance must be 36x36");
    for (int c = 0; c < kNaturalnessFeatures; ++c) s.covariance(r, c) = cov[r][c];
  }
}

}  // namespace wiperc
