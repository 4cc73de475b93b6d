// Copyright 2026 The TADA Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tada/errors.hpp"
#include "tada/image.hpp"
#include "tada/residual.hpp"

namespace tada {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CovStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

// Sample mean and unbiased covariance of the rows of `samples`.
inline CovStats cov_stats(const RowMatrix& samples) {
  if (samples.rows() < 2) {
    throw Error(ErrorKind::kTooFewSamples,
                "covariance needs at least 2 samples, got " + std::to_string(samples.rows()));
  }
  CovStats s;
  s.n = static_cast<std::size_t>(samples.rows());
  s.mean = samples.colwise().mean().transpose();
  const RowMatrix centered = samples.rowwise() - s.mean.transpose();
  const auto d = samples.cols();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  acc.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  acc = acc.selfadjointView<Eigen::Lower>();
  s.cov = acc / static_cast<double>(s.n - 1);
  return s;
}

inline RowMatrix patch_matrix(const PatchSet& set) {
  RowMatrix m(static_cast<Eigen::Index>(set.size()), kPatchDim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (int j = 0; j < kPatchDim; ++j) m(static_cast<Eigen::Index>(i), j) = set.patches[i].values[j];
  }
  return m;
}

inline CovStats cov_stats(const PatchSet& set) { return cov_stats(patch_matrix(set)); }

inline double cov_loss(const CovStats& src, const CovStats& tgt) {
  if (src.dim() != tgt.dim()) {
    throw Error(ErrorKind::kShapeMismatch, "covariance dimensions differ");
  }
  return (src.cov - tgt.cov).squaredNorm();
}

// d cov_loss / d sample_i = 4/(n-1) (C_s - C_t)(x_i - m).
inline RowMatrix cov_loss_gradient(const RowMatrix& samples, const CovStats& src,
                                   const CovStats& tgt) {
  const Eigen::MatrixXd diff = src.cov - tgt.cov;
  const RowMatrix centered = samples.rowwise() - src.mean.transpose();
  return (4.0 / static_cast<double>(src.n - 1)) * (centered * diff);
}

// Index of the midpoint-rule quantile (j + 1/2)/m in a sorted sample of size n.
inline std::size_t quantile_index(std::size_t j, std::size_t m, std::size_t n) {
  return std::min(n - 1, ((2 * j + 1) * n) / (2 * m));
}

// Pooled one-dimensional W1 between two scalar samples, matching
// min(|a|, |b|) equally spaced quantiles.
inline double w1_samples(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::kTooFewSamples, "W1 of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t m = std::min(a.size(), b.size());
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    s += std::abs(a[quantile_index(j, m, a.size())] - b[quantile_index(j, m, b.size())]);
  }
  return s / static_cast<double>(m);
}

inline std::vector<double> pooled_values(const PatchSet& set) {
  std::vector<double> v;
  v.reserve(set.size() * kPatchDim);
  for (const auto& p : set.patches) v.insert(v.end(), p.values.begin(), p.values.end());
  return v;
}

inline double w1_loss(const PatchSet& src, const PatchSet& tgt) {
  if (src.empty() || tgt.empty()) throw Error(ErrorKind::kTooFewSamples, "W1 of an empty patch set");
  return w1_samples(pooled_values(src), pooled_values(tgt));
}

struct W1Result {
  double value = 0.0;
  std::vector<double> gradient;  // d W1 / d source sample, same order as input
};

// W1 against a pre-sorted target, with the a.e. gradient w.r.t. the source.
inline W1Result w1_with_gradient(std::span<const double> source,
                                 const std::vector<double>& sorted_target) {
  if (source.empty() || sorted_target.empty()) {
    throw Error(ErrorKind::kTooFewSamples, "W1 of an empty sample");
  }
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return source[i] < source[j]; });
  const std::size_t m = std::min(source.size(), sorted_target.size());
  W1Result r;
  r.gradient.assign(source.size(), 0.0);
  double s = 0.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t si = order[quantile_index(j, m, source.size())];
    const double d = source[si] - sorted_target[quantile_index(j, m, sorted_target.size())];
    s += std::abs(d);
    if (d > 0.0) r.gradient[si] += inv_m;
    else if (d < 0.0) r.gradient[si] -= inv_m;
  }
  r.value = s * inv_m;
  return r;
}

// Mean squared difference of two already-normalized image batches.
inline double realism_normalized(std::span<const GrayImage> a, std::span<const GrayImage> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kShapeMismatch, "batch sizes differ");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].width != b[i].width || a[i].height != b[i].height) {
      throw Error(ErrorKind::kShapeMismatch, "image sizes differ in realism term");
    }
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      const double d = a[i].data[k] - b[i].data[k];
      s += d * d;
    }
    n += a[i].size();
  }
  if (n == 0) throw Error(ErrorKind::kTooFewSamples, "empty realism batch");
  return s / static_cast<double>(n);
}

// TIFs on the 16-bit scale against decompressed developments on the 8-bit
// scale.
inline double realism_loss(std::span<const GrayImage> tif_batch,
                           std::span<const GrayImage> developed) {
  std::vector<GrayImage> a(tif_batch.begin(), tif_batch.end());
  std::vector<GrayImage> b(developed.begin(), developed.end());
  for (auto& img : a) for (double& v : img.data) v /= 65535.0;
  for (auto& img : b) for (double& v : img.data) v /= 255.0;
  return realism_normalized(a, b);
}

struct LossWeights {
  double lambda_cov = 1.0;
  double mu_dist = 1.0;
  double gamma_real = 1.0;
  // First-batch raw term values; frozen once set.
  std::optional<std::array<double, 3>> normalizers;

  void validate() const {
    for (double w : {lambda_cov, mu_dist, gamma_real}) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::kConfig, "loss weights must be finite and nonnegative");
      }
    }
  }
};

inline constexpr double kNormalizerFloor = 1e-12;

struct LossBreakdown {
  double cov = 0.0;      // raw terms
  double w1 = 0.0;
  double realism = 0.0;
  double cov_term = 0.0; // weighted and normalized
  double w1_term = 0.0;
  double realism_term = 0.0;
  double total = 0.0;
};

// Freezes the normalizers on first use, then combines the raw terms.
inline LossBreakdown combine_terms(double cov, double w1, double realism, LossWeights& w) {
  if (!w.normalizers) {
    w.normalizers = std::array<double, 3>{std::max(cov, kNormalizerFloor),
                                          std::max(w1, kNormalizerFloor),
                                          std::max(realism, kNormalizerFloor)};
  }
  const auto& eta = *w.normalizers;
  LossBreakdown b;
  b.cov = cov;
  b.w1 = w1;
  b.realism = realism;
  b.cov_term = w.lambda_cov * cov / eta[0];
  b.w1_term = w.mu_dist * w1 / eta[1];
  b.realism_term = w.gamma_real * realism / eta[2];
  b.total = b.cov_term + b.w1_term + b.realism_term;
  return b;
}

// Target-side statistics, computed once since the target never moves.
struct TargetStats {
  CovStats cov;
  std::vector<double> sorted_values;
  std::size_t patch_count = 0;
};

inline TargetStats make_target_stats(const PatchSet& target) {
  TargetStats t;
  t.cov = cov_stats(target);
  t.sorted_values = pooled_values(target);
  std::sort(t.sorted_values.begin(), t.sorted_values.end());
  t.patch_count = target.size();
  return t;
}

inline LossBreakdown total_loss(const PatchSet& src_patches, const PatchSet& tgt_patches,
                                std::span<const GrayImage> tif_batch,
                                std::span<const GrayImage> developed, LossWeights& w) {
  const double cov = cov_loss(cov_stats(src_patches), cov_stats(tgt_patches));
  const double w1 = w1_loss(src_patches, tgt_patches);
  const double realism = realism_loss(tif_batch, developed);
  return combine_terms(cov, w1, realism, w);
}

struct Evaluation {
  double value = 0.0;
  std::vector<double> gradient;
  std::vector<std::pair<std::string, double>> terms;
};

// Gradient of a differentiable closure returning an Evaluation. Rejects
// non-finite results, naming the offending term.
template <typename Closure>
std::vector<double> loss_gradient(std::span<const double> params, Closure&& closure) {
  Evaluation e = closure(params);
  for (const auto& [name, value] : e.terms) {
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kNonFinite, "loss term '" + name + "' is not finite");
    }
  }
  if (!std::isfinite(e.value)) throw Error(ErrorKind::kNonFinite, "loss 'total' is not finite");
  if (e.gradient.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "gradient length differs from parameter count");
  }
  for (std::size_t i = 0; i < e.gradient.size(); ++i) {
    if (!std::isfinite(e.gradient[i])) {
      throw Error(ErrorKind::kNonFinite, "gradient coordinate " + std::to_string(i) + " is not finite");
    }
  }
  return e.gradient;
}

}  // namespace tada
