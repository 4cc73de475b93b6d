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
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tada/errors.hpp"
#include "tada/jpeg.hpp"
#include "tada/parallel.hpp"
#include "tada/trainer.hpp"

namespace tada {

struct DctrConfig {
  double q_quant = 0.0;  // <= 0 means max(1, mean table step / 4)
  int t_trunc = 4;
  bool reduced = true;   // 16 lowest-frequency bases instead of 64

  int bases_per_axis() const { return reduced ? 4 : 8; }
};

inline constexpr int kFoldedPhases = 25;

struct FeatureVector {
  std::vector<double> values;
  std::string spec_id;
};

// FNV-1a over the configuration that determines the feature layout and scale.
inline std::string dctr_spec_id(const DctrConfig& cfg, double q_effective) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "dctr-v1|b=%d|q=%.17g|T=%d", cfg.bases_per_axis(), q_effective,
                cfg.t_trunc);
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* p = buf; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::size_t dctr_dimension(const DctrConfig& cfg) {
  const auto b = static_cast<std::size_t>(cfg.bases_per_axis());
  return b * b * kFoldedPhases * static_cast<std::size_t>(cfg.t_trunc + 1);
}

// Phase a in [0, 8) and 8 - a see mirrored basis windows; fold to [0, 4].
inline int fold_phase(int a) { return std::min(a, (8 - a) % 8); }

inline FeatureVector dctr_features(const JpegPlane& plane, const DctrConfig& cfg = {}) {
  if (plane.mode != PlaneMode::kExact) {
    throw Error(ErrorKind::kNotExact, "features need an exact plane");
  }
  if (cfg.t_trunc < 0) throw Error(ErrorKind::kOutOfRange, "T must be >= 0");
  const double q =
      cfg.q_quant > 0.0 ? cfg.q_quant : std::max(1.0, plane.table.mean_step() / 4.0);
  const GrayImage px = decompress_unclamped(plane);
  const int w = px.width;
  const int h = px.height;
  const int ow = w - 7;
  const int oh = h - 7;
  const int nb = cfg.bases_per_axis();
  const int bins = cfg.t_trunc + 1;
  const auto& c = detail::dct_basis().c;

  // Row pass: horizontal window DCT for every basis column index l.
  std::vector<double> rows(static_cast<std::size_t>(nb) * h * ow);
  for (int l = 0; l < nb; ++l) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int n = 0; n < 8; ++n) s += c[l * 8 + n] * px.at(x + n, y);
        rows[(static_cast<std::size_t>(l) * h + y) * ow + x] = s;
      }
    }
  }

  std::vector<double> hist(dctr_dimension(cfg), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(nb) * nb * kFoldedPhases, 0.0);
  for (int k = 0; k < nb; ++k) {
    for (int l = 0; l < nb; ++l) {
      const std::size_t basis = static_cast<std::size_t>(k) * nb + l;
      const double* r = &rows[static_cast<std::size_t>(l) * h * ow];
      for (int y = 0; y < oh; ++y) {
        const int fy = fold_phase(y % 8);
        for (int x = 0; x < ow; ++x) {
          double u = 0.0;
          for (int m = 0; m < 8; ++m) u += c[k * 8 + m] * r[static_cast<std::size_t>(y + m) * ow + x];
          const double v = std::min(std::abs(std::round(u / q)), static_cast<double>(cfg.t_trunc));
          const std::size_t cell = basis * kFoldedPhases + static_cast<std::size_t>(fy * 5 + fold_phase(x % 8));
          hist[cell * bins + static_cast<std::size_t>(v)] += 1.0;
          counts[cell] += 1.0;
        }
      }
    }
  }
  for (std::size_t cell = 0; cell < counts.size(); ++cell) {
    if (counts[cell] == 0.0) continue;
    for (int b = 0; b < bins; ++b) hist[cell * bins + b] /= counts[cell];
  }
  return FeatureVector{std::move(hist), dctr_spec_id(cfg, q)};
}

struct LabeledFeatures {
  std::vector<FeatureVector> x;
  std::vector<int> y;  // 1 = stego

  std::size_t size() const { return x.size(); }
};

inline LabeledFeatures featurize(const PairedSet& set, std::size_t begin, std::size_t end,
                                 const DctrConfig& cfg) {
  if (begin > end || end > set.size()) {
    throw Error(ErrorKind::kOutOfRange, "pair range out of bounds");
  }
  const std::size_t n = end - begin;
  LabeledFeatures out;
  out.x.resize(2 * n);
  out.y.resize(2 * n);
  parallel_for(2 * n, [&](std::size_t i) {
    const std::size_t pair = begin + i / 2;
    const bool stego = i % 2 == 1;
    out.x[i] = dctr_features(stego ? set.stegos[pair] : set.covers[pair], cfg);
    out.y[i] = stego ? 1 : 0;
  });
  return out;
}

inline std::string features_to_csv(const LabeledFeatures& f) {
  std::string out = "label";
  const std::size_t d = f.x.empty() ? 0 : f.x.front().values.size();
  for (std::size_t j = 0; j < d; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  char buf[40];
  for (std::size_t i = 0; i < f.size(); ++i) {
    out += std::to_string(f.y[i]);
    for (double v : f.x[i].values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline void require_both_classes(std::span<const int> y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw Error(ErrorKind::kSingleClass, "labels contain a single class");
  }
}

inline const std::string& common_spec(const LabeledFeatures& f) {
  if (f.size() == 0) throw Error(ErrorKind::kTooFewSamples, "no feature vectors");
  const std::string& id = f.x.front().spec_id;
  const std::size_t d = f.x.front().values.size();
  for (const auto& v : f.x) {
    if (v.spec_id != id || v.values.size() != d) {
      throw Error(ErrorKind::kSpecMismatch, "feature vectors come from different configurations");
    }
  }
  return id;
}

}  // namespace detail

struct DetectorConfig {
  double reg = 1e-2;
  int iters = 500;
  double lr = 1.0;  // multiple of 1/L, L the smoothness constant of the objective
};

struct Detector {
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::string spec_id;
  std::string train_meta;

  double score(const FeatureVector& f) const {
    if (f.spec_id != spec_id) {
      throw Error(ErrorKind::kSpecMismatch, "feature spec differs from detector spec");
    }
    const Eigen::Map<const Eigen::VectorXd> v(f.values.data(), static_cast<Eigen::Index>(f.values.size()));
    return ((v - mean).cwiseQuotient(scale)).dot(weights) + bias;
  }
};

inline double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

// Standardized l2-regularized logistic regression, full-batch gradient
// descent from zero.
inline Detector train_detector(const LabeledFeatures& data, const DetectorConfig& cfg = {},
                               std::string meta = {}) {
  detail::require_both_classes(data.y);
  const std::string spec = detail::common_spec(data);
  if (cfg.reg < 0.0 || cfg.iters < 0 || !(cfg.lr > 0.0)) {
    throw Error(ErrorKind::kConfig, "detector needs reg >= 0, iters >= 0, lr > 0");
  }
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(data.x.front().values.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(data.x[static_cast<std::size_t>(i)].values.data(), d);
  }
  Detector det;
  det.spec_id = spec;
  det.train_meta = std::move(meta);
  det.mean = x.colwise().mean().transpose();
  x.rowwise() -= det.mean.transpose();
  det.scale = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (det.scale[j] <= 1e-12) det.scale[j] = 1.0;
  }
  x = x * det.scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = data.y[static_cast<std::size_t>(i)];

  // Power iteration for the largest eigenvalue of [X 1]^T [X 1] / n.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1) / std::sqrt(static_cast<double>(d + 1));
  double top = 1.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd xv = x * v.head(d) + Eigen::VectorXd::Constant(n, v[d]);
    Eigen::VectorXd next(d + 1);
    next.head(d) = x.transpose() * xv / static_cast<double>(n);
    next[d] = xv.sum() / static_cast<double>(n);
    top = next.norm();
    if (top == 0.0) break;
    v = next / top;
  }
  const double step = cfg.lr / (top / 4.0 + cfg.reg);

  det.weights = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < cfg.iters; ++it) {
    Eigen::VectorXd r(n);
    const Eigen::VectorXd s = x * det.weights;
    for (Eigen::Index i = 0; i < n; ++i) r[i] = sigmoid(s[i] + det.bias) - y[i];
    const Eigen::VectorXd gw = x.transpose() * r / static_cast<double>(n) + cfg.reg * det.weights;
    const double gb = r.sum() / static_cast<double>(n);
    det.weights -= step * gw;
    det.bias -= step * gb;
  }
  return det;
}

// min over thresholds of (P_FA + P_MD) / 2; thresholds at every midpoint
// between distinct scores plus both extremes.
inline double probability_of_error(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "scores and labels differ in length");
  }
  detail::require_both_classes(labels);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0;
  for (int l : labels) pos += l;
  const double neg = static_cast<double>(labels.size()) - pos;
  // Threshold below everything: all called stego.
  double fa = neg;
  double md = 0.0;
  double best = 0.5 * (fa / neg + md / pos);
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == s; ++i) {
      if (labels[idx[i]] == 1) {
        md += 1.0;
      } else {
        fa -= 1.0;
      }
    }
    best = std::min(best, 0.5 * (fa / neg + md / pos));
  }
  return best;
}

inline double probability_of_error(const Detector& det, const LabeledFeatures& data) {
  std::vector<double> scores(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) scores[i] = det.score(data.x[i]);
  return probability_of_error(scores, data.y);
}

struct RegretReport {
  double pe_source_on_target = 0.0;
  double pe_target_on_target = 0.0;
  double regret = 0.0;
};

inline nlohmann::json to_json(const RegretReport& r) {
  return {{"pe_source_on_target", r.pe_source_on_target},
          {"pe_target_on_target", r.pe_target_on_target},
          {"regret", r.regret}};
}

struct SplitFeatures {
  LabeledFeatures train;
  LabeledFeatures eval;
};

inline RegretReport regret(const SplitFeatures& source, const SplitFeatures& target,
                           const DetectorConfig& cfg = {}) {
  const Detector src = train_detector(source.train, cfg, "source");
  const Detector tgt = train_detector(target.train, cfg, "target");
  RegretReport r;
  r.pe_source_on_target = probability_of_error(src, target.eval);
  r.pe_target_on_target = probability_of_error(tgt, target.eval);
  r.regret = r.pe_source_on_target - r.pe_target_on_target;
  return r;
}

namespace detail {

inline Eigen::MatrixXd principal_subspace(const LabeledFeatures& f, int k) {
  const auto n = static_cast<Eigen::Index>(f.size());
  const auto d = static_cast<Eigen::Index>(f.x.front().values.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(f.x[static_cast<std::size_t>(i)].values.data(), d);
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::RowVectorXd sd = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (sd[j] <= 1e-12) sd[j] = 1.0;
  }
  x = x * sd.cwiseInverse().asDiagonal();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s.size() < k || s[k - 1] <= 1e-10 * std::max(s[0], 1e-300)) {
    throw Error(ErrorKind::kRankDeficient,
                "feature matrix has rank below " + std::to_string(k));
  }
  return svd.matrixV().leftCols(k);
}

}  // namespace detail

// sqrt(k - ||U_s^T U_t||_F^2) between the top-k PCA subspaces.
inline double chordal_diagnostic(const LabeledFeatures& src, const LabeledFeatures& tgt, int k) {
  if (k < 1) throw Error(ErrorKind::kOutOfRange, "k must be >= 1");
  if (src.size() <= static_cast<std::size_t>(k) || tgt.size() <= static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kTooFewSamples, "need more samples than the subspace dimension");
  }
  if (detail::common_spec(src) != detail::common_spec(tgt) ||
      src.x.front().values.size() != tgt.x.front().values.size()) {
    throw Error(ErrorKind::kSpecMismatch, "feature sets come from different configurations");
  }
  const Eigen::MatrixXd us = detail::principal_subspace(src, k);
  const Eigen::MatrixXd ut = detail::principal_subspace(tgt, k);
  const double overlap = (us.transpose() * ut).squaredNorm();
  return std::sqrt(std::max(0.0, static_cast<double>(k) - overlap));
}

}  // namespace tada
