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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tada/emulator.hpp"
#include "tada/errors.hpp"
#include "tada/jpeg.hpp"
#include "tada/loss.hpp"
#include "tada/parallel.hpp"
#include "tada/residual.hpp"

namespace tada {

// Free parameters of a pipeline as one flat vector: kernel orbit weights,
// then the three mixer weights when a mixer is present.
inline std::vector<double> pack_params(const EmulatorPipeline& p) {
  std::vector<double> v = p.kernel.classes();
  if (p.mixer) v.insert(v.end(), p.mixer->w.begin(), p.mixer->w.end());
  return v;
}

inline EmulatorPipeline unpack_params(std::span<const double> params,
                                      const EmulatorPipeline& shape) {
  EmulatorPipeline p = shape;
  const std::size_t k = p.kernel.classes().size();
  const std::size_t expect = k + (p.mixer ? 3 : 0);
  if (params.size() != expect) {
    throw Error(ErrorKind::kShapeMismatch, "parameter vector has wrong length");
  }
  p.kernel = SymmetricKernel(p.kernel.size(), std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(k)));
  if (p.mixer) p.mixer = ChannelMixer{{params[k], params[k + 1], params[k + 2]}};
  return p;
}

// Forward pass of one source image through the emulated pipeline together
// with the tangent of every intermediate w.r.t. each free parameter.
struct ItemForward {
  std::size_t patch_count = 0;
  std::size_t patches_considered = 0;
  std::vector<double> patch_values;    // patch_count x kPatchDim
  std::vector<double> patch_tangents;  // param x patch_count x kPatchDim
  double realism_sum = 0.0;            // sum over pixels of (ref - pix)^2, 8-bit scale
  std::size_t pixel_count = 0;
  std::vector<double> realism_dot;     // per param: sum (pix - ref)(dpix - dref)
};

namespace detail {

inline GrayImage developed_pixels(const GrayImage& convolved, const QuantTable& table,
                                  RoundingScheme scheme,
                                  std::span<const GrayImage> tangent_in,
                                  std::vector<GrayImage>* tangent_out) {
  const int bw = convolved.width / 8;
  const int bh = convolved.height / 8;
  GrayImage pix(convolved.width, convolved.height, BitDepth::kReal);
  if (tangent_out) {
    tangent_out->assign(tangent_in.size(), GrayImage(convolved.width, convolved.height));
  }
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      const Block8 y = scaled_coefficients(convolved, bx, by, table);
      Block8 z{};
      for (int k = 0; k < 64; ++k) z[k] = approx_round(y[k], scheme) * table[k];
      Block8 b = dct8x8_inverse(z);
      for (double& v : b) {
        v += 128.0;
        if (scheme == RoundingScheme::kExact) v = std::clamp(v, 0.0, 255.0);
      }
      store_block(pix, bx, by, b);
      if (!tangent_out) continue;
      Block8 slope{};
      for (int k = 0; k < 64; ++k) slope[k] = approx_round_derivative(y[k], scheme);
      for (std::size_t p = 0; p < tangent_in.size(); ++p) {
        Block8 dy = dct8x8_forward(load_block(tangent_in[p], bx, by));
        for (int k = 0; k < 64; ++k) dy[k] *= slope[k];  // (d/q) * r' * q
        store_block((*tangent_out)[p], bx, by, dct8x8_inverse(dy));
      }
    }
  }
  return pix;
}

}  // namespace detail

inline ItemForward forward_item(const SourceImage& image, const EmulatorPipeline& pipeline,
                                double std_min, bool with_tangents) {
  const GrayImage ref = to_eight_bit_scale(image, pipeline.mixer);
  require_aligned(ref.width, ref.height);
  const GrayImage convolved = convolve(ref, pipeline.kernel);

  const std::size_t n_classes = pipeline.kernel.classes().size();
  const std::size_t n_params = n_classes + (pipeline.mixer ? 3 : 0);
  std::vector<GrayImage> tangent_in;
  std::vector<GrayImage> ref_tangent;  // only for mixer params
  if (with_tangents) {
    tangent_in.reserve(n_params);
    for (std::size_t k = 0; k < n_classes; ++k) {
      const auto basis = pipeline.kernel.class_basis(k);
      tangent_in.push_back(convolve_mirror(ref, basis, pipeline.kernel.size()));
    }
    if (pipeline.mixer) {
      const auto& rgb = std::get<RgbImage>(image);
      for (int c = 0; c < 3; ++c) {
        GrayImage plane = rgb.planes[c].as_real();
        for (double& v : plane.data) v /= 257.0;
        tangent_in.push_back(convolve(plane, pipeline.kernel));
        ref_tangent.push_back(std::move(plane));
      }
    }
  }

  std::vector<GrayImage> pix_tangent;
  const GrayImage pix = detail::developed_pixels(convolved, pipeline.table, pipeline.scheme,
                                                 tangent_in, with_tangents ? &pix_tangent : nullptr);
  tangent_in.clear();

  ItemForward out;
  out.pixel_count = pix.size();
  for (std::size_t i = 0; i < pix.size(); ++i) {
    const double d = ref.data[i] - pix.data[i];
    out.realism_sum += d * d;
  }
  if (with_tangents) {
    out.realism_dot.assign(n_params, 0.0);
    for (std::size_t p = 0; p < n_params; ++p) {
      const GrayImage* dref = p >= n_classes ? &ref_tangent[p - n_classes] : nullptr;
      double s = 0.0;
      for (std::size_t i = 0; i < pix.size(); ++i) {
        const double dd = pix_tangent[p].data[i] - (dref ? dref->data[i] : 0.0);
        s += (pix.data[i] - ref.data[i]) * dd;
      }
      out.realism_dot[p] = s;
    }
  }

  const GrayImage residual = kb_residual(pix);
  std::vector<GrayImage> residual_tangent;
  for (const auto& t : pix_tangent) residual_tangent.push_back(kb_residual(t));

  const int bw = pix.width / 8;
  const int bh = pix.height / 8;
  std::vector<std::pair<int, int>> kept;
  for (int br = 0; br < bh; ++br) {
    for (int bc = 0; bc + 1 < bw; bc += 2) {
      ++out.patches_considered;
      if (patch_std(pix, br, bc) > std_min) kept.emplace_back(br, bc);
    }
  }
  out.patch_count = kept.size();
  out.patch_values.resize(kept.size() * kPatchDim);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    copy_patch(residual, kept[i].first, kept[i].second,
               std::span<double, kPatchDim>(out.patch_values.data() + i * kPatchDim, kPatchDim));
  }
  if (with_tangents) {
    out.patch_tangents.resize(n_params * kept.size() * kPatchDim);
    for (std::size_t p = 0; p < n_params; ++p) {
      for (std::size_t i = 0; i < kept.size(); ++i) {
        double* dst = out.patch_tangents.data() + (p * kept.size() + i) * kPatchDim;
        copy_patch(residual_tangent[p], kept[i].first, kept[i].second,
                   std::span<double, kPatchDim>(dst, kPatchDim));
      }
    }
  }
  return out;
}

inline std::vector<ItemForward> forward_items(std::span<const SourceImage> images,
                                              const EmulatorPipeline& pipeline, double std_min,
                                              bool with_tangents) {
  std::vector<ItemForward> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    out[i] = forward_item(images[i], pipeline, std_min, with_tangents);
  });
  return out;
}

struct BatchResult {
  LossBreakdown breakdown;
  std::vector<double> gradient;  // empty unless tangents were computed
  std::size_t patch_count = 0;
};

// Combines per-item forwards into the triplet loss (and its gradient when the
// forwards carry tangents). Reductions run in item order.
inline BatchResult reduce_batch(std::span<const ItemForward> items, const TargetStats& target,
                                LossWeights& weights) {
  std::size_t n = 0;
  std::size_t pixels = 0;
  double realism_sum = 0.0;
  for (const auto& it : items) {
    n += it.patch_count;
    pixels += it.pixel_count;
    realism_sum += it.realism_sum;
  }
  if (n < 2) {
    throw Error(ErrorKind::kTooFewSamples,
                "batch kept " + std::to_string(n) + " source patches, need at least 2");
  }
  RowMatrix x(static_cast<Eigen::Index>(n), kPatchDim);
  {
    std::size_t row = 0;
    for (const auto& it : items) {
      std::copy(it.patch_values.begin(), it.patch_values.end(),
                x.data() + row * kPatchDim);
      row += it.patch_count;
    }
  }
  const CovStats src = cov_stats(x);
  const double cov = cov_loss(src, target.cov);
  const W1Result w1 = w1_with_gradient(std::span<const double>(x.data(), n * kPatchDim),
                                       target.sorted_values);
  const double realism = realism_sum / (static_cast<double>(pixels) * 255.0 * 255.0);

  BatchResult r;
  r.patch_count = n;
  r.breakdown = combine_terms(cov, w1.value, realism, weights);
  const bool with_grad = !items.empty() && !items.front().realism_dot.empty();
  if (!with_grad) return r;

  const auto& eta = *weights.normalizers;
  RowMatrix g = (weights.lambda_cov / eta[0]) * cov_loss_gradient(x, src, target.cov);
  const double w1_scale = weights.mu_dist / eta[1];
  for (std::size_t i = 0; i < n * kPatchDim; ++i) g.data()[i] += w1_scale * w1.gradient[i];

  const std::size_t n_params = items.front().realism_dot.size();
  r.gradient.assign(n_params, 0.0);
  const double realism_scale =
      weights.gamma_real / eta[2] * 2.0 / (static_cast<double>(pixels) * 255.0 * 255.0);
  std::size_t row = 0;
  for (const auto& it : items) {
    for (std::size_t p = 0; p < n_params; ++p) {
      const double* t = it.patch_tangents.data() + p * it.patch_count * kPatchDim;
      const double* gp = g.data() + row * kPatchDim;
      double s = 0.0;
      for (std::size_t i = 0; i < it.patch_count * kPatchDim; ++i) s += gp[i] * t[i];
      r.gradient[p] += s + realism_scale * it.realism_dot[p];
    }
    row += it.patch_count;
  }
  return r;
}

// The full training objective as a closure over the free parameters, for
// gradient checks and generic optimizers.
class TadaClosure {
 public:
  TadaClosure(std::vector<SourceImage> batch, EmulatorPipeline shape, TargetStats target,
              LossWeights weights, double std_min)
      : batch_(std::move(batch)),
        shape_(std::move(shape)),
        target_(std::move(target)),
        weights_(std::move(weights)),
        std_min_(std_min) {}

  Evaluation operator()(std::span<const double> params) {
    const EmulatorPipeline p = unpack_params(params, shape_);
    const auto fwd = forward_items(batch_, p, std_min_, true);
    const BatchResult r = reduce_batch(fwd, target_, weights_);
    Evaluation e;
    e.value = r.breakdown.total;
    e.gradient = r.gradient;
    e.terms = {{"cov", r.breakdown.cov_term},
               {"w1", r.breakdown.w1_term},
               {"realism", r.breakdown.realism_term}};
    return e;
  }

  double value(std::span<const double> params) {
    const EmulatorPipeline p = unpack_params(params, shape_);
    const auto fwd = forward_items(batch_, p, std_min_, false);
    return reduce_batch(fwd, target_, weights_).breakdown.total;
  }

  const LossWeights& weights() const { return weights_; }

 private:
  std::vector<SourceImage> batch_;
  EmulatorPipeline shape_;
  TargetStats target_;
  LossWeights weights_;
  double std_min_;
};

}  // namespace tada
