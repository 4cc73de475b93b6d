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
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "tada/errors.hpp"
#include "tada/jpeg.hpp"
#include "tada/random.hpp"
#include "tada/residual.hpp"

namespace tada {

enum class EmbeddingScheme { kUerd };

struct EmbeddingConfig {
  EmbeddingScheme scheme = EmbeddingScheme::kUerd;
  double payload_bpnzac = 1.0;
  std::uint64_t seed = 2026;

  void validate() const {
    if (!(payload_bpnzac > 0.0) || payload_bpnzac > std::log2(3.0)) {
      throw Error(ErrorKind::kOutOfRange,
                  "payload must lie in (0, log2 3] bpnzac, got " + std::to_string(payload_bpnzac));
    }
  }
};

// Same layout as JpegPlane::coeffs.
struct CostMap {
  int width = 0;
  int height = 0;
  std::vector<double> rho;
  std::vector<std::uint8_t> wet;

  std::size_t size() const { return rho.size(); }
};

struct ProbabilityMap {
  int width = 0;
  int height = 0;
  std::vector<double> beta;  // probability of +1 (equal to that of -1)
  double lambda = 0.0;

  bool operator==(const ProbabilityMap&) const = default;
};

inline double ternary_entropy(double beta) {
  if (beta <= 0.0) return 0.0;
  const double rest = 1.0 - 2.0 * beta;
  double h = -2.0 * beta * std::log2(beta);
  if (rest > 0.0) h -= rest * std::log1p(-2.0 * beta) / std::numbers::ln2;
  return h;
}

inline void require_exact(const JpegPlane& plane) {
  if (plane.mode != PlaneMode::kExact) {
    throw Error(ErrorKind::kNotExact, "operation requires an exact (integral) plane");
  }
}

// UERD: block energy from dequantized AC magnitudes, pooled with a quarter of
// the 4-neighbour energies; AC cost q / pooled, DC cost uses the mean AC step.
inline CostMap uerd_costs(const JpegPlane& plane) {
  require_exact(plane);
  plane.validate();
  const int bw = plane.blocks_wide();
  const int bh = plane.blocks_high();
  std::vector<double> energy(plane.block_count(), 0.0);
  for (std::size_t b = 0; b < plane.block_count(); ++b) {
    double e = 0.0;
    for (int k = 1; k < 64; ++k) e += std::abs(plane.coeff(b, k)) * plane.table[k];
    energy[b] = e;
  }
  CostMap costs;
  costs.width = plane.width;
  costs.height = plane.height;
  costs.rho.assign(plane.coeffs.size(), 0.0);
  costs.wet.assign(plane.coeffs.size(), 0);
  const double dc_step = plane.table.mean_ac_step();
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      const std::size_t b = static_cast<std::size_t>(by) * bw + bx;
      double neighbours = 0.0;
      if (bx > 0) neighbours += energy[b - 1];
      if (bx + 1 < bw) neighbours += energy[b + 1];
      if (by > 0) neighbours += energy[b - static_cast<std::size_t>(bw)];
      if (by + 1 < bh) neighbours += energy[b + static_cast<std::size_t>(bw)];
      const double pooled = energy[b] + 0.25 * neighbours;
      for (int k = 0; k < 64; ++k) {
        const std::size_t i = b * 64 + static_cast<std::size_t>(k);
        if (pooled <= 0.0) {
          costs.wet[i] = 1;
          costs.rho[i] = std::numeric_limits<double>::infinity();
        } else {
          costs.rho[i] = (k == 0 ? dc_step : plane.table[k]) / pooled;
        }
      }
    }
  }
  return costs;
}

namespace detail {

inline double change_probability(double lambda, double rho) {
  const double e = std::exp(-lambda * rho);
  return e / (1.0 + 2.0 * e);
}

inline double total_entropy(const CostMap& costs, double lambda) {
  double h = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!costs.wet[i]) h += ternary_entropy(change_probability(lambda, costs.rho[i]));
  }
  return h;
}

}  // namespace detail

inline constexpr double kLambdaMax = 1e4;

// Finds the multiplier whose ternary change probabilities carry exactly the
// requested number of bits.
inline ProbabilityMap solve_lambda(const CostMap& costs, double payload_bits) {
  ProbabilityMap map;
  map.width = costs.width;
  map.height = costs.height;
  map.beta.assign(costs.size(), 0.0);
  if (!(payload_bits >= 0.0)) {
    throw Error(ErrorKind::kOutOfRange, "negative payload");
  }
  if (payload_bits == 0.0) {
    map.lambda = std::numeric_limits<double>::infinity();
    return map;
  }
  std::size_t dry = 0;
  for (auto w : costs.wet) dry += !w;
  const double capacity = static_cast<double>(dry) * std::log2(3.0);
  const double tol = 1e-6 * payload_bits;
  if (payload_bits > capacity + tol) {
    throw Error(ErrorKind::kCapacity,
                "payload " + std::to_string(payload_bits) + " bits exceeds capacity " +
                    std::to_string(capacity));
  }
  double lambda = 0.0;
  if (std::abs(detail::total_entropy(costs, 0.0) - payload_bits) > tol) {
    double lo = 0.0;
    double hi = kLambdaMax;
    if (detail::total_entropy(costs, hi) > payload_bits) {
      throw Error(ErrorKind::kSolverFailure,
                  "lambda bracket [0, 1e4] does not reach the payload");
    }
    for (int it = 0; it < 200; ++it) {
      lambda = 0.5 * (lo + hi);
      const double h = detail::total_entropy(costs, lambda);
      if (std::abs(h - payload_bits) <= 1e-3 * tol) break;
      if (h > payload_bits) lo = lambda; else hi = lambda;
    }
    if (std::abs(detail::total_entropy(costs, lambda) - payload_bits) > tol) {
      throw Error(ErrorKind::kSolverFailure, "bisection did not converge");
    }
  }
  map.lambda = lambda;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!costs.wet[i]) map.beta[i] = detail::change_probability(lambda, costs.rho[i]);
  }
  return map;
}

// Simulated optimal ternary embedding: each coefficient moves by +1 or -1 with
// probability beta each.
inline JpegPlane embed(const JpegPlane& plane, const ProbabilityMap& probs, std::uint64_t seed) {
  require_exact(plane);
  if (probs.beta.size() != plane.coeffs.size()) {
    throw Error(ErrorKind::kShapeMismatch, "probability map does not match plane");
  }
  JpegPlane out = plane;
  Rng rng(seed);
  for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
    const double b = probs.beta[i];
    if (b <= 0.0) continue;
    const double u = rng.uniform();
    if (u < b) {
      out.coeffs[i] += 1.0;
    } else if (u < 2.0 * b) {
      out.coeffs[i] -= 1.0;
    }
  }
  return out;
}

inline ProbabilityMap probmap_for_target(const JpegPlane& plane, const EmbeddingConfig& cfg) {
  cfg.validate();
  const CostMap costs = uerd_costs(plane);
  const double payload = cfg.payload_bpnzac * static_cast<double>(plane.nonzero_ac_count());
  return solve_lambda(costs, payload);
}

inline double achieved_entropy(const ProbabilityMap& probs) {
  double h = 0.0;
  for (double b : probs.beta) h += ternary_entropy(b);
  return h;
}

inline BlockProbGrid block_max_probability(const ProbabilityMap& probs) {
  BlockProbGrid grid;
  grid.blocks_wide = probs.width / 8;
  grid.blocks_high = probs.height / 8;
  grid.max_prob.assign(static_cast<std::size_t>(grid.blocks_wide) * grid.blocks_high, 0.0);
  for (std::size_t b = 0; b < grid.max_prob.size(); ++b) {
    double m = 0.0;
    for (int k = 0; k < 64; ++k) m = std::max(m, probs.beta[b * 64 + static_cast<std::size_t>(k)]);
    grid.max_prob[b] = m;
  }
  return grid;
}

inline PatchSet extract_patches(const GrayImage& residual, const GrayImage& pixel_img,
                                const ProbabilityMap& probs, std::string source_tag = {}) {
  const BlockProbGrid grid = block_max_probability(probs);
  return extract_patches(residual, pixel_img, &grid, std::move(source_tag));
}

// "PMB1" archive: dims (u32 LE), lambda (f64), then per block 64 betas (f64,
// zigzag order), blocks in raster order.
inline std::vector<std::uint8_t> encode_probability_archive(const ProbabilityMap& probs) {
  std::vector<std::uint8_t> out = {'P', 'M', 'B', '1'};
  detail::put_u32(out, static_cast<std::uint32_t>(probs.width));
  detail::put_u32(out, static_cast<std::uint32_t>(probs.height));
  detail::put_f64(out, probs.lambda);
  const std::size_t blocks = probs.beta.size() / 64;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (int k = 0; k < 64; ++k) detail::put_f64(out, probs.beta[b * 64 + static_cast<std::size_t>(kZigzag[k])]);
  }
  return out;
}

inline ProbabilityMap decode_probability_archive(const std::vector<std::uint8_t>& buf) {
  detail::ByteReader in(buf);
  in.magic("PMB1");
  ProbabilityMap probs;
  probs.width = static_cast<int>(in.u32());
  probs.height = static_cast<int>(in.u32());
  require_aligned(probs.width, probs.height);
  probs.lambda = in.f64();
  const std::size_t blocks = static_cast<std::size_t>(probs.width / 8) * (probs.height / 8);
  probs.beta.assign(blocks * 64, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (int k = 0; k < 64; ++k) probs.beta[b * 64 + static_cast<std::size_t>(kZigzag[k])] = in.f64();
  }
  if (!in.at_end()) throw Error(ErrorKind::kMalformedHeader, "trailing bytes in archive");
  return probs;
}

inline void write_probability_archive(const ProbabilityMap& probs,
                                      const std::filesystem::path& path) {
  write_file_bytes(path, encode_probability_archive(probs));
}

inline ProbabilityMap read_probability_archive(const std::filesystem::path& path) {
  return decode_probability_archive(read_file_bytes(path));
}

}  // namespace tada
