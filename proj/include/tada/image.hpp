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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tada/errors.hpp"
#include "tada/random.hpp"

namespace tada {

enum class BitDepth { k8, k16, kReal };

inline double max_value(BitDepth depth) {
  switch (depth) {
    case BitDepth::k8: return 255.0;
    case BitDepth::k16: return 65535.0;
    case BitDepth::kReal: return INFINITY;
  }
  return INFINITY;
}

// Row-major scalar raster. Integral depths store integral values in [0, max];
// real-valued images are unconstrained and used between pipeline stages.
struct GrayImage {
  int width = 0;
  int height = 0;
  BitDepth depth = BitDepth::kReal;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, BitDepth d = BitDepth::kReal, double fill = 0.0)
      : width(w), height(h), depth(d),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0) {
      throw Error(ErrorKind::kOutOfRange, "negative image dimensions");
    }
  }
  GrayImage(int w, int h, BitDepth d, std::vector<double> values)
      : width(w), height(h), depth(d), data(std::move(values)) {
    validate();
  }

  std::size_t size() const { return data.size(); }
  double& at(int x, int y) { return data[index(x, y)]; }
  double at(int x, int y) const { return data[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }

  void validate() const {
    if (data.size() != static_cast<std::size_t>(width) * height) {
      throw Error(ErrorKind::kShapeMismatch,
                  "raster length " + std::to_string(data.size()) +
                      " != " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    if (depth == BitDepth::kReal) return;
    const double hi = max_value(depth);
    for (double v : data) {
      if (!(v >= 0.0 && v <= hi) || v != std::floor(v)) {
        throw Error(ErrorKind::kOutOfRange,
                    "pixel value " + std::to_string(v) +
                        " invalid for integral depth");
      }
    }
  }

  GrayImage as_real() const {
    GrayImage out = *this;
    out.depth = BitDepth::kReal;
    return out;
  }

  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  std::array<GrayImage, 3> planes;

  int width() const { return planes[0].width; }
  int height() const { return planes[0].height; }

  void validate() const {
    for (const auto& p : planes) {
      if (p.width != planes[0].width || p.height != planes[0].height) {
        throw Error(ErrorKind::kShapeMismatch, "RGB planes differ in size");
      }
      p.validate();
    }
  }
};

// Clamps and rounds (half away from zero) into an integral depth.
inline GrayImage quantize(const GrayImage& img, BitDepth depth) {
  if (depth == BitDepth::kReal) return img.as_real();
  GrayImage out(img.width, img.height, depth);
  const double hi = max_value(depth);
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.data[i] = std::clamp(std::round(img.data[i]), 0.0, hi);
  }
  return out;
}

inline GrayImage rotate90(const GrayImage& img, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return img;
  const int w = img.width;
  const int h = img.height;
  const bool swap_dims = (turns % 2) == 1;
  GrayImage out(swap_dims ? h : w, swap_dims ? w : h, img.depth);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int nx = 0;
      int ny = 0;
      switch (turns) {
        case 1: nx = h - 1 - y; ny = x; break;          // clockwise
        case 2: nx = w - 1 - x; ny = h - 1 - y; break;
        case 3: nx = y; ny = w - 1 - x; break;
      }
      out.at(nx, ny) = img.at(x, y);
    }
  }
  return out;
}

inline RgbImage rotate90(const RgbImage& img, int quarter_turns) {
  RgbImage out;
  for (int c = 0; c < 3; ++c) out.planes[c] = rotate90(img.planes[c], quarter_turns);
  return out;
}

// Reflect-101 index: -1 -> 1, n -> n - 2.
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// 2-D convolution of a real image with a square odd-sized kernel given in
// row-major order, mirror boundaries.
inline GrayImage convolve_mirror(const GrayImage& img,
                                 std::span<const double> kernel, int size) {
  const int r = size / 2;
  const int w = img.width;
  const int h = img.height;
  if (w <= r || h <= r) {
    throw Error(ErrorKind::kShapeMismatch, "image smaller than kernel");
  }
  const int pw = w + 2 * r;
  const int ph = h + 2 * r;
  std::vector<double> pad(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = mirror_index(y - r, h);
    for (int x = 0; x < pw; ++x) {
      pad[static_cast<std::size_t>(y) * pw + x] = img.at(mirror_index(x - r, w), sy);
    }
  }
  GrayImage out(w, h, BitDepth::kReal);
  for (int y = 0; y < h; ++y) {
    double* dst = &out.data[static_cast<std::size_t>(y) * w];
    for (int i = 0; i < size; ++i) {
      const double* src_row = &pad[static_cast<std::size_t>(y + 2 * r - i) * pw];
      for (int j = 0; j < size; ++j) {
        const double k = kernel[static_cast<std::size_t>(i) * size + j];
        if (k == 0.0) continue;
        const double* src = src_row + 2 * r - j;
        for (int x = 0; x < w; ++x) dst[x] += k * src[x];
      }
    }
  }
  return out;
}

struct SensorNoiseModel {
  double gain_a = 0.0;   // variance per unit of clean intensity
  double sigma_b = 0.0;  // additive Gaussian std
  std::uint64_t seed = 0;
};

struct SceneParams {
  int radius = 4;         // box-filter radius of the low-pass field
  double contrast = 1.0;  // 1 spans [0, 65535]; 0 gives a flat mid-gray scene
  // >0 modulates texture amplitude by a second, coarser field of this radius
  // so that parts of the scene are nearly flat.
  int envelope_radius = 0;
};

namespace detail {

inline std::vector<double> box_blur(const std::vector<double>& in, int w, int h,
                                    int radius) {
  if (radius <= 0) return in;
  std::vector<double> tmp(in.size());
  std::vector<double> out(in.size());
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        s += in[static_cast<std::size_t>(y) * w + mirror_index(x + d, w)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        s += tmp[static_cast<std::size_t>(mirror_index(y + d, h)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
  return out;
}

}  // namespace detail

// Clean low-pass scene plus independent heteroscedastic sensor noise, stored
// as a 16-bit image. Stand-in for a demosaicked TIF.
inline GrayImage synth_sensor_image(int width, int height, SceneParams scene,
                                    const SensorNoiseModel& model) {
  if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0) {
    throw Error(ErrorKind::kAlignment,
                "sensor image dimensions must be positive multiples of 8, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  if (model.gain_a < 0.0 || model.sigma_b < 0.0) {
    throw Error(ErrorKind::kOutOfRange, "noise parameters must be >= 0");
  }
  Rng rng(model.seed);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> field(n);
  for (double& v : field) v = rng.uniform();
  // Two box passes approximate a Gaussian low-pass.
  field = detail::box_blur(field, width, height, scene.radius);
  field = detail::box_blur(field, width, height, scene.radius);
  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;

  std::vector<double> env(n, 1.0);
  if (scene.envelope_radius > 0) {
    for (double& v : env) v = rng.uniform();
    env = detail::box_blur(env, width, height, scene.envelope_radius);
    env = detail::box_blur(env, width, height, scene.envelope_radius);
    const auto [elo, ehi] = std::minmax_element(env.begin(), env.end());
    const double e0 = *elo;
    const double espan = *ehi - e0;
    for (double& v : env) {
      const double t = espan > 0.0 ? (v - e0) / espan : 1.0;
      v = t * t;
    }
  }

  GrayImage out(width, height, BitDepth::k16);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = span > 0.0 ? (field[i] - lo) / span : 0.5;
    const double clean = 65535.0 * (0.5 + scene.contrast * env[i] * (f - 0.5));
    const double var = model.gain_a * clean + model.sigma_b * model.sigma_b;
    // Draw unconditionally so the stream layout does not depend on the model.
    const double z = rng.normal();
    const double noisy = clean + std::sqrt(std::max(var, 0.0)) * z;
    out.data[i] = std::clamp(std::round(noisy), 0.0, 65535.0);
  }
  return out;
}

}  // namespace tada
