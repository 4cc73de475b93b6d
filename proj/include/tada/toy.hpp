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

#include <cstdint>
#include <string>
#include <vector>

#include "tada/emulator.hpp"
#include "tada/errors.hpp"
#include "tada/image.hpp"
#include "tada/parallel.hpp"
#include "tada/random.hpp"
#include "tada/stego.hpp"
#include "tada/trainer.hpp"

namespace tada {

// Synthetic sensor pool: scene radius cycles through three values so the pool
// mixes coarse and fine texture.
struct SensorPoolSpec {
  std::size_t count = 64;
  int width = 128;
  int height = 128;
  int radius = 2;
  double contrast = 1.0;
  double gain_a = 1.0;
  double sigma_b = 100.0;
  int envelope_radius = 24;
  std::uint64_t seed = 1;
};

inline SourcePool make_sensor_pool(const SensorPoolSpec& spec) {
  SourcePool pool;
  pool.images.resize(spec.count);
  parallel_for(spec.count, [&](std::size_t i) {
    SensorNoiseModel model{spec.gain_a, spec.sigma_b, mix_seed(spec.seed, i)};
    SceneParams scene{spec.radius + static_cast<int>(i % 3), spec.contrast,
                      spec.envelope_radius};
    pool.images[i] = synth_sensor_image(spec.width, spec.height, scene, model);
  });
  return pool;
}

// 3x3 kernels of the toy experiments.
inline SymmetricKernel kernel_preset(const std::string& name) {
  if (name == "denoise") return SymmetricKernel::from_abc(0.25, 0.0625, 0.125);
  if (name == "sharpen") return SymmetricKernel::from_abc(2.0, 0.0, -0.25);
  if (name == "identity") return SymmetricKernel::identity(3);
  throw Error(ErrorKind::kConfig, "unknown kernel preset '" + name + "'");
}

// Which target items carry a payload: all, none, or every other one.
inline bool is_stego_slot(Balance balance, std::size_t i) {
  switch (balance) {
    case Balance::kAllCover: return false;
    case Balance::kAllStego: return true;
    case Balance::kMix: return i % 2 == 1;
  }
  return false;
}

inline TargetSet synth_target(const SourcePool& pool, const SymmetricKernel& kernel,
                              const QuantTable& table, Balance balance,
                              const EmbeddingConfig& cfg, std::vector<int>* labels = nullptr) {
  cfg.validate();
  EmulatorPipeline p;
  p.kernel = kernel;
  p.table = table;
  p.scheme = RoundingScheme::kExact;
  TargetSet target;
  target.balance = balance;
  target.planes.resize(pool.images.size());
  parallel_for(pool.images.size(), [&](std::size_t i) {
    JpegPlane cover = develop(pool.images[i], p);
    if (is_stego_slot(balance, i)) {
      cover = embed(cover, probmap_for_target(cover, cfg), mix_seed(cfg.seed, i));
    }
    target.planes[i] = std::move(cover);
  });
  if (labels) {
    labels->clear();
    for (std::size_t i = 0; i < pool.images.size(); ++i) labels->push_back(is_stego_slot(balance, i));
  }
  return target;
}

}  // namespace tada
