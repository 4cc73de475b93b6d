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

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tada/closure.hpp"
#include "tada/emulator.hpp"
#include "tada/errors.hpp"
#include "tada/jpeg.hpp"
#include "tada/loss.hpp"
#include "tada/parallel.hpp"
#include "tada/random.hpp"
#include "tada/residual.hpp"
#include "tada/stego.hpp"

namespace tada {

enum class Balance { kAllCover, kAllStego, kMix };

inline const char* to_string(Balance b) {
  switch (b) {
    case Balance::kAllCover: return "all-cover";
    case Balance::kAllStego: return "all-stego";
    case Balance::kMix: return "mix";
  }
  return "?";
}

inline Balance parse_balance(const std::string& s) {
  if (s == "all-cover") return Balance::kAllCover;
  if (s == "all-stego") return Balance::kAllStego;
  if (s == "mix") return Balance::kMix;
  throw Error(ErrorKind::kConfig, "unknown balance '" + s + "' (all-cover, all-stego, mix)");
}

// Pool of undeveloped sensor images the emulator develops.
struct SourcePool {
  std::vector<SourceImage> images;
};

// Unlabeled operational set; homogeneous by assumption, so one table.
struct TargetSet {
  std::vector<JpegPlane> planes;
  Balance balance = Balance::kAllStego;

  const QuantTable& table() const {
    if (planes.empty()) throw Error(ErrorKind::kTooFewSamples, "empty target set");
    return planes.front().table;
  }

  void validate() const {
    for (const auto& p : planes) {
      require_exact(p);
      if (!(p.table == planes.front().table)) {
        throw Error(ErrorKind::kShapeMismatch, "target planes do not share one quantization table");
      }
    }
  }
};

// Cover/stego pairs; covers[i] and stegos[i] come from the same image.
struct PairedSet {
  std::vector<JpegPlane> covers;
  std::vector<JpegPlane> stegos;

  std::size_t size() const { return covers.size(); }
};

enum class BatchUnit { kImages, kPatches };

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  BatchUnit batch_unit = BatchUnit::kImages;  // what batch_size counts
  int max_epochs = 3000;
  int patience = 200;
  std::uint64_t seed = 2026;
  int kernel_size = 3;
  LossWeights weights;
  double std_min = 1.0;
  double prob_max = 0.01;
  bool rotations = true;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::kConfig, "lr must be > 0");
    if (batch_size < 2) throw Error(ErrorKind::kConfig, "batch_size must be >= 2");
    if (max_epochs < 1) throw Error(ErrorKind::kConfig, "max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) {
      throw Error(ErrorKind::kConfig, "patience must lie in [1, max_epochs)");
    }
    if (kernel_size != 3 && kernel_size != 5 && kernel_size != 7) {
      throw Error(ErrorKind::kConfig, "kernel_size must be 3, 5 or 7");
    }
    weights.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"batch_unit", c.batch_unit == BatchUnit::kImages ? "images" : "patches"},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"kernel_size", c.kernel_size},
          {"lambda_cov", c.weights.lambda_cov},
          {"mu_dist", c.weights.mu_dist},
          {"gamma_real", c.weights.gamma_real},
          {"std_min", c.std_min},
          {"prob_max", c.prob_max},
          {"rotations", c.rotations}};
}

struct EpochLog {
  int epoch = 0;
  double total = 0.0;
  double cov_term = 0.0;
  double w1_term = 0.0;
  double realism_term = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  EmulatorPipeline pipeline;  // best snapshot
  std::vector<EpochLog> log;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  bool stopped_early = false;
  std::array<double, 3> normalizers{};
};

// Residual patches of the operational set over four rotations, filtered by
// texture and by the simulated embedding probability.
inline PatchSet prepare_target(const TargetSet& target, const EmbeddingConfig& cfg,
                               double std_min = 1.0, double prob_max = 0.01,
                               SelectionCounts* counts = nullptr, bool rotations = true) {
  target.validate();
  std::vector<PatchSet> per_plane(target.planes.size());
  parallel_for(target.planes.size(), [&](std::size_t i) {
    const JpegPlane& plane = target.planes[i];
    const ProbabilityMap probs = probmap_for_target(plane, cfg);
    const BlockProbGrid grid = block_max_probability(probs);
    const GrayImage pix = decompress(plane);
    PatchSet set;
    for (int rot = 0; rot < (rotations ? 4 : 1); ++rot) {
      const GrayImage pr = rotate90(pix, rot);
      const BlockProbGrid gr = rotate90(grid, rot);
      set.append(extract_patches(kb_residual(pr), pr, &gr));
    }
    per_plane[i] = std::move(set);
  });
  PatchSet all;
  all.source_tag = "target";
  for (const auto& s : per_plane) all.append(s);
  return select_patches(all, std_min, prob_max, counts);
}

inline std::vector<SourceImage> augmented_items(const SourcePool& pool, bool rotations) {
  std::vector<SourceImage> items;
  items.reserve(pool.images.size() * (rotations ? 4 : 1));
  for (const auto& img : pool.images) {
    for (int rot = 0; rot < (rotations ? 4 : 1); ++rot) items.push_back(rotate90(img, rot));
  }
  return items;
}

inline std::string log_to_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,total,cov_term,w1_term,realism_term,lr\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.total << ',' << e.cov_term << ',' << e.w1_term << ','
       << e.realism_term << ',' << e.lr << "\n";
  }
  return os.str();
}

using EpochCallback = std::function<void(const EpochLog&, const EmulatorPipeline&)>;

namespace detail {

// Steps are taken on the sum-normalized kernel (and mixer) so the gradient
// never pushes along the overall scale that the epoch-end projection undoes.
inline EmulatorPipeline normalized(const EmulatorPipeline& p) {
  EmulatorPipeline out = p;
  out.kernel = project_constraints(p.kernel);
  if (p.mixer) {
    const double s = p.mixer->w[0] + p.mixer->w[1] + p.mixer->w[2];
    if (!std::isfinite(s) || s <= 1e-12) {
      throw Error(ErrorKind::kDegenerateKernel, "mixer weights cannot be normalized");
    }
    for (double& w : out.mixer->w) w /= s;
  }
  return out;
}

// Gradient w.r.t. raw parameters given the gradient at normalized(p).
inline std::vector<double> chain_normalization(std::span<const double> g,
                                               const EmulatorPipeline& p) {
  std::vector<double> out(g.begin(), g.end());
  const std::vector<double> m = p.kernel.multiplicities();
  const std::vector<double> hat = project_constraints(p.kernel).classes();
  const double s = p.kernel.sum();
  double dot = 0.0;
  for (std::size_t j = 0; j < hat.size(); ++j) dot += hat[j] * g[j];
  for (std::size_t j = 0; j < hat.size(); ++j) out[j] = (g[j] - m[j] * dot) / s;
  if (p.mixer) {
    const std::size_t k = hat.size();
    const double ms = p.mixer->w[0] + p.mixer->w[1] + p.mixer->w[2];
    double mdot = 0.0;
    for (int c = 0; c < 3; ++c) mdot += p.mixer->w[c] / ms * g[k + c];
    for (int c = 0; c < 3; ++c) out[k + c] = (g[k + c] - mdot) / ms;
  }
  return out;
}

inline void check_constraints(const EmulatorPipeline& p) {
  if (std::abs(p.kernel.sum() - 1.0) > 1e-12) {
    throw Error(ErrorKind::kDegenerateKernel, "kernel does not sum to 1 after projection");
  }
  if (p.mixer) {
    double s = 0.0;
    for (double w : p.mixer->w) {
      if (w < 0.0) throw Error(ErrorKind::kDegenerateKernel, "negative mixer weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw Error(ErrorKind::kDegenerateKernel, "mixer off simplex");
  }
}

inline void require_finite(const LossBreakdown& b) {
  const std::pair<const char*, double> terms[] = {
      {"cov", b.cov_term}, {"w1", b.w1_term}, {"realism", b.realism_term}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNonFinite, std::string("loss term '") + name + "' is not finite");
    }
  }
}

}  // namespace detail

// Full-pool objective of a pipeline under frozen normalizers.
inline LossBreakdown pool_loss(std::span<const SourceImage> items, const EmulatorPipeline& p,
                               const TargetStats& target, LossWeights weights, double std_min) {
  const auto fwd = forward_items(items, p, std_min, false);
  return reduce_batch(fwd, target, weights).breakdown;
}

inline TrainResult train(const SourcePool& pool, const PatchSet& target_patches,
                         const QuantTable& table, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (pool.images.empty()) throw Error(ErrorKind::kTooFewSamples, "empty source pool");
  if (target_patches.size() < 2) {
    throw Error(ErrorKind::kTooFewSamples, "target needs at least 2 selected patches");
  }
  const bool rgb = std::holds_alternative<RgbImage>(pool.images.front());
  const TargetStats target = make_target_stats(target_patches);
  const std::vector<SourceImage> items = augmented_items(pool, cfg.rotations);

  EmulatorPipeline pipeline;
  pipeline.kernel = SymmetricKernel::identity(cfg.kernel_size);
  pipeline.table = table;
  pipeline.scheme = RoundingScheme::kCubic;
  if (rgb) pipeline.mixer = ChannelMixer{};

  LossWeights weights = cfg.weights;
  weights.normalizers.reset();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.pipeline = pipeline;
  int since_improve = 0;

  const bool whole_pool_batches =
      cfg.batch_unit == BatchUnit::kImages && items.size() <= cfg.batch_size;
  // Forwards of the full pool at the current parameters, reused as the next
  // epoch's single batch when the pool fits in one batch.
  std::vector<ItemForward> cached;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    std::vector<ItemForward> pending;
    std::size_t pending_patches = 0;

    auto step = [&] {
      const BatchResult r = reduce_batch(pending, target, weights);
      detail::require_finite(r.breakdown);
      std::vector<double> params = pack_params(pipeline);
      const std::vector<double> grad = detail::chain_normalization(r.gradient, pipeline);
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (!std::isfinite(grad[k])) {
          throw Error(ErrorKind::kNonFinite, "gradient coordinate " + std::to_string(k));
        }
        params[k] -= cfg.lr * grad[k];
      }
      pipeline = unpack_params(params, pipeline);
      pending.clear();
      pending_patches = 0;
    };

    if (whole_pool_batches) {
      pending = cached.empty() ? forward_items(items, detail::normalized(pipeline), cfg.std_min, true)
                               : std::move(cached);
      cached.clear();
      step();
    } else if (cfg.batch_unit == BatchUnit::kImages) {
      for (std::size_t next = 0; next < order.size(); next += cfg.batch_size) {
        std::vector<SourceImage> slice;
        for (std::size_t i = next; i < std::min(order.size(), next + cfg.batch_size); ++i) {
          slice.push_back(items[order[i]]);
        }
        pending = forward_items(slice, detail::normalized(pipeline), cfg.std_min, true);
        step();
      }
    } else {
      // Items are developed one at a time with the current parameters so the
      // trajectory never depends on the worker count.
      for (std::size_t next = 0; next < order.size(); ++next) {
        ItemForward f =
            forward_item(items[order[next]], detail::normalized(pipeline), cfg.std_min, true);
        pending_patches += f.patch_count;
        pending.push_back(std::move(f));
        if (pending_patches >= cfg.batch_size) step();
      }
      if (pending_patches >= 2) step();
    }

    pipeline.kernel = project_constraints(pipeline.kernel);
    if (pipeline.mixer) pipeline.mixer = project_constraints(*pipeline.mixer);
    detail::check_constraints(pipeline);

    LossBreakdown full;
    if (whole_pool_batches) {
      cached = forward_items(items, pipeline, cfg.std_min, true);
      LossWeights frozen = weights;
      full = reduce_batch(cached, target, frozen).breakdown;
    } else {
      full = pool_loss(items, pipeline, target, weights, cfg.std_min);
    }
    detail::require_finite(full);
    EpochLog entry{epoch, full.total, full.cov_term, full.w1_term, full.realism_term, cfg.lr};
    result.log.push_back(entry);
    result.epochs_run = epoch;
    if (full.total < result.best_loss) {
      result.best_loss = full.total;
      result.best_epoch = epoch;
      result.pipeline = pipeline;
      since_improve = 0;
    } else {
      ++since_improve;
    }
    if (on_epoch) on_epoch(entry, pipeline);
    if (since_improve >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.normalizers = *weights.normalizers;
  return result;
}

// Checkpoint: kernel file plus JSON sidecar, each written atomically.
inline void write_checkpoint(const std::filesystem::path& dir, const TrainResult& result,
                             const TrainConfig& cfg, const std::string& table_source) {
  std::filesystem::create_directories(dir);
  write_kernel_file(result.pipeline, dir / "kernel.txt", table_source);
  nlohmann::json side = {{"epoch", result.best_epoch},
                         {"epochs_run", result.epochs_run},
                         {"best_loss", result.best_loss},
                         {"stopped_early", result.stopped_early},
                         {"normalizers", result.normalizers},
                         {"seed", cfg.seed},
                         {"config", to_json(cfg)}};
  write_file_text(dir / "checkpoint.json", side.dump(2) + "\n");
  write_file_text(dir / "train_log.csv", log_to_csv(result.log));
}

// Develops the first n_pairs pool images into covers with the frozen pipeline
// (exact rounding) and embeds each into a paired stego.
inline PairedSet emit_source(const EmulatorPipeline& pipeline, const SourcePool& pool,
                             const EmbeddingConfig& cfg, std::size_t n_pairs,
                             std::uint64_t seed) {
  cfg.validate();
  if (n_pairs > pool.images.size()) {
    throw Error(ErrorKind::kTooFewSamples,
                "requested " + std::to_string(n_pairs) + " pairs from a pool of " +
                    std::to_string(pool.images.size()));
  }
  EmulatorPipeline frozen = pipeline;
  frozen.scheme = RoundingScheme::kExact;
  PairedSet out;
  out.covers.resize(n_pairs);
  out.stegos.resize(n_pairs);
  parallel_for(n_pairs, [&](std::size_t i) {
    out.covers[i] = develop(pool.images[i], frozen);
    const ProbabilityMap probs = probmap_for_target(out.covers[i], cfg);
    out.stegos[i] = embed(out.covers[i], probs, mix_seed(seed, i));
  });
  return out;
}

}  // namespace tada
