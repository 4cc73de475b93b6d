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

#include <array>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tada/errors.hpp"
#include "tada/image.hpp"

namespace tada {

inline constexpr int kPatchRows = 8;
inline constexpr int kPatchCols = 16;
inline constexpr int kPatchDim = kPatchRows * kPatchCols;

// Fixed KB high-pass: 1/4 [-1 2 -1; 2 -4 2; -1 2 -1].
inline constexpr std::array<double, 9> kKbKernel = {-0.25, 0.5,  -0.25,  //
                                                    0.5,   -1.0, 0.5,    //
                                                    -0.25, 0.5,  -0.25};

inline GrayImage kb_residual(const GrayImage& img) {
  if (img.width < 3 || img.height < 3) {
    throw Error(ErrorKind::kShapeMismatch, "KB residual needs at least 3x3 pixels");
  }
  return convolve_mirror(img, kKbKernel, 3);
}

struct ResidualPatch {
  std::array<double, kPatchDim> values{};  // 8 rows x 16 columns, row-major
  int block_row = 0;
  int block_col = 0;  // left block of the pair
  double pixel_std = 0.0;
  double max_change_prob = 0.0;

  bool operator==(const ResidualPatch&) const = default;
};

struct PatchSet {
  std::vector<ResidualPatch> patches;
  std::string source_tag;

  std::size_t size() const { return patches.size(); }
  bool empty() const { return patches.empty(); }

  void append(const PatchSet& other) {
    patches.insert(patches.end(), other.patches.begin(), other.patches.end());
  }
};

// Per-block maximum change probability over the block's 64 coefficients.
struct BlockProbGrid {
  int blocks_wide = 0;
  int blocks_high = 0;
  std::vector<double> max_prob;

  double at(int bx, int by) const {
    return max_prob[static_cast<std::size_t>(by) * blocks_wide + bx];
  }
};

inline BlockProbGrid rotate90(const BlockProbGrid& grid, int quarter_turns) {
  GrayImage as_img(grid.blocks_wide, grid.blocks_high, BitDepth::kReal, grid.max_prob);
  const GrayImage r = rotate90(as_img, quarter_turns);
  return {r.width, r.height, r.data};
}

inline void copy_patch(const GrayImage& img, int block_row, int block_col,
                       std::span<double, kPatchDim> out) {
  const int y0 = block_row * 8;
  const int x0 = block_col * 8;
  for (int y = 0; y < kPatchRows; ++y) {
    for (int x = 0; x < kPatchCols; ++x) out[y * kPatchCols + x] = img.at(x0 + x, y0 + y);
  }
}

inline double patch_std(const GrayImage& img, int block_row, int block_col) {
  std::array<double, kPatchDim> px{};
  copy_patch(img, block_row, block_col, px);
  double mean = 0.0;
  for (double v : px) mean += v;
  mean /= kPatchDim;
  double var = 0.0;
  for (double v : px) var += (v - mean) * (v - mean);
  return std::sqrt(var / kPatchDim);
}

// Non-overlapping 8x16 tiling on the JPEG grid, raster order.
inline PatchSet extract_patches(const GrayImage& residual, const GrayImage& pixel_img,
                                const BlockProbGrid* probs = nullptr,
                                std::string source_tag = {}) {
  if (residual.width % 8 != 0 || residual.height % 8 != 0) {
    throw Error(ErrorKind::kAlignment, "residual dimensions must be multiples of 8");
  }
  if (residual.width < kPatchCols) {
    throw Error(ErrorKind::kShapeMismatch, "image narrower than 16 pixels");
  }
  if (pixel_img.width != residual.width || pixel_img.height != residual.height) {
    throw Error(ErrorKind::kShapeMismatch, "residual and pixel image differ in size");
  }
  const int bw = residual.width / 8;
  const int bh = residual.height / 8;
  if (probs && (probs->blocks_wide != bw || probs->blocks_high != bh)) {
    throw Error(ErrorKind::kShapeMismatch, "probability map does not match image");
  }
  PatchSet set;
  set.source_tag = std::move(source_tag);
  set.patches.reserve(static_cast<std::size_t>(bh) * (bw / 2));
  for (int br = 0; br < bh; ++br) {
    for (int bc = 0; bc + 1 < bw; bc += 2) {
      ResidualPatch p;
      p.block_row = br;
      p.block_col = bc;
      copy_patch(residual, br, bc, p.values);
      p.pixel_std = patch_std(pixel_img, br, bc);
      p.max_change_prob = probs ? std::max(probs->at(bc, br), probs->at(bc + 1, br)) : 0.0;
      set.patches.push_back(p);
    }
  }
  return set;
}

struct SelectionCounts {
  std::size_t considered = 0;
  std::size_t rejected_std = 0;
  std::size_t rejected_prob = 0;
};

// Keeps patches that are textured enough and unlikely to be touched by
// embedding. Rejections are counted by the first failing test.
inline PatchSet select_patches(const PatchSet& set, double std_min = 1.0,
                               double prob_max = 0.01,
                               SelectionCounts* counts = nullptr) {
  PatchSet out;
  out.source_tag = set.source_tag;
  SelectionCounts c;
  c.considered = set.size();
  for (const auto& p : set.patches) {
    if (!(p.pixel_std > std_min)) {
      ++c.rejected_std;
    } else if (!(p.max_change_prob < prob_max)) {
      ++c.rejected_prob;
    } else {
      out.patches.push_back(p);
    }
  }
  if (counts) *counts = c;
  if (out.empty()) throw EmptySelectionError(c.considered, c.rejected_std, c.rejected_prob);
  return out;
}

inline std::string patches_to_csv(const PatchSet& set) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "block_row,block_col,pixel_std,max_change_prob";
  for (int i = 0; i < kPatchDim; ++i) os << ",r" << i;
  os << "\n";
  for (const auto& p : set.patches) {
    os << p.block_row << ',' << p.block_col << ',' << p.pixel_std << ',' << p.max_change_prob;
    for (double v : p.values) os << ',' << v;
    os << "\n";
  }
  return os.str();
}

}  // namespace tada
