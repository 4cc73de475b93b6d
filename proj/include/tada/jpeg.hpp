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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "tada/errors.hpp"
#include "tada/image.hpp"
#include "tada/pgm.hpp"

namespace tada {

using Block8 = std::array<double, 64>;

// ITU-T T.81 Annex K luminance table, natural (row-major) order.
inline constexpr std::array<int, 64> kAnnexKLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

// kZigzag[k] = natural index of the k-th coefficient in zigzag order.
inline constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

struct QuantTable {
  std::array<int, 64> q{};  // natural order

  int operator[](int i) const { return q[static_cast<std::size_t>(i)]; }

  void validate() const {
    for (int v : q) {
      if (v < 1 || v > 255) {
        throw Error(ErrorKind::kOutOfRange,
                    "quantization step " + std::to_string(v) + " outside [1,255]");
      }
    }
  }

  double mean_step() const {
    double s = 0.0;
    for (int v : q) s += v;
    return s / 64.0;
  }

  double mean_ac_step() const {
    double s = 0.0;
    for (int i = 1; i < 64; ++i) s += q[static_cast<std::size_t>(i)];
    return s / 63.0;
  }

  bool operator==(const QuantTable&) const = default;
};

// IJG quality scaling of the Annex K luminance table.
inline QuantTable quant_table_from_qf(int qf) {
  if (qf < 1 || qf > 100) {
    throw Error(ErrorKind::kOutOfRange,
                "quality factor " + std::to_string(qf) + " outside [1,100]");
  }
  const long scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  QuantTable t;
  for (std::size_t i = 0; i < 64; ++i) {
    const long v = (kAnnexKLuminance[i] * scale + 50) / 100;
    t.q[i] = static_cast<int>(std::clamp<long>(v, 1, 255));
  }
  return t;
}

namespace detail {

struct DctBasis {
  std::array<double, 64> c{};  // c[u*8 + x]
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        c[static_cast<std::size_t>(u * 8 + x)] =
            alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
  }
};

inline const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

}  // namespace detail

// Orthonormal 2-D type-II DCT: F = C X C^T, block in row-major order.
inline Block8 dct8x8_forward(const Block8& block) {
  const auto& c = detail::dct_basis().c;
  Block8 tmp{};
  Block8 out{};
  for (int y = 0; y < 8; ++y) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += block[y * 8 + x] * c[v * 8 + x];
      tmp[y * 8 + v] = s;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += c[u * 8 + y] * tmp[y * 8 + v];
      out[u * 8 + v] = s;
    }
  }
  return out;
}

inline Block8 dct8x8_inverse(const Block8& coeffs) {
  const auto& c = detail::dct_basis().c;
  Block8 tmp{};
  Block8 out{};
  for (int u = 0; u < 8; ++u) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += coeffs[u * 8 + v] * c[v * 8 + x];
      tmp[u * 8 + x] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + y] * tmp[u * 8 + x];
      out[y * 8 + x] = s;
    }
  }
  return out;
}

enum class RoundingScheme { kExact, kCubic };

// Round half away from zero (std::round semantics), or the cubic surrogate
// round(x) + (x - round(x))^3.
inline double approx_round(double x, RoundingScheme scheme) {
  const double r = std::round(x);
  if (scheme == RoundingScheme::kExact) return r;
  const double t = x - r;
  return r + t * t * t;
}

// Derivative used by the gradient engine; the exact scheme has none and the
// cubic surrogate gives 3 (x - round(x))^2.
inline double approx_round_derivative(double x, RoundingScheme scheme) {
  if (scheme == RoundingScheme::kExact) return 0.0;
  const double t = x - std::round(x);
  return 3.0 * t * t;
}

enum class PlaneMode { kExact, kDifferentiable };

struct JpegPlane {
  int width = 0;
  int height = 0;
  QuantTable table;
  PlaneMode mode = PlaneMode::kExact;
  std::vector<double> coeffs;  // block-major, natural order within a block

  int blocks_wide() const { return width / 8; }
  int blocks_high() const { return height / 8; }
  std::size_t block_count() const {
    return static_cast<std::size_t>(blocks_wide()) * blocks_high();
  }
  double& coeff(std::size_t block, int k) { return coeffs[block * 64 + static_cast<std::size_t>(k)]; }
  double coeff(std::size_t block, int k) const {
    return coeffs[block * 64 + static_cast<std::size_t>(k)];
  }

  void validate() const {
    if (width % 8 != 0 || height % 8 != 0 || width <= 0 || height <= 0) {
      throw Error(ErrorKind::kAlignment, "plane dimensions must be multiples of 8");
    }
    if (coeffs.size() != block_count() * 64) {
      throw Error(ErrorKind::kShapeMismatch, "coefficient count mismatch");
    }
    table.validate();
    if (mode == PlaneMode::kExact) {
      for (double c : coeffs) {
        if (c != std::round(c)) {
          throw Error(ErrorKind::kNotExact, "exact plane holds non-integral coefficient");
        }
      }
    }
  }

  std::size_t nonzero_ac_count() const {
    std::size_t n = 0;
    for (std::size_t b = 0; b < block_count(); ++b) {
      for (int k = 1; k < 64; ++k) n += coeff(b, k) != 0.0;
    }
    return n;
  }

  bool operator==(const JpegPlane&) const = default;
};

inline void require_aligned(int width, int height) {
  if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0) {
    throw Error(ErrorKind::kAlignment,
                "dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                    " are not multiples of 8");
  }
}

inline Block8 load_block(const GrayImage& img, int bx, int by) {
  Block8 b{};
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) b[y * 8 + x] = img.at(bx * 8 + x, by * 8 + y);
  }
  return b;
}

inline void store_block(GrayImage& img, int bx, int by, const Block8& b) {
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.at(bx * 8 + x, by * 8 + y) = b[y * 8 + x];
  }
}

// Level shift, forward DCT and division by the table, before rounding.
inline Block8 scaled_coefficients(const GrayImage& img, int bx, int by,
                                  const QuantTable& table) {
  Block8 b = load_block(img, bx, by);
  for (double& v : b) v -= 128.0;
  Block8 f = dct8x8_forward(b);
  for (int k = 0; k < 64; ++k) f[k] /= table[k];
  return f;
}

// Input is a real image on the 8-bit scale.
inline JpegPlane compress(const GrayImage& img, const QuantTable& table,
                          RoundingScheme scheme) {
  require_aligned(img.width, img.height);
  table.validate();
  JpegPlane plane;
  plane.width = img.width;
  plane.height = img.height;
  plane.table = table;
  plane.mode = scheme == RoundingScheme::kExact ? PlaneMode::kExact
                                                 : PlaneMode::kDifferentiable;
  plane.coeffs.resize(plane.block_count() * 64);
  std::size_t block = 0;
  for (int by = 0; by < plane.blocks_high(); ++by) {
    for (int bx = 0; bx < plane.blocks_wide(); ++bx, ++block) {
      const Block8 f = scaled_coefficients(img, bx, by, table);
      for (int k = 0; k < 64; ++k) plane.coeff(block, k) = approx_round(f[k], scheme);
    }
  }
  return plane;
}

// Dequantize and inverse-transform without clamping.
inline GrayImage decompress_unclamped(const JpegPlane& plane) {
  GrayImage out(plane.width, plane.height, BitDepth::kReal);
  std::size_t block = 0;
  for (int by = 0; by < plane.blocks_high(); ++by) {
    for (int bx = 0; bx < plane.blocks_wide(); ++bx, ++block) {
      Block8 f{};
      for (int k = 0; k < 64; ++k) f[k] = plane.coeff(block, k) * plane.table[k];
      Block8 b = dct8x8_inverse(f);
      for (double& v : b) v += 128.0;
      store_block(out, bx, by, b);
    }
  }
  return out;
}

// Real-valued output; exact planes are clamped to [0, 255], differentiable
// planes are left untouched.
inline GrayImage decompress(const JpegPlane& plane) {
  GrayImage out = decompress_unclamped(plane);
  if (plane.mode == PlaneMode::kExact) {
    for (double& v : out.data) v = std::clamp(v, 0.0, 255.0);
  }
  return out;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw Error(ErrorKind::kTruncatedPayload, "archive truncated");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void magic(const char* m) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0) {
      throw Error(ErrorKind::kMalformedHeader, std::string("bad magic, expected ") + m);
    }
    pos_ += 4;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// "JCA1" coefficient archive: dims (u32 LE), table (64 x u16 LE, zigzag), then
// per block 64 x i32 LE in zigzag order, blocks in raster order.
inline std::vector<std::uint8_t> encode_coefficient_archive(const JpegPlane& plane) {
  if (plane.mode != PlaneMode::kExact) {
    throw Error(ErrorKind::kNotExact, "only exact planes can be archived");
  }
  plane.validate();
  std::vector<std::uint8_t> out = {'J', 'C', 'A', '1'};
  detail::put_u32(out, static_cast<std::uint32_t>(plane.width));
  detail::put_u32(out, static_cast<std::uint32_t>(plane.height));
  for (int k = 0; k < 64; ++k) {
    detail::put_u16(out, static_cast<std::uint16_t>(plane.table[kZigzag[k]]));
  }
  for (std::size_t b = 0; b < plane.block_count(); ++b) {
    for (int k = 0; k < 64; ++k) {
      const auto v = static_cast<std::int32_t>(plane.coeff(b, kZigzag[k]));
      detail::put_u32(out, static_cast<std::uint32_t>(v));
    }
  }
  return out;
}

inline JpegPlane decode_coefficient_archive(const std::vector<std::uint8_t>& buf) {
  detail::ByteReader in(buf);
  in.magic("JCA1");
  JpegPlane plane;
  plane.width = static_cast<int>(in.u32());
  plane.height = static_cast<int>(in.u32());
  require_aligned(plane.width, plane.height);
  for (int k = 0; k < 64; ++k) plane.table.q[static_cast<std::size_t>(kZigzag[k])] = in.u16();
  plane.coeffs.resize(plane.block_count() * 64);
  for (std::size_t b = 0; b < plane.block_count(); ++b) {
    for (int k = 0; k < 64; ++k) {
      plane.coeff(b, kZigzag[k]) = static_cast<double>(static_cast<std::int32_t>(in.u32()));
    }
  }
  if (!in.at_end()) throw Error(ErrorKind::kMalformedHeader, "trailing bytes in archive");
  plane.validate();
  return plane;
}

inline void write_coefficient_archive(const JpegPlane& plane,
                                      const std::filesystem::path& path) {
  write_file_bytes(path, encode_coefficient_archive(plane));
}

inline JpegPlane read_coefficient_archive(const std::filesystem::path& path) {
  return decode_coefficient_archive(read_file_bytes(path));
}

}  // namespace tada
