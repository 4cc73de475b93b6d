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
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tada/errors.hpp"
#include "tada/image.hpp"
#include "tada/jpeg.hpp"
#include "tada/pgm.hpp"

namespace tada {

// Convolution kernel invariant under the 8-element dihedral group. Free
// parameters are one weight per orbit; orbits are indexed by their canonical
// offset (i, j), 0 <= i <= j <= radius, in lexicographic order. For 3x3 that
// is (center, edge, corner).
class SymmetricKernel {
 public:
  SymmetricKernel() : SymmetricKernel(identity(3)) {}

  SymmetricKernel(int size, std::vector<double> classes)
      : size_(size), classes_(std::move(classes)) {
    if (size != 3 && size != 5 && size != 7) {
      throw Error(ErrorKind::kOutOfRange,
                  "kernel size must be 3, 5 or 7, got " + std::to_string(size));
    }
    if (classes_.size() != class_count(size)) {
      throw Error(ErrorKind::kShapeMismatch,
                  "kernel of size " + std::to_string(size) + " needs " +
                      std::to_string(class_count(size)) + " classes");
    }
  }

  static std::size_t class_count(int size) {
    const int r = size / 2;
    return static_cast<std::size_t>((r + 1) * (r + 2) / 2);
  }

  static SymmetricKernel identity(int size) {
    std::vector<double> c(class_count(size), 0.0);
    c[0] = 1.0;
    return SymmetricKernel(size, std::move(c));
  }

  // 3x3 kernel [b c b; c a c; b c b].
  static SymmetricKernel from_abc(double a, double b, double c) {
    return SymmetricKernel(3, {a, c, b});
  }

  int size() const { return size_; }
  int radius() const { return size_ / 2; }
  const std::vector<double>& classes() const { return classes_; }
  std::vector<double>& classes() { return classes_; }

  std::size_t class_of(int dy, int dx) const {
    const int i = std::min(std::abs(dy), std::abs(dx));
    const int j = std::max(std::abs(dy), std::abs(dx));
    const int r = radius();
    int idx = 0;
    for (int k = 0; k < i; ++k) idx += r - k + 1;
    return static_cast<std::size_t>(idx + (j - i));
  }

  // Number of grid cells belonging to each orbit.
  std::vector<double> multiplicities() const {
    std::vector<double> m(classes_.size(), 0.0);
    const int r = radius();
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) m[class_of(dy, dx)] += 1.0;
    }
    return m;
  }

  std::vector<double> materialize() const {
    const int r = radius();
    std::vector<double> grid(static_cast<std::size_t>(size_ * size_));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        grid[static_cast<std::size_t>((dy + r) * size_ + dx + r)] = classes_[class_of(dy, dx)];
      }
    }
    return grid;
  }

  // Indicator grid of one orbit; the kernel is linear in these.
  std::vector<double> class_basis(std::size_t k) const {
    const int r = radius();
    std::vector<double> grid(static_cast<std::size_t>(size_ * size_), 0.0);
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (class_of(dy, dx) == k) grid[static_cast<std::size_t>((dy + r) * size_ + dx + r)] = 1.0;
      }
    }
    return grid;
  }

  double sum() const {
    const auto m = multiplicities();
    double s = 0.0;
    for (std::size_t k = 0; k < classes_.size(); ++k) s += m[k] * classes_[k];
    return s;
  }

  // Reads orbit weights back out of a full grid (center cell of each orbit's
  // canonical offset).
  static SymmetricKernel from_grid(int size, const std::vector<double>& grid) {
    SymmetricKernel k = identity(size);
    const int r = size / 2;
    for (int i = 0; i <= r; ++i) {
      for (int j = i; j <= r; ++j) {
        k.classes_[k.class_of(i, j)] = grid[static_cast<std::size_t>((i + r) * size + j + r)];
      }
    }
    return k;
  }

  bool operator==(const SymmetricKernel&) const = default;

 private:
  int size_ = 3;
  std::vector<double> classes_;
};

// Rescales so the materialized kernel sums to one. Symmetry already holds by
// construction.
inline SymmetricKernel project_constraints(const SymmetricKernel& kernel) {
  const double s = kernel.sum();
  if (!std::isfinite(s) || std::abs(s) <= 1e-12) {
    throw Error(ErrorKind::kDegenerateKernel,
                "kernel sum " + std::to_string(s) + " cannot be normalized to 1");
  }
  std::vector<double> c = kernel.classes();
  for (double& v : c) v /= s;
  return SymmetricKernel(kernel.size(), std::move(c));
}

inline GrayImage convolve(const GrayImage& img, const SymmetricKernel& kernel) {
  const auto grid = kernel.materialize();
  return convolve_mirror(img, grid, kernel.size());
}

struct ChannelMixer {
  std::array<double, 3> w{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  bool operator==(const ChannelMixer&) const = default;
};

// Clamp at zero then renormalize onto the simplex.
inline ChannelMixer project_constraints(const ChannelMixer& mixer) {
  ChannelMixer out;
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    out.w[c] = std::max(mixer.w[c], 0.0);
    s += out.w[c];
  }
  if (!(s > 1e-12)) {
    throw Error(ErrorKind::kDegenerateKernel, "channel mixer has no positive weight");
  }
  for (double& v : out.w) v /= s;
  return out;
}

inline GrayImage mix_channels(const RgbImage& img, const ChannelMixer& mixer) {
  img.validate();
  GrayImage out(img.width(), img.height(), BitDepth::kReal);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = mixer.w[0] * img.planes[0].data[i] + mixer.w[1] * img.planes[1].data[i] +
                  mixer.w[2] * img.planes[2].data[i];
  }
  return out;
}

struct EmulatorPipeline {
  std::optional<ChannelMixer> mixer;
  SymmetricKernel kernel = SymmetricKernel::identity(3);
  QuantTable table = quant_table_from_qf(100);
  RoundingScheme scheme = RoundingScheme::kCubic;

  bool operator==(const EmulatorPipeline&) const = default;
};

using SourceImage = std::variant<GrayImage, RgbImage>;

inline int source_width(const SourceImage& img) {
  return std::visit([](const auto& i) {
    if constexpr (std::is_same_v<std::decay_t<decltype(i)>, GrayImage>) return i.width;
    else return i.width();
  }, img);
}

inline SourceImage rotate90(const SourceImage& img, int quarter_turns) {
  return std::visit([&](const auto& i) { return SourceImage(rotate90(i, quarter_turns)); }, img);
}

// 16-bit sensor data (after optional channel mixing) mapped to the 8-bit
// scale; 65535 maps to 255 exactly.
inline GrayImage to_eight_bit_scale(const SourceImage& img,
                                    const std::optional<ChannelMixer>& mixer) {
  GrayImage gray;
  if (const auto* rgb = std::get_if<RgbImage>(&img)) {
    if (!mixer) {
      throw Error(ErrorKind::kShapeMismatch, "RGB input requires a channel mixer");
    }
    gray = mix_channels(*rgb, *mixer);
  } else {
    if (mixer) {
      throw Error(ErrorKind::kShapeMismatch, "grayscale input with a channel mixer");
    }
    gray = std::get<GrayImage>(img).as_real();
  }
  for (double& v : gray.data) v /= 257.0;
  return gray;
}

inline JpegPlane develop(const SourceImage& img, const EmulatorPipeline& pipeline) {
  const GrayImage scaled = to_eight_bit_scale(img, pipeline.mixer);
  return compress(convolve(scaled, pipeline.kernel), pipeline.table, pipeline.scheme);
}

inline std::vector<JpegPlane> develop(const std::vector<SourceImage>& batch,
                                      const EmulatorPipeline& pipeline) {
  std::vector<JpegPlane> out;
  out.reserve(batch.size());
  for (const auto& img : batch) out.push_back(develop(img, pipeline));
  return out;
}

// Plain-text key/value kernel file.
inline std::string format_kernel_file(const EmulatorPipeline& p,
                                      const std::string& table_source = "explicit") {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# tada emulator kernel\n";
  os << "size = " << p.kernel.size() << "\n";
  os << "classes =";
  for (double c : p.kernel.classes()) os << ' ' << c;
  os << "\n";
  if (p.mixer) {
    os << "mixer =";
    for (double w : p.mixer->w) os << ' ' << w;
    os << "\n";
  }
  os << "table_source = " << table_source << "\n";
  os << "table =";
  for (int v : p.table.q) os << ' ' << v;
  os << "\n";
  os << "scheme = " << (p.scheme == RoundingScheme::kExact ? "exact" : "cubic") << "\n";
  return os.str();
}

inline EmulatorPipeline parse_kernel_file(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw Error(ErrorKind::kConfig, "kernel file line without '=': " + line);
      }
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key != "size" && key != "classes" && key != "mixer" && key != "table" &&
        key != "table_source" && key != "scheme") {
      throw Error(ErrorKind::kConfig, "unknown kernel file key: " + key);
    }
    kv[key] = trim(line.substr(eq + 1));
  }
  for (const char* required : {"size", "classes", "table", "scheme"}) {
    if (!kv.count(required)) {
      throw Error(ErrorKind::kConfig, std::string("kernel file missing key: ") + required);
    }
  }
  auto numbers = [](const std::string& s) {
    std::istringstream is(s);
    std::vector<double> v;
    double x = 0.0;
    while (is >> x) v.push_back(x);
    if (!is.eof()) throw Error(ErrorKind::kConfig, "bad number list: " + s);
    return v;
  };
  EmulatorPipeline p;
  p.kernel = SymmetricKernel(std::stoi(kv["size"]), numbers(kv["classes"]));
  if (kv.count("mixer")) {
    const auto w = numbers(kv["mixer"]);
    if (w.size() != 3) throw Error(ErrorKind::kConfig, "mixer needs 3 weights");
    p.mixer = ChannelMixer{{w[0], w[1], w[2]}};
  }
  const auto t = numbers(kv["table"]);
  if (t.size() != 64) throw Error(ErrorKind::kConfig, "table needs 64 entries");
  for (std::size_t i = 0; i < 64; ++i) p.table.q[i] = static_cast<int>(t[i]);
  p.table.validate();
  if (kv["scheme"] == "exact") {
    p.scheme = RoundingScheme::kExact;
  } else if (kv["scheme"] == "cubic") {
    p.scheme = RoundingScheme::kCubic;
  } else {
    throw Error(ErrorKind::kConfig, "unknown rounding scheme: " + kv["scheme"]);
  }
  return p;
}

inline void write_kernel_file(const EmulatorPipeline& p, const std::filesystem::path& path,
                              const std::string& table_source = "explicit") {
  write_file_text(path, format_kernel_file(p, table_source));
}

inline EmulatorPipeline read_kernel_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_kernel_file(std::string(bytes.begin(), bytes.end()));
}

}  // namespace tada
