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

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tada/errors.hpp"
#include "tada/image.hpp"

namespace tada {

namespace detail {

inline void skip_pgm_space(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
}

inline long read_pgm_int(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                         const char* field) {
  skip_pgm_space(buf, pos);
  if (pos >= buf.size() || !std::isdigit(buf[pos])) {
    throw Error(ErrorKind::kMalformedHeader,
                std::string("expected integer for ") + field);
  }
  long v = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    if (v > 1'000'000'000L) {
      throw Error(ErrorKind::kMalformedHeader, std::string(field) + " too large");
    }
    ++pos;
  }
  return v;
}

}  // namespace detail

// Decodes a binary (P5) PGM held in memory.
inline GrayImage decode_pgm(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    throw Error(ErrorKind::kMalformedHeader, "missing P5 magic");
  }
  std::size_t pos = 2;
  const long width = detail::read_pgm_int(buf, pos, "width");
  const long height = detail::read_pgm_int(buf, pos, "height");
  const long maxval = detail::read_pgm_int(buf, pos, "maxval");
  if (pos >= buf.size() || !std::isspace(buf[pos])) {
    throw Error(ErrorKind::kMalformedHeader, "missing separator after maxval");
  }
  ++pos;
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kMalformedHeader, "non-positive dimensions");
  }
  if (maxval != 255 && maxval != 65535) {
    throw Error(ErrorKind::kUnsupportedMaxval,
                "maxval " + std::to_string(maxval) + " (only 255 and 65535)");
  }
  const bool wide = maxval == 65535;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  const std::size_t need = count * (wide ? 2 : 1);
  if (buf.size() - pos < need) {
    throw Error(ErrorKind::kTruncatedPayload,
                "expected " + std::to_string(need) + " payload bytes, got " +
                    std::to_string(buf.size() - pos));
  }
  GrayImage img(static_cast<int>(width), static_cast<int>(height),
                wide ? BitDepth::k16 : BitDepth::k8);
  for (std::size_t i = 0; i < count; ++i) {
    if (wide) {
      img.data[i] = static_cast<double>((buf[pos + 2 * i] << 8) | buf[pos + 2 * i + 1]);
    } else {
      img.data[i] = static_cast<double>(buf[pos + i]);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  if (img.depth == BitDepth::kReal) {
    throw Error(ErrorKind::kMustQuantize,
                "real-valued image must be quantized to 8 or 16 bits first");
  }
  img.validate();
  const bool wide = img.depth == BitDepth::k16;
  const std::string header = "P5\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n" +
                             (wide ? "65535" : "255") + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * (wide ? 2 : 1));
  for (double v : img.data) {
    const auto s = static_cast<std::uint16_t>(v);
    if (wide) {
      out.push_back(static_cast<std::uint8_t>(s >> 8));
      out.push_back(static_cast<std::uint8_t>(s & 0xFF));
    } else {
      out.push_back(static_cast<std::uint8_t>(s));
    }
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

// Writes to a sibling temp file and renames it into place.
inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file_bytes(path));
}

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(img));
}

}  // namespace tada
