// Copyright 2026 The attnseg Authors.
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

#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "attnseg/error.hpp"
#include "attnseg/mask.hpp"
#include "attnseg/tensor_io.hpp"

namespace attnseg {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(path, std::as_bytes(std::span(bytes.data(), bytes.size())));
}

// Netpbm header: magic, width, height, maxval, separated by whitespace and
// '#' comments, then exactly one whitespace byte.
struct NetpbmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

NetpbmHeader parse_netpbm(const std::vector<std::uint8_t>& bytes,
                          const fs::path& path) {
  NetpbmHeader h;
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw SchemaError(path.string() + ": malformed Netpbm header (" + what +
                      ") at byte offset " + std::to_string(pos));
  };
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 20) fail(what);
      ++pos;
    }
    if (pos == start) fail(what);
    return static_cast<int>(v);
  };
  if (bytes.size() < 2) fail("magic");
  h.magic.assign(bytes.begin(), bytes.begin() + 2);
  pos = 2;
  h.width = number("width");
  h.height = number("height");
  h.maxval = number("maxval");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("separator");
  ++pos;
  if (h.width < 1 || h.height < 1) fail("dimensions");
  if (h.maxval < 1 || h.maxval > 65535) fail("maxval");
  h.data_offset = pos;
  return h;
}

}  // namespace

const char* label_mask_extension(const LabelMask& mask) {
  return mask.num_labels <= 255 ? ".pgm" : ".lbl";
}

void write_label_mask(const LabelMask& mask, const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  if (mask.num_labels <= 255) {
    const std::string header = "P5\n" + std::to_string(mask.width) + " " +
                               std::to_string(mask.height) + "\n255\n";
    bytes.assign(header.begin(), header.end());
    for (std::uint16_t v : mask.labels) bytes.push_back(static_cast<std::uint8_t>(v));
  } else {
    put_u32le(bytes, static_cast<std::uint32_t>(mask.width));
    put_u32le(bytes, static_cast<std::uint32_t>(mask.height));
    for (std::uint16_t v : mask.labels) {
      bytes.push_back(static_cast<std::uint8_t>(v & 0xFF));
      bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  }
  write_bytes(path, bytes);
}

LabelMask read_label_mask(const fs::path& path) {
  const auto bytes = slurp(path);
  LabelMask mask;
  std::vector<std::uint16_t> values;
  int width = 0, height = 0;
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    const auto h = parse_netpbm(bytes, path);
    width = h.width;
    height = h.height;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    const std::size_t sample = h.maxval > 255 ? 2 : 1;
    if (bytes.size() - h.data_offset < n * sample) {
      throw IoError(path.string() + ": truncated PGM payload at byte offset " +
                    std::to_string(bytes.size()));
    }
    values.resize(n);
    const std::uint8_t* p = bytes.data() + h.data_offset;
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = sample == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1])
                              : p[i];
    }
  } else {
    if (bytes.size() < 8) throw IoError(path.string() + ": truncated label header");
    width = static_cast<int>(get_u32le(bytes.data()));
    height = static_cast<int>(get_u32le(bytes.data() + 4));
    if (width < 1 || height < 1 || width > 1 << 16 || height > 1 << 16) {
      throw ShapeMismatchError(path.string() + ": invalid label raster dimensions");
    }
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (bytes.size() != 8 + 2 * n) {
      throw ShapeMismatchError(path.string() + ": expected " + std::to_string(8 + 2 * n) +
                               " bytes, found " + std::to_string(bytes.size()));
    }
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = static_cast<std::uint16_t>(bytes[8 + 2 * i] | (bytes[9 + 2 * i] << 8));
    }
  }
  int max_label = 0;
  for (std::uint16_t v : values) max_label = std::max<int>(max_label, v);
  mask = LabelMask(width, height, max_label + 1);
  mask.labels = std::move(values);
  return mask;
}

void write_binary_mask(const BinaryMask& mask, const fs::path& path) {
  const std::string header = "P5\n" + std::to_string(mask.width) + " " +
                             std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint8_t v : mask.membership) bytes.push_back(v ? 255 : 0);
  write_bytes(path, bytes);
}

void write_png(const RgbImage& image, const fs::path& path) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ShapeMismatchError("write_png: malformed image");
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0,
                                 nullptr)) {
    throw IoError("PNG encoding failed: " + std::string(png.message));
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, image.pixels.data(),
                                 0, nullptr)) {
    throw IoError("PNG encoding failed: " + std::string(png.message));
  }
  bytes.resize(size);
  write_bytes(path, bytes);
}

RgbImage read_image(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    const auto h = parse_netpbm(bytes, path);
    if (h.maxval != 255) throw SchemaError(path.string() + ": only 8-bit PPM is supported");
    RgbImage img(h.width, h.height);
    if (bytes.size() - h.data_offset < img.pixels.size()) {
      throw IoError(path.string() + ": truncated PPM payload");
    }
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                img.pixels.size(), img.pixels.begin());
    return img;
  }

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw SchemaError(path.string() + ": not a PNG or PPM image (" +
                      std::string(png.message) + ")");
  }
  png.format = PNG_FORMAT_RGB;
  RgbImage img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError(path.string() + ": PNG decoding failed (" + msg + ")");
  }
  return img;
}

}  // namespace attnseg
