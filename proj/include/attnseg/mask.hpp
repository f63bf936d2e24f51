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

#ifndef ATTNSEG_MASK_HPP_
#define ATTNSEG_MASK_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attnseg/merging.hpp"

namespace attnseg {

// Integer label raster; every pixel carries a label in [0, num_labels).
struct LabelMask {
  int width = 0;
  int height = 0;
  int num_labels = 0;
  std::vector<std::uint16_t> labels;  // row-major

  LabelMask() = default;
  LabelMask(int w, int h, int count);

  std::uint16_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t pixel_count() const { return labels.size(); }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> membership;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), membership(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const {
    return membership[static_cast<std::size_t>(y) * width + x] != 0;
  }
  std::size_t count() const;
};

// 8-bit interleaved RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
};

// Upsamples every proposal to out_width x out_height and labels each pixel
// with the index of the largest value; ties go to the lowest index.
LabelMask nms_mask(const ProposalList& proposals, int out_width, int out_height);

// All pixels sharing the label found at (x, y).
BinaryMask select_region(const LabelMask& mask, int x, int y);

// Pixels whose label is nonzero.
BinaryMask binary_from_labels(const LabelMask& mask);

struct OverlayStyle {
  double fill_opacity = 0.0;  // region tint strength in [0, 1]
};

// Region boundaries in green, the optional ground-truth boundary in red on
// top. A pixel is on a boundary when its right or lower neighbour differs.
RgbImage render_overlay(const RgbImage& image, const LabelMask& mask,
                        const BinaryMask* truth, const OverlayStyle& style = {});

// Fill colour for a label; stable across runs.
std::array<std::uint8_t, 3> palette_color(int label);

// --- files ---------------------------------------------------------------

// PGM (P5, 8-bit, label values stored directly) when num_labels <= 255,
// otherwise raw: width u32 | height u32 | u16 labels, all little-endian.
void write_label_mask(const LabelMask& mask, const std::filesystem::path& path);
const char* label_mask_extension(const LabelMask& mask);

// Reads either format (sniffed from the leading "P5"). PGM files with maxval
// above 255 are read as 16-bit big-endian samples.
LabelMask read_label_mask(const std::filesystem::path& path);

// PGM with 0 / 255 samples.
void write_binary_mask(const BinaryMask& mask, const std::filesystem::path& path);

void write_png(const RgbImage& image, const std::filesystem::path& path);
// PNG or binary PPM (P6).
RgbImage read_image(const std::filesystem::path& path);

}  // namespace attnseg

#endif  // ATTNSEG_MASK_HPP_
