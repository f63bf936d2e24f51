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

#include "attnseg/mask.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnseg/error.hpp"
#include "attnseg/parallel.hpp"

namespace attnseg {

LabelMask::LabelMask(int w, int h, int count)
    : width(w), height(h), num_labels(count) {
  if (w < 1 || h < 1) throw InvalidArgumentError("mask dimensions must be positive");
  if (count < 1 || count > 65536) {
    throw InvalidArgumentError("label count " + std::to_string(count) +
                               " out of range [1, 65536]");
  }
  labels.assign(static_cast<std::size_t>(w) * h, 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(
      std::count_if(membership.begin(), membership.end(),
                    [](std::uint8_t v) { return v != 0; }));
}

LabelMask nms_mask(const ProposalList& proposals, int out_width, int out_height) {
  if (proposals.proposals.empty()) {
    throw InvalidArgumentError("nms_mask: empty proposal list");
  }
  const int res = proposals.resolution;
  if (out_width < res || out_height < res) {
    throw InvalidArgumentError("nms_mask: output " + std::to_string(out_width) +
                               "x" + std::to_string(out_height) +
                               " is smaller than proposal resolution " +
                               std::to_string(res));
  }
  const auto count = static_cast<int>(proposals.proposals.size());
  LabelMask mask(out_width, out_height, count);
  std::vector<float> best;
  for (int k = 0; k < count; ++k) {
    const auto& map = proposals.proposals[k].map;
    if (map.size() != static_cast<std::size_t>(res) * res) {
      throw ShapeMismatchError("nms_mask: proposal " + std::to_string(k) +
                               " has the wrong size");
    }
    auto up = resize_bilinear(std::span<const float>(map), res, res, out_width,
                              out_height);
    if (k == 0) {
      best = std::move(up);
      continue;
    }
    // Strict comparison keeps the lowest index on ties.
    parallel_for(0, out_height, [&](std::int64_t y) {
      const std::size_t row = static_cast<std::size_t>(y) * out_width;
      for (int x = 0; x < out_width; ++x) {
        if (up[row + x] > best[row + x]) {
          best[row + x] = up[row + x];
          mask.labels[row + x] = static_cast<std::uint16_t>(k);
        }
      }
    });
  }
  return mask;
}

BinaryMask select_region(const LabelMask& mask, int x, int y) {
  if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) {
    throw InvalidArgumentError("select_region: point (" + std::to_string(x) +
                               ", " + std::to_string(y) + ") outside " +
                               std::to_string(mask.width) + "x" +
                               std::to_string(mask.height) + " mask");
  }
  const std::uint16_t label = mask.at(x, y);
  BinaryMask out(mask.width, mask.height);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    out.membership[p] = mask.labels[p] == label;
  }
  return out;
}

BinaryMask binary_from_labels(const LabelMask& mask) {
  BinaryMask out(mask.width, mask.height);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    out.membership[p] = mask.labels[p] != 0;
  }
  return out;
}

std::array<std::uint8_t, 3> palette_color(int label) {
  // Golden-ratio hue walk, fixed saturation and value.
  const double hue = std::fmod(label * 0.6180339887498949, 1.0) * 6.0;
  const double s = 0.65, v = 0.95;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto to8 = [](double c) { return static_cast<std::uint8_t>(std::lround(c * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

namespace {

template <typename Get>
bool on_boundary(const Get& get, int x, int y, int w, int h) {
  const auto here = get(x, y);
  return (x + 1 < w && get(x + 1, y) != here) || (y + 1 < h && get(x, y + 1) != here);
}

void paint(RgbImage& img, int x, int y, std::uint8_t r, std::uint8_t g,
           std::uint8_t b) {
  std::uint8_t* px = img.pixels.data() + (static_cast<std::size_t>(y) * img.width + x) * 3;
  px[0] = r;
  px[1] = g;
  px[2] = b;
}

}  // namespace

RgbImage render_overlay(const RgbImage& image, const LabelMask& mask,
                        const BinaryMask* truth, const OverlayStyle& style) {
  if (image.width != mask.width || image.height != mask.height) {
    throw ShapeMismatchError("render_overlay: image is " + std::to_string(image.width) +
                             "x" + std::to_string(image.height) + ", mask is " +
                             std::to_string(mask.width) + "x" +
                             std::to_string(mask.height));
  }
  if (truth && (truth->width != mask.width || truth->height != mask.height)) {
    throw ShapeMismatchError("render_overlay: ground truth dimensions differ from mask");
  }
  if (!(style.fill_opacity >= 0.0 && style.fill_opacity <= 1.0)) {
    throw InvalidArgumentError("render_overlay: fill opacity must lie in [0, 1]");
  }
  const int w = mask.width, h = mask.height;
  RgbImage out = image;

  if (style.fill_opacity > 0.0) {
    const double a = style.fill_opacity;
    for (std::size_t p = 0; p < mask.labels.size(); ++p) {
      const auto color = palette_color(mask.labels[p]);
      for (int c = 0; c < 3; ++c) {
        const double blended = (1.0 - a) * image.pixels[p * 3 + c] + a * color[c];
        out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(blended));
      }
    }
  }

  auto label_at = [&](int x, int y) { return mask.at(x, y); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (on_boundary(label_at, x, y, w, h)) paint(out, x, y, 0, 255, 0);
    }
  }
  if (truth) {
    auto member_at = [&](int x, int y) { return truth->at(x, y); };
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (on_boundary(member_at, x, y, w, h)) paint(out, x, y, 255, 0, 0);
      }
    }
  }
  return out;
}

}  // namespace attnseg
