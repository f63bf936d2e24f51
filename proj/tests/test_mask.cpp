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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "attnseg/error.hpp"
#include "attnseg/mask.hpp"

namespace attnseg {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("attnseg_mask_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Proposal constant_proposal(int res, float v) {
  Proposal p;
  p.map.assign(static_cast<std::size_t>(res) * res, v);
  return p;
}

// Map concentrated on the columns [x0, x1).
Proposal column_proposal(int res, int x0, int x1) {
  Proposal p;
  p.map.assign(static_cast<std::size_t>(res) * res, 0.0f);
  const float v = 1.0f / static_cast<float>(res * (x1 - x0));
  for (int y = 0; y < res; ++y) {
    for (int x = x0; x < x1; ++x) p.map[y * res + x] = v;
  }
  return p;
}

RgbImage gray_image(int w, int h, std::uint8_t level) {
  RgbImage img(w, h);
  std::fill(img.pixels.begin(), img.pixels.end(), level);
  return img;
}

TEST(NmsMask, SingleProposalLabelsEverything) {
  ProposalList pl;
  pl.resolution = 4;
  pl.proposals.push_back(constant_proposal(4, 1.0f / 16));
  const LabelMask m = nms_mask(pl, 16, 16);
  EXPECT_EQ(m.num_labels, 1);
  for (auto l : m.labels) EXPECT_EQ(l, 0);
}

TEST(NmsMask, DisjointColumnsSplitDown) {
  ProposalList pl;
  pl.resolution = 8;
  pl.proposals.push_back(column_proposal(8, 0, 4));
  pl.proposals.push_back(column_proposal(8, 4, 8));
  const LabelMask m = nms_mask(pl, 32, 32);
  EXPECT_EQ(m.num_labels, 2);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) EXPECT_EQ(m.at(x, y), x < 16 ? 0 : 1) << x << "," << y;
  }
}

TEST(NmsMask, TiesGoToLowestIndex) {
  ProposalList pl;
  pl.resolution = 4;
  pl.proposals.push_back(constant_proposal(4, 1.0f / 16));
  pl.proposals.push_back(constant_proposal(4, 1.0f / 16));
  pl.proposals.push_back(constant_proposal(4, 1.0f / 16));
  const LabelMask m = nms_mask(pl, 4, 4);
  EXPECT_EQ(m.num_labels, 3);
  for (auto l : m.labels) EXPECT_EQ(l, 0);
}

TEST(NmsMask, Validation) {
  ProposalList pl;
  pl.resolution = 8;
  EXPECT_THROW(nms_mask(pl, 16, 16), InvalidArgumentError);
  pl.proposals.push_back(constant_proposal(8, 1.0f / 64));
  EXPECT_THROW(nms_mask(pl, 4, 16), InvalidArgumentError);
}

TEST(SelectRegion, PicksLabelUnderPoint) {
  LabelMask m(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) m.labels[y * 4 + x] = static_cast<std::uint16_t>(x < 2 ? 0 : (y < 2 ? 1 : 2));
  }
  const BinaryMask b = select_region(m, 3, 3);
  EXPECT_EQ(b.count(), 4u);
  EXPECT_TRUE(b.at(2, 2));
  EXPECT_FALSE(b.at(2, 1));
  EXPECT_THROW(select_region(m, 4, 0), InvalidArgumentError);
  EXPECT_THROW(select_region(m, 0, -1), InvalidArgumentError);
}

TEST(SelectRegion, CheckerboardIsNotConnectivityBased) {
  LabelMask m(6, 6, 2);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) m.labels[y * 6 + x] = static_cast<std::uint16_t>((x + y) % 2);
  }
  const BinaryMask b = select_region(m, 0, 0);
  EXPECT_EQ(b.count(), 18u);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) EXPECT_EQ(b.at(x, y), (x + y) % 2 == 0);
  }
}

TEST(RenderOverlay, UniformMaskLeavesImageUntouched) {
  const RgbImage img = gray_image(8, 8, 77);
  const LabelMask m(8, 8, 1);
  const RgbImage out = render_overlay(img, m, nullptr);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(RenderOverlay, VerticalSplitDrawsOneBoundaryColumn) {
  const RgbImage img = gray_image(8, 8, 10);
  LabelMask m(8, 8, 2);
  for (int y = 0; y < 8; ++y) {
    for (int x = 4; x < 8; ++x) m.labels[y * 8 + x] = 1;
  }
  const RgbImage out = render_overlay(img, m, nullptr);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const std::uint8_t* px = out.pixels.data() + (y * 8 + x) * 3;
      if (x == 3) {
        EXPECT_EQ(px[0], 0);
        EXPECT_EQ(px[1], 255);
        EXPECT_EQ(px[2], 0);
      } else {
        EXPECT_EQ(px[0], 10);
        EXPECT_EQ(px[1], 10);
        EXPECT_EQ(px[2], 10);
      }
    }
  }
}

TEST(RenderOverlay, TruthBoundaryDrawnOverMaskBoundary) {
  const RgbImage img = gray_image(8, 8, 0);
  LabelMask m(8, 8, 2);
  BinaryMask truth(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 4; x < 8; ++x) {
      m.labels[y * 8 + x] = 1;
      truth.membership[y * 8 + x] = 1;
    }
  }
  const RgbImage out = render_overlay(img, m, &truth);
  const std::uint8_t* px = out.pixels.data() + 3 * 3;
  EXPECT_EQ(px[0], 255);
  EXPECT_EQ(px[1], 0);
}

TEST(RenderOverlay, Validation) {
  const RgbImage img = gray_image(8, 8, 0);
  const LabelMask m(4, 8, 1);
  EXPECT_THROW(render_overlay(img, m, nullptr), ShapeMismatchError);
  const LabelMask ok(8, 8, 1);
  EXPECT_THROW(render_overlay(img, ok, nullptr, OverlayStyle{1.5}), InvalidArgumentError);
}

// Golden rendering: a three-region mask with tint and a ground-truth outline.
RgbImage golden_scene() {
  RgbImage img(48, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      std::uint8_t* px = img.pixels.data() + (y * 48 + x) * 3;
      px[0] = static_cast<std::uint8_t>(x * 5);
      px[1] = static_cast<std::uint8_t>(y * 7);
      px[2] = 128;
    }
  }
  LabelMask m(48, 32, 3);
  BinaryMask truth(48, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      m.labels[y * 48 + x] = static_cast<std::uint16_t>(x < 16 ? 0 : (y < 16 ? 1 : 2));
      truth.membership[y * 48 + x] = (x - 30) * (x - 30) + (y - 14) * (y - 14) < 64;
    }
  }
  return render_overlay(img, m, &truth, OverlayStyle{0.4});
}

TEST(RenderOverlay, MatchesGoldenImage) {
  const fs::path golden = fs::path(ATTNSEG_FIXTURE_DIR) / "overlay_golden.png";
  const RgbImage out = golden_scene();
  if (std::getenv("ATTNSEG_UPDATE_GOLDEN")) write_png(out, golden);
  ASSERT_TRUE(fs::exists(golden)) << golden;
  const RgbImage want = read_image(golden);
  ASSERT_EQ(want.width, out.width);
  ASSERT_EQ(want.height, out.height);
  EXPECT_EQ(want.pixels, out.pixels);
}

TEST(LabelMaskIo, PgmRoundTrip) {
  TempDir dir;
  LabelMask m(5, 3, 7);
  for (std::size_t p = 0; p < m.labels.size(); ++p) m.labels[p] = static_cast<std::uint16_t>(p % 7);
  const fs::path path = dir.path() / (std::string("m") + label_mask_extension(m));
  EXPECT_EQ(path.extension(), ".pgm");
  write_label_mask(m, path);
  const LabelMask back = read_label_mask(path);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.labels, m.labels);
}

TEST(LabelMaskIo, WideLabelRoundTrip) {
  TempDir dir;
  LabelMask m(20, 20, 400);
  for (std::size_t p = 0; p < m.labels.size(); ++p) m.labels[p] = static_cast<std::uint16_t>(p);
  EXPECT_STREQ(label_mask_extension(m), ".lbl");
  const fs::path path = dir.path() / "m.lbl";
  write_label_mask(m, path);
  const LabelMask back = read_label_mask(path);
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_EQ(back.num_labels, 400);
}

TEST(LabelMaskIo, SixteenBitPgmIsAccepted) {
  TempDir dir;
  const fs::path path = dir.path() / "wide.pgm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 1\n65535\n";
    const unsigned char px[4] = {0x01, 0x02, 0x00, 0x03};
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  const LabelMask m = read_label_mask(path);
  EXPECT_EQ(m.labels, (std::vector<std::uint16_t>{0x0102, 0x0003}));
}

TEST(LabelMaskIo, RejectsGarbage) {
  TempDir dir;
  const fs::path path = dir.path() / "bad.pgm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 4\n255\n";  // no payload
  }
  EXPECT_THROW(read_label_mask(path), IoError);
  EXPECT_THROW(read_label_mask(dir.path() / "missing.pgm"), IoError);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir;
  RgbImage img(7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  write_png(img, dir.path() / "x.png");
  const RgbImage back = read_image(dir.path() / "x.png");
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.pixels, img.pixels);
}

}  // namespace
}  // namespace attnseg
