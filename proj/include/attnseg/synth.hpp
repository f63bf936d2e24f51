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

#ifndef ATTNSEG_SYNTH_HPP_
#define ATTNSEG_SYNTH_HPP_

// Synthetic attention tensor sets with a planted segmentation. At noise 0
// every slice is uniform over the pixels of its own region, so slices from
// the same region are identical and slices from different regions are not.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attnseg/mask.hpp"
#include "attnseg/tensor_io.hpp"

namespace attnseg {

struct PlantedScene {
  int resolution = 64;
  int num_regions = 0;
  std::vector<int> region_map;  // resolution x resolution, labels in [0, K)
  double noise = 0.0;           // alpha in [0, 1]
  std::uint64_t seed = 0;

  // Throws InvalidArgumentError on an empty region or bad noise level.
  void validate() const;
  LabelMask as_label_mask() const;
};

// K parallel bands (orientation drawn from the seed) whose widths are whole
// multiples of `block` pixels and differ by at most a factor of two between
// neighbours. Blocks aligned to the coarsest tensor keep every resolution's
// majority vote identical to the full-resolution map.
PlantedScene make_band_scene(int regions, int resolution, int block, double noise,
                             std::uint64_t seed);

struct ResolutionCount {
  int resolution = 0;
  int count = 0;
};

// {r:5, r/2:5, r/4:5, r/8:1}, the self-attention census of an SD v1-class
// U-Net at latent resolution r.
std::vector<ResolutionCount> default_census(int resolution = 64);

// "64:5,32:5,16:5,8:1"
std::vector<ResolutionCount> parse_census(const std::string& text);

// Majority vote over (resolution / w)^2 blocks; ties go to the lower label.
std::vector<int> downsample_majority(std::span<const int> region_map, int resolution,
                                     int w);

struct GeneratedSet {
  TensorSetManifest manifest;
  std::vector<AttentionTensor> tensors;
  std::vector<std::string> warnings;  // regions lost to downsampling
};

// Slice (I, J) of a tensor at resolution w is (1 - a) U_r + a U_all, with r
// the region of (I, J) in the w x w majority map. For a > 0 each entry is
// then scaled by an independent Gamma(1/a, a) draw and the slice
// renormalized; draws come from a per-slice stream derived from the seed.
GeneratedSet generate_tensor_set(const PlantedScene& scene,
                                 std::span<const ResolutionCount> census);

// Writes manifest.json, one ADZT file per tensor, and the region map as PGM
// at truth_path.
void write_generated_set(const GeneratedSet& set, const PlantedScene& scene,
                         const std::filesystem::path& dir,
                         const std::filesystem::path& truth_path);

}  // namespace attnseg

#endif  // ATTNSEG_SYNTH_HPP_
