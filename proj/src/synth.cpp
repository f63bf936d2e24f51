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

#include "attnseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "attnseg/error.hpp"
#include "attnseg/parallel.hpp"

namespace attnseg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t layer, std::uint64_t slice) {
  return splitmix64(splitmix64(splitmix64(seed) ^ layer) ^ slice);
}

// Jitter factors are resampled from a seeded pool of Gamma(1/alpha, alpha)
// draws. Each slice walks the pool from a hashed start with a hashed odd
// stride, so the entries of one slice never share a draw.
constexpr std::size_t kPoolBits = 18;

std::vector<float> jitter_pool(double alpha, std::uint64_t seed) {
  std::vector<float> pool(std::size_t{1} << kPoolBits);
  std::mt19937_64 rng(splitmix64(seed ^ 0x6a09e667f3bcc909ull));
  std::gamma_distribution<double> gamma(1.0 / alpha, alpha);
  for (float& v : pool) v = static_cast<float>(gamma(rng));
  return pool;
}

}  // namespace

void PlantedScene::validate() const {
  if (resolution < 1 || resolution > kMaxTensorResolution) {
    throw InvalidArgumentError("scene resolution out of range");
  }
  if (region_map.size() != static_cast<std::size_t>(resolution) * resolution) {
    throw ShapeMismatchError("region map size does not match scene resolution");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) {
    throw InvalidArgumentError("noise level must lie in [0, 1]");
  }
  if (num_regions < 1) throw InvalidArgumentError("scene needs at least one region");
  std::vector<std::size_t> sizes(num_regions, 0);
  for (int r : region_map) {
    if (r < 0 || r >= num_regions) {
      throw InvalidArgumentError("region label " + std::to_string(r) + " out of range");
    }
    ++sizes[r];
  }
  for (int r = 0; r < num_regions; ++r) {
    if (sizes[r] == 0) throw InvalidArgumentError("region " + std::to_string(r) + " is empty");
  }
}

LabelMask PlantedScene::as_label_mask() const {
  LabelMask mask(resolution, resolution, num_regions);
  for (std::size_t p = 0; p < region_map.size(); ++p) {
    mask.labels[p] = static_cast<std::uint16_t>(region_map[p]);
  }
  return mask;
}

PlantedScene make_band_scene(int regions, int resolution, int block, double noise,
                             std::uint64_t seed) {
  if (block < 1 || resolution % block != 0) {
    throw InvalidArgumentError("block " + std::to_string(block) +
                               " must divide resolution " + std::to_string(resolution));
  }
  const int units = resolution / block;
  if (regions < 1 || regions > units) {
    throw InvalidArgumentError("cannot place " + std::to_string(regions) +
                               " bands of " + std::to_string(block) + " pixels in " +
                               std::to_string(resolution));
  }

  std::mt19937_64 rng(seed);
  const bool vertical = std::uniform_int_distribution<int>(0, 1)(rng) == 0;

  auto balanced = [&](const std::vector<int>& widths) {
    for (std::size_t b = 1; b < widths.size(); ++b) {
      const int lo = std::min(widths[b - 1], widths[b]);
      const int hi = std::max(widths[b - 1], widths[b]);
      if (hi > 2 * lo) return false;
    }
    return true;
  };
  // Random composition of `units` into `regions` positive parts, drawn by
  // choosing cut points; rejected until neighbouring widths are balanced.
  std::vector<int> widths;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> cuts(units - 1);
    for (int c = 0; c < units - 1; ++c) cuts[c] = c + 1;
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(regions - 1);
    std::sort(cuts.begin(), cuts.end());
    widths.clear();
    int prev = 0;
    for (int c : cuts) {
      widths.push_back(c - prev);
      prev = c;
    }
    widths.push_back(units - prev);
    if (balanced(widths)) break;
    widths.clear();
  }
  if (widths.empty()) {
    // Even split, remainder spread from the first band.
    for (int r = 0; r < regions; ++r) {
      widths.push_back(units / regions + (r < units % regions ? 1 : 0));
    }
  }

  PlantedScene scene;
  scene.resolution = resolution;
  scene.num_regions = regions;
  scene.noise = noise;
  scene.seed = seed;
  scene.region_map.resize(static_cast<std::size_t>(resolution) * resolution);
  std::vector<int> band_of_unit;
  for (int r = 0; r < regions; ++r) band_of_unit.insert(band_of_unit.end(), widths[r], r);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const int along = vertical ? x : y;
      scene.region_map[static_cast<std::size_t>(y) * resolution + x] =
          band_of_unit[along / block];
    }
  }
  scene.validate();
  return scene;
}

std::vector<ResolutionCount> default_census(int resolution) {
  std::vector<ResolutionCount> census;
  const int counts[] = {5, 5, 5, 1};
  for (int level = 0; level < 4; ++level) {
    const int w = resolution >> level;
    if (w < 1 || (w << level) != resolution) break;
    census.push_back({w, counts[level]});
  }
  return census;
}

std::vector<ResolutionCount> parse_census(const std::string& text) {
  std::vector<ResolutionCount> census;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      ResolutionCount rc;
      rc.resolution = std::stoi(item.substr(0, colon));
      rc.count = std::stoi(item.substr(colon + 1));
      if (rc.resolution < 1 || rc.count < 1) throw std::invalid_argument(item);
      census.push_back(rc);
    } catch (const std::exception&) {
      throw InvalidArgumentError("bad census entry \"" + item +
                                 "\", expected RESOLUTION:COUNT");
    }
  }
  if (census.empty()) throw InvalidArgumentError("empty census");
  return census;
}

std::vector<int> downsample_majority(std::span<const int> region_map, int resolution,
                                     int w) {
  if (w < 1 || resolution % w != 0) {
    throw InvalidArgumentError("resolution " + std::to_string(w) + " does not divide " +
                               std::to_string(resolution));
  }
  const int f = resolution / w;
  int labels = 0;
  for (int r : region_map) labels = std::max(labels, r + 1);
  std::vector<int> out(static_cast<std::size_t>(w) * w);
  std::vector<int> votes(labels);
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < w; ++j) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int y = i * f; y < (i + 1) * f; ++y) {
        for (int x = j * f; x < (j + 1) * f; ++x) {
          ++votes[region_map[static_cast<std::size_t>(y) * resolution + x]];
        }
      }
      // max_element returns the first maximum, i.e. the lowest label.
      out[static_cast<std::size_t>(i) * w + j] =
          static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  }
  return out;
}

GeneratedSet generate_tensor_set(const PlantedScene& scene,
                                 std::span<const ResolutionCount> census) {
  scene.validate();
  if (census.empty()) throw InvalidArgumentError("generate_tensor_set: empty census");
  bool has_latent = false;
  for (const auto& rc : census) {
    if (rc.resolution < 1 || scene.resolution % rc.resolution != 0) {
      throw InvalidArgumentError("census resolution " + std::to_string(rc.resolution) +
                                 " does not divide scene resolution " +
                                 std::to_string(scene.resolution));
    }
    if (rc.count < 1) throw InvalidArgumentError("census counts must be positive");
    has_latent |= rc.resolution == scene.resolution;
  }
  if (!has_latent) {
    throw InvalidArgumentError("census must include the scene resolution " +
                               std::to_string(scene.resolution));
  }

  GeneratedSet out;
  out.manifest.latent_resolution = scene.resolution;
  out.manifest.timestep = 0;
  {
    std::ostringstream id;
    id << "synth_k" << scene.num_regions << "_s" << scene.seed;
    out.manifest.image_id = id.str();
    std::ostringstream info;
    info << "synthetic planted scene: regions=" << scene.num_regions
         << " noise=" << scene.noise << " seed=" << scene.seed;
    out.manifest.extractor_info = info.str();
  }

  const double alpha = scene.noise;
  const std::vector<float> pool = alpha > 0.0 ? jitter_pool(alpha, scene.seed) : std::vector<float>{};
  int layer = 0;
  for (const auto& rc : census) {
    const int w = rc.resolution;
    const std::size_t n = static_cast<std::size_t>(w) * w;
    const auto down = downsample_majority(scene.region_map, scene.resolution, w);
    std::vector<std::size_t> sizes(scene.num_regions, 0);
    for (int r : down) ++sizes[r];
    for (int r = 0; r < scene.num_regions; ++r) {
      if (sizes[r] == 0) {
        out.warnings.push_back("region " + std::to_string(r) + " vanishes at resolution " +
                               std::to_string(w));
      }
    }

    for (int copy = 0; copy < rc.count; ++copy, ++layer) {
      AttentionTensor t(layer, w);
      parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t s) {
        const int region = down[s];
        const double inside = (1.0 - alpha) / static_cast<double>(sizes[region]);
        const double floor = alpha / static_cast<double>(n);
        auto slice = t.slice(static_cast<int>(s / w), static_cast<int>(s % w));
        if (alpha == 0.0) {
          const auto v = static_cast<float>(inside);
          for (std::size_t p = 0; p < n; ++p) slice[p] = down[p] == region ? v : 0.0f;
          return;
        }
        const std::uint64_t key = stream_seed(scene.seed, static_cast<std::uint64_t>(layer),
                                              static_cast<std::uint64_t>(s));
        constexpr std::size_t kMask = (std::size_t{1} << kPoolBits) - 1;
        const std::size_t start = key & kMask;
        const std::size_t stride = (splitmix64(key) & kMask) | 1;
        std::vector<double> values(n);
        double sum = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          const double base = (down[p] == region ? inside : 0.0) + floor;
          values[p] = base * pool[(start + p * stride) & kMask];
          sum += values[p];
        }
        for (std::size_t p = 0; p < n; ++p) slice[p] = static_cast<float>(values[p] / sum);
      });
      out.manifest.entries.push_back(
          {layer, w, "layer_" + std::to_string(layer) + "_r" + std::to_string(w) + ".adzt"});
      out.tensors.push_back(std::move(t));
    }
  }
  return out;
}

void write_generated_set(const GeneratedSet& set, const PlantedScene& scene,
                         const std::filesystem::path& dir,
                         const std::filesystem::path& truth_path) {
  write_tensor_set(dir, set.manifest, set.tensors);
  if (truth_path.has_parent_path()) std::filesystem::create_directories(truth_path.parent_path());
  write_label_mask(scene.as_label_mask(), truth_path);
}

}  // namespace attnseg
