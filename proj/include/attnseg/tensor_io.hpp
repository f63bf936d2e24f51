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

#ifndef ATTNSEG_TENSOR_IO_HPP_
#define ATTNSEG_TENSOR_IO_HPP_

// ADZT tensor files and the JSON manifest describing one image's export.
//
// ADZT layout (little-endian throughout):
//   offset  0  magic    "ADZT"
//   offset  4  version  u32 = 1
//   offset  8  ndim     u32 = 4
//   offset 12  dims     4 x u32, all equal to the resolution w
//   offset 28  payload  w^4 x float32, row-major in (I, J, y, x) order

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace attnseg {

inline constexpr char kTensorMagic[4] = {'A', 'D', 'Z', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 28;
// 128^4 float32 values is 1 GiB; nothing larger is accepted.
inline constexpr int kMaxTensorResolution = 128;

// One self-attention tensor at resolution w. Slice (I, J) is a probability
// map over the w x w spatial grid.
struct AttentionTensor {
  int layer_id = 0;
  int resolution = 0;
  std::vector<float> data;

  AttentionTensor() = default;
  AttentionTensor(int layer, int res);

  std::size_t slice_size() const {
    return static_cast<std::size_t>(resolution) * resolution;
  }
  std::size_t slice_count() const { return slice_size(); }

  std::span<float> slice(int i, int j) {
    return {data.data() + slice_offset(i, j), slice_size()};
  }
  std::span<const float> slice(int i, int j) const {
    return {data.data() + slice_offset(i, j), slice_size()};
  }

  float at(int i, int j, int y, int x) const {
    return data[slice_offset(i, j) + static_cast<std::size_t>(y) * resolution + x];
  }

 private:
  std::size_t slice_offset(int i, int j) const {
    return (static_cast<std::size_t>(i) * resolution + j) * slice_size();
  }
};

struct ManifestEntry {
  int layer_id = 0;
  int resolution = 0;
  std::string file;
};

struct TensorSetManifest {
  std::string image_id;
  int latent_resolution = 64;
  int timestep = 0;
  std::string extractor_info;
  std::vector<ManifestEntry> entries;
};

struct TensorSet {
  TensorSetManifest manifest;
  std::vector<AttentionTensor> tensors;  // same order as manifest.entries
  // Slices whose sum drifted from 1 by more than kSilentDrift and were
  // renormalized on load.
  std::size_t renormalized_slices = 0;
  double max_drift = 0.0;
  double mean_drift = 0.0;
};

// Slice sums within this distance of 1 are accepted as-is.
inline constexpr double kSilentDrift = 1e-4;
// Slice sums further than this from 1 are rejected.
inline constexpr double kMaxDrift = 1e-2;

void write_tensor(const AttentionTensor& tensor, std::ostream& sink);
void write_tensor_file(const AttentionTensor& tensor,
                       const std::filesystem::path& path);

// Validates magic, version, ndim, square shape, and finite nonnegative
// values. Never returns a partially read tensor.
AttentionTensor read_tensor(std::istream& source);
AttentionTensor read_tensor_file(const std::filesystem::path& path);

TensorSetManifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const TensorSetManifest& manifest);

TensorSet load_tensor_set(const std::filesystem::path& manifest_path);

// Writes each tensor to dir/<entry.file> and the manifest to
// dir/manifest.json. Entries and tensors correspond by position.
void write_tensor_set(const std::filesystem::path& dir,
                      const TensorSetManifest& manifest,
                      std::span<const AttentionTensor> tensors);

// Writes via a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& text);

}  // namespace attnseg

#endif  // ATTNSEG_TENSOR_IO_HPP_
