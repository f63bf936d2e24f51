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

#ifndef ATTNSEG_ATTENTION_HPP_
#define ATTNSEG_ATTENTION_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "attnseg/tensor_io.hpp"

namespace attnseg {

// Bilinear resampling with half-pixel sample centers: output pixel p reads
// source coordinate (p + 0.5) * src / dst - 0.5, clamped to [0, src - 1].
// Maps are row-major, height x width.
std::vector<double> resize_bilinear(std::span<const double> src, int src_width,
                                    int src_height, int dst_width,
                                    int dst_height);
std::vector<float> resize_bilinear(std::span<const float> src, int src_width,
                                   int src_height, int dst_width,
                                   int dst_height);

// Square upsampling, w x w -> target x target. Requires target >= w >= 1.
std::vector<double> upsample_bilinear(std::span<const double> map, int w,
                                      int target);

// Per-tensor aggregation weights R_k; they sum to 1.
struct WeightVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
};

// R_k = w_k / sum_j w_j.
WeightVector compute_weights(std::span<const int> resolutions);

// Validates caller-supplied weights: nonnegative, finite, summing to 1
// within 1e-9.
WeightVector explicit_weights(std::vector<double> values);

// The aggregated attention tensor A_f: every slice (I, J) is a probability
// map over target x target locations.
struct AggregatedTensor {
  int resolution = 0;
  std::vector<float> data;

  std::size_t slice_size() const {
    return static_cast<std::size_t>(resolution) * resolution;
  }
  std::size_t slice_count() const { return slice_size(); }

  std::span<const float> slice(std::size_t flat) const {
    return {data.data() + flat * slice_size(), slice_size()};
  }
  std::span<const float> slice(int i, int j) const {
    return slice(static_cast<std::size_t>(i) * resolution + j);
  }
};

// Upsamples the spatial dims of every tensor to target, sums
// weights[k] * upsampled_k[I / d_k, J / d_k] over k in ascending order
// (d_k = target / w_k, floor division), then renormalizes every slice. A slice
// whose sum is zero becomes uniform.
AggregatedTensor aggregate(std::span<const AttentionTensor> tensors,
                           const WeightVector& weights, int target);

}  // namespace attnseg

#endif  // ATTNSEG_ATTENTION_HPP_
