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

#include "attnseg/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attnseg/error.hpp"
#include "attnseg/parallel.hpp"

namespace attnseg {

namespace {

// One output sample along an axis: lerp between src[lo] and src[hi].
struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> axis_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  for (int p = 0; p < dst; ++p) {
    double s = (p + 0.5) * src / dst - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[p] = {lo, hi, s - lo};
  }
  return taps;
}

template <typename T>
std::vector<T> resize_impl(std::span<const T> src, int sw, int sh, int dw,
                           int dh) {
  if (sw < 1 || sh < 1 || dw < 1 || dh < 1) {
    throw InvalidArgumentError("resize: dimensions must be positive");
  }
  if (src.size() != static_cast<std::size_t>(sw) * sh) {
    throw ShapeMismatchError("resize: source holds " + std::to_string(src.size()) +
                             " values, expected " + std::to_string(sw * sh));
  }
  const auto xt = axis_taps(sw, dw);
  const auto yt = axis_taps(sh, dh);
  std::vector<T> out(static_cast<std::size_t>(dw) * dh);
  for (int y = 0; y < dh; ++y) {
    const Tap& ty = yt[y];
    const T* r0 = src.data() + static_cast<std::size_t>(ty.lo) * sw;
    const T* r1 = src.data() + static_cast<std::size_t>(ty.hi) * sw;
    T* o = out.data() + static_cast<std::size_t>(y) * dw;
    for (int x = 0; x < dw; ++x) {
      const Tap& tx = xt[x];
      const double top = r0[tx.lo] + (r0[tx.hi] - static_cast<double>(r0[tx.lo])) * tx.frac;
      const double bot = r1[tx.lo] + (r1[tx.hi] - static_cast<double>(r1[tx.lo])) * tx.frac;
      o[x] = static_cast<T>(top + (bot - top) * ty.frac);
    }
  }
  return out;
}

}  // namespace

std::vector<double> resize_bilinear(std::span<const double> src, int sw, int sh,
                                    int dw, int dh) {
  return resize_impl(src, sw, sh, dw, dh);
}

std::vector<float> resize_bilinear(std::span<const float> src, int sw, int sh,
                                   int dw, int dh) {
  return resize_impl(src, sw, sh, dw, dh);
}

std::vector<double> upsample_bilinear(std::span<const double> map, int w,
                                      int target) {
  if (w < 1) throw InvalidArgumentError("upsample: source size must be >= 1");
  if (target < w) {
    throw InvalidArgumentError("upsample: target " + std::to_string(target) +
                               " is smaller than source " + std::to_string(w));
  }
  return resize_impl(map, w, w, target, target);
}

WeightVector compute_weights(std::span<const int> resolutions) {
  if (resolutions.empty()) {
    throw InvalidArgumentError("compute_weights: empty resolution list");
  }
  double total = 0.0;
  for (int w : resolutions) {
    if (w < 1) throw InvalidArgumentError("compute_weights: resolution must be >= 1");
    total += w;
  }
  WeightVector r;
  r.values.reserve(resolutions.size());
  for (int w : resolutions) r.values.push_back(w / total);
  return r;
}

WeightVector explicit_weights(std::vector<double> values) {
  if (values.empty()) throw InvalidArgumentError("weights: empty list");
  double total = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgumentError("weights must be finite and nonnegative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgumentError("weights sum to " + std::to_string(total) +
                               ", expected 1 within 1e-9");
  }
  return WeightVector{std::move(values)};
}

AggregatedTensor aggregate(std::span<const AttentionTensor> tensors,
                           const WeightVector& weights, int target) {
  if (tensors.empty()) throw InvalidArgumentError("aggregate: no tensors");
  if (weights.size() != tensors.size()) {
    throw InvalidArgumentError("aggregate: " + std::to_string(weights.size()) +
                               " weights for " + std::to_string(tensors.size()) +
                               " tensors");
  }
  if (target < 1 || target > kMaxTensorResolution) {
    throw InvalidArgumentError("aggregate: target resolution out of range");
  }
  for (const auto& t : tensors) {
    if (t.resolution < 1 || t.resolution > target || target % t.resolution != 0) {
      throw InvalidArgumentError("aggregate: resolution " +
                                 std::to_string(t.resolution) + " of layer " +
                                 std::to_string(t.layer_id) +
                                 " does not divide target " + std::to_string(target));
    }
  }

  const std::size_t n = static_cast<std::size_t>(target) * target;

  // Bilinear resampling is linear, so tensors sharing a resolution are
  // combined before upsampling.
  struct Group {
    int w = 0;
    std::vector<std::size_t> members;
    std::vector<double> upsampled;  // w^2 slices of target^2, only for w < target
  };
  std::vector<Group> groups;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const int w = tensors[k].resolution;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [w](const Group& g) { return g.w == w; });
    if (it == groups.end()) {
      groups.push_back({w, {}, {}});
      it = groups.end() - 1;
    }
    it->members.push_back(k);
  }
  for (Group& g : groups) {
    if (g.w == target) continue;
    const std::size_t size = static_cast<std::size_t>(g.w) * g.w;
    std::vector<double> combined(size * size, 0.0);
    for (std::size_t k : g.members) {
      const double rk = weights[k];
      const float* src = tensors[k].data.data();
      for (std::size_t i = 0; i < combined.size(); ++i) combined[i] += rk * src[i];
    }
    g.upsampled.resize(size * n);
    parallel_for(0, static_cast<std::int64_t>(size), [&](std::int64_t s) {
      const auto up = resize_impl<double>(
          std::span<const double>(combined.data() + s * size, size), g.w, g.w, target, target);
      std::copy(up.begin(), up.end(), g.upsampled.begin() + s * n);
    });
  }

  AggregatedTensor result;
  result.resolution = target;
  result.data.resize(n * n);
  parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t flat) {
    const int I = static_cast<int>(flat / target);
    const int J = static_cast<int>(flat % target);
    std::vector<double> acc(n, 0.0);
    for (const Group& g : groups) {
      if (g.w == target) {
        for (std::size_t k : g.members) {
          const double rk = weights[k];
          const auto src = tensors[k].slice(I, J);
          for (std::size_t p = 0; p < n; ++p) acc[p] += rk * src[p];
        }
        continue;
      }
      const int delta = target / g.w;
      const double* src =
          g.upsampled.data() + (static_cast<std::size_t>(I / delta) * g.w + J / delta) * n;
      for (std::size_t p = 0; p < n; ++p) acc[p] += src[p];
    }
    float* dst = result.data.data() + static_cast<std::size_t>(flat) * n;
    double sum = 0.0;
    for (double v : acc) sum += v;
    if (sum > 0.0) {
      const double inv = 1.0 / sum;
      for (std::size_t p = 0; p < n; ++p) dst[p] = static_cast<float>(acc[p] * inv);
    } else {
      std::fill(dst, dst + n, static_cast<float>(1.0 / n));
    }
  });
  return result;
}

}  // namespace attnseg
