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

#include "attnseg/merging.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>

#include "attnseg/error.hpp"
#include "attnseg/parallel.hpp"

namespace attnseg {

void MergeConfig::validate(int resolution) const {
  if (grid_size < 1 || grid_size > resolution) {
    throw InvalidArgumentError("grid size " + std::to_string(grid_size) +
                               " out of range [1, " + std::to_string(resolution) + "]");
  }
  if (iterations < 1) throw InvalidArgumentError("iterations must be >= 1");
  if (std::isnan(tau) || tau < 0.0) {
    throw InvalidArgumentError("tau must be a nonnegative number");
  }
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw InvalidArgumentError("epsilon must lie in (0, 1e-3]");
  }
}

std::vector<GridPoint> anchor_grid(int grid_size, int resolution) {
  if (resolution < 1 || grid_size < 1 || grid_size > resolution) {
    throw InvalidArgumentError("anchor grid size " + std::to_string(grid_size) +
                               " out of range [1, " + std::to_string(resolution) + "]");
  }
  // floor((m + 0.5) * res / M) == floor((2m + 1) * res / 2M), exact in integers.
  std::vector<int> axis(grid_size);
  for (int m = 0; m < grid_size; ++m) {
    axis[m] = static_cast<int>((2LL * m + 1) * resolution / (2LL * grid_size));
  }
  std::vector<GridPoint> points;
  points.reserve(static_cast<std::size_t>(grid_size) * grid_size);
  for (int m = 0; m < grid_size; ++m) {
    for (int n = 0; n < grid_size; ++n) points.push_back({axis[m], axis[n]});
  }
  return points;
}

namespace {

template <typename In, typename Out>
void prepare_into(std::span<const In> map, double eps, Out* p, Out* logp) {
  double sum = 0.0;
  for (In v : map) sum += std::max(static_cast<double>(v), eps);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = std::max(static_cast<double>(map[i]), eps) / sum;
    p[i] = static_cast<Out>(v);
    logp[i] = std::log(static_cast<Out>(v));
  }
}

template <typename T>
double kl_impl(std::span<const T> p, std::span<const T> q, double eps) {
  if (p.size() != q.size()) {
    throw ShapeMismatchError("kl_distance: sizes " + std::to_string(p.size()) +
                             " and " + std::to_string(q.size()) + " differ");
  }
  if (p.empty()) throw InvalidArgumentError("kl_distance: empty distribution");
  if (!(eps > 0.0)) throw InvalidArgumentError("kl_distance: epsilon must be > 0");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(static_cast<double>(p[i])) ||
        !std::isfinite(static_cast<double>(q[i]))) {
      throw NonFiniteValueError("kl_distance: non-finite value at index " +
                                std::to_string(i));
    }
  }
  const std::size_t n = p.size();
  std::vector<double> pp(n), lp(n), qq(n), lq(n);
  prepare_into(p, eps, pp.data(), lp.data());
  prepare_into(q, eps, qq.data(), lq.data());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (pp[i] - qq[i]) * (lp[i] - lq[i]);
  return 0.5 * total;
}

// Distance between two prepared (clamped, renormalized, logged) maps. Lane
// and block structure is fixed, so the result is independent of argument
// order and of the calling thread.
using f32x8 = float __attribute__((vector_size(32)));

inline void load8(f32x8& v, const float* src) { std::memcpy(&v, src, sizeof(v)); }

constexpr std::size_t kLanes = 8;
constexpr std::size_t kBlock = 512;

// Distances from one prepared map to R others. Eight float lanes per
// 512-element block, each block folded into a double; the layout does not
// depend on R, so every pair gets the same bits whichever way it is batched.
// Every term is nonnegative, so partial sums only grow: once all R partial
// distances exceed `bound` the scan stops and the partials are returned.
template <int R>
inline void distance_rows(const float* p, const float* lp, const float* const* q,
                          const float* const* lq, std::size_t n, double bound,
                          double* out) {
  double total[R] = {};
  std::size_t i = 0;
  while (i < n) {
    const std::size_t end = std::min(n, i + kBlock);
    f32x8 lane[R] = {};
    for (; i + kLanes <= end; i += kLanes) {
      f32x8 a, la, b, lb;
      load8(a, p + i);
      load8(la, lp + i);
      for (int r = 0; r < R; ++r) {
        load8(b, q[r] + i);
        load8(lb, lq[r] + i);
        lane[r] += (a - b) * (la - lb);
      }
    }
    for (; i < end; ++i) {
      for (int r = 0; r < R; ++r) lane[r][0] += (p[i] - q[r][i]) * (lp[i] - lq[r][i]);
    }
    bool past = true;
    for (int r = 0; r < R; ++r) {
      double block = 0.0;
      for (std::size_t l = 0; l < kLanes; ++l) block += lane[r][l];
      total[r] += block;
      past = past && 0.5 * total[r] > bound;
    }
    if (past) break;
  }
  for (int r = 0; r < R; ++r) out[r] = 0.5 * total[r];
}

__attribute__((target_clones("avx2", "default")))
void distance_rows4(const float* p, const float* lp, const float* const* q,
                    const float* const* lq, std::size_t n, double bound, double* out) {
  distance_rows<4>(p, lp, q, lq, n, bound, out);
}

__attribute__((target_clones("avx2", "default")))
double prepared_distance(const float* p, const float* lp, const float* q,
                         const float* lq, std::size_t n, double bound) {
  double out;
  distance_rows<1>(p, lp, &q, &lq, n, bound, &out);
  return out;
}

struct PreparedStack {
  std::size_t n = 0;
  std::vector<float> p;
  std::vector<float> logp;

  PreparedStack(std::size_t rows, std::size_t size)
      : n(size), p(rows * size), logp(rows * size) {}

  void set(std::size_t row, std::span<const float> map, double eps) {
    prepare_into(map, eps, p.data() + row * n, logp.data() + row * n);
  }
  const float* row(std::size_t a) const { return p.data() + a * n; }
  const float* log_row(std::size_t a) const { return logp.data() + a * n; }
  // Exact when the distance is <= bound; otherwise some value > bound.
  double distance(std::size_t a, std::size_t b,
                  double bound = std::numeric_limits<double>::infinity()) const {
    return prepared_distance(p.data() + a * n, logp.data() + a * n,
                             p.data() + b * n, logp.data() + b * n, n, bound);
  }
};

// Membership over distinct-map classes.
class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(std::size_t classes) : words_((classes + 63) / 64, 0) {}

  void insert(std::size_t c) { words_[c / 64] |= std::uint64_t{1} << (c % 64); }
  bool contains(std::size_t c) const {
    return (words_[c / 64] >> (c % 64)) & 1u;
  }
  bool subset_of(const ClassSet& other) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (words_[w] & ~other.words_[w]) return false;
    }
    return true;
  }
  std::size_t count() const {
    std::size_t c = 0;
    for (std::uint64_t w : words_) c += static_cast<std::size_t>(__builtin_popcountll(w));
    return c;
  }
  // Calls f(c) for each class in this set but not in `other`.
  template <typename F>
  void for_each_missing_from(const ClassSet& other, F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w] & ~other.words_[w];
      while (bits) {
        f(w * 64 + static_cast<std::size_t>(__builtin_ctzll(bits)));
        bits &= bits - 1;
      }
    }
  }
  void unite(const ClassSet& other) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= other.words_[w];
  }
  bool operator==(const ClassSet&) const = default;

  std::size_t hash() const {
    return std::hash<std::string_view>{}(
        {reinterpret_cast<const char*>(words_.data()), words_.size() * 8});
  }

 private:
  std::vector<std::uint64_t> words_;
};

// Identical A_f maps collapse into one class; distances and means are
// computed per class and weighted by multiplicity.
struct MapClasses {
  std::vector<std::uint32_t> class_of;        // per A_f slice
  std::vector<std::uint32_t> representative;  // per class, first slice index
  std::vector<std::uint32_t> multiplicity;    // per class

  std::size_t size() const { return representative.size(); }
};

MapClasses classify(const AggregatedTensor& af) {
  const std::size_t count = af.slice_count();
  const std::size_t bytes = af.slice_size() * sizeof(float);
  MapClasses mc;
  mc.class_of.resize(count);
  std::vector<std::size_t> hashes(count);
  parallel_for(0, static_cast<std::int64_t>(count), [&](std::int64_t s) {
    const auto slice = af.slice(static_cast<std::size_t>(s));
    hashes[s] = std::hash<std::string_view>{}(
        {reinterpret_cast<const char*>(slice.data()), bytes});
  });
  std::unordered_map<std::size_t, std::vector<std::uint32_t>> buckets;
  for (std::size_t s = 0; s < count; ++s) {
    auto& bucket = buckets[hashes[s]];
    const float* data = af.slice(s).data();
    bool found = false;
    for (std::uint32_t c : bucket) {
      if (std::memcmp(af.slice(mc.representative[c]).data(), data, bytes) == 0) {
        mc.class_of[s] = c;
        ++mc.multiplicity[c];
        found = true;
        break;
      }
    }
    if (!found) {
      const auto c = static_cast<std::uint32_t>(mc.representative.size());
      mc.representative.push_back(static_cast<std::uint32_t>(s));
      mc.multiplicity.push_back(1);
      bucket.push_back(c);
      mc.class_of[s] = c;
    }
  }
  return mc;
}

void accumulate_class(const AggregatedTensor& af, const MapClasses& mc, std::size_t c,
                      double sign, std::vector<double>& acc) {
  const double weight = sign * mc.multiplicity[c];
  const float* src = af.slice(mc.representative[c]).data();
  for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += weight * src[p];
}

std::vector<float> normalized(const std::vector<double>& acc) {
  const std::size_t n = acc.size();
  double total = 0.0;
  for (double v : acc) total += v;
  std::vector<float> map(n);
  if (total > 0.0) {
    for (std::size_t p = 0; p < n; ++p) map[p] = static_cast<float>(acc[p] / total);
  } else {
    std::fill(map.begin(), map.end(), static_cast<float>(1.0 / n));
  }
  return map;
}

// Mean of all A_f maps whose class is in the set, renormalized.
std::vector<float> mean_map(const AggregatedTensor& af, const MapClasses& mc,
                            const ClassSet& set) {
  std::vector<double> acc(af.slice_size(), 0.0);
  for (std::size_t c = 0; c < mc.size(); ++c) {
    if (set.contains(c)) accumulate_class(af, mc, c, 1.0, acc);
  }
  return normalized(acc);
}

// Means of many overlapping sets. The list is cut into a fixed number of
// chains; along a chain each sum is derived from the previous one when the
// sets differ by fewer classes than the new set holds.
std::vector<std::vector<float>> mean_maps(const AggregatedTensor& af, const MapClasses& mc,
                                          const std::vector<const ClassSet*>& sets) {
  constexpr std::size_t kChains = 16;
  const std::size_t count = sets.size();
  const std::size_t chains = std::min(kChains, count);
  std::vector<std::vector<float>> maps(count);
  parallel_for(0, static_cast<std::int64_t>(chains), [&](std::int64_t chain) {
    const std::size_t begin = count * chain / chains;
    const std::size_t end = count * (chain + 1) / chains;
    std::vector<double> acc(af.slice_size(), 0.0);
    const ClassSet* prev = nullptr;
    for (std::size_t u = begin; u < end; ++u) {
      const ClassSet& set = *sets[u];
      std::size_t changes = 0;
      if (prev) {
        set.for_each_missing_from(*prev, [&](std::size_t) { ++changes; });
        prev->for_each_missing_from(set, [&](std::size_t) { ++changes; });
      }
      if (prev && changes < set.count()) {
        set.for_each_missing_from(*prev, [&](std::size_t c) { accumulate_class(af, mc, c, 1.0, acc); });
        prev->for_each_missing_from(set, [&](std::size_t c) { accumulate_class(af, mc, c, -1.0, acc); });
      } else {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t c = 0; c < mc.size(); ++c) {
          if (set.contains(c)) accumulate_class(af, mc, c, 1.0, acc);
        }
      }
      maps[u] = normalized(acc);
      prev = &set;
    }
  });
  return maps;
}

struct Working {
  ClassSet set;
  std::vector<float> map;
  std::vector<int> anchors;
};

}  // namespace

double kl_distance(std::span<const double> p, std::span<const double> q,
                   double epsilon) {
  return kl_impl(p, q, epsilon);
}

double kl_distance(std::span<const float> p, std::span<const float> q,
                   double epsilon) {
  return kl_impl(p, q, epsilon);
}

ProposalList iterative_merge(const AggregatedTensor& af,
                             const MergeConfig& config) {
  const int res = af.resolution;
  if (res < 1 || af.data.size() != af.slice_size() * af.slice_count()) {
    throw ShapeMismatchError("iterative_merge: malformed aggregated tensor");
  }
  config.validate(res);
  const std::size_t n = af.slice_size();
  const double tau = config.tau;
  const double eps = config.epsilon;

  const MapClasses mc = classify(af);
  const std::size_t classes = mc.size();

  PreparedStack prepared(classes, n);
  parallel_for(0, static_cast<std::int64_t>(classes), [&](std::int64_t c) {
    prepared.set(c, af.slice(mc.representative[c]), eps);
  });

  // Pass 1: anchors absorb every A_f map within tau.
  const auto grid = anchor_grid(config.grid_size, res);
  std::vector<std::uint32_t> anchor_class(grid.size());
  std::vector<int> slot_of_class(classes, -1);
  std::vector<std::uint32_t> slot_class;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const std::uint32_t c =
        mc.class_of[static_cast<std::size_t>(grid[a].i) * res + grid[a].j];
    anchor_class[a] = c;
    if (slot_of_class[c] < 0) {
      slot_of_class[c] = static_cast<int>(slot_class.size());
      slot_class.push_back(c);
    }
  }

  // Slot-by-class distances, tiled so a block of classes stays in cache
  // while the anchors stream past it.
  const std::size_t slots = slot_class.size();
  std::vector<std::uint8_t> within(slots * classes, 0);
  constexpr std::size_t kTile = 32;
  const std::size_t tiles = (classes + kTile - 1) / kTile;
  parallel_for(0, static_cast<std::int64_t>(tiles), [&](std::int64_t tile) {
    const std::size_t d0 = tile * kTile;
    const std::size_t d1 = std::min(classes, d0 + kTile);
    std::size_t s = 0;
    for (; s + 4 <= slots; s += 4) {
      const float* q[4];
      const float* lq[4];
      for (int r = 0; r < 4; ++r) {
        q[r] = prepared.row(slot_class[s + r]);
        lq[r] = prepared.log_row(slot_class[s + r]);
      }
      for (std::size_t d = d0; d < d1; ++d) {
        double dist[4];
        distance_rows4(prepared.row(d), prepared.log_row(d), q, lq, n, tau, dist);
        for (int r = 0; r < 4; ++r) within[(s + r) * classes + d] = dist[r] <= tau;
      }
    }
    for (; s < slots; ++s) {
      for (std::size_t d = d0; d < d1; ++d) {
        within[s * classes + d] = prepared.distance(d, slot_class[s], tau) <= tau;
      }
    }
  });
  std::vector<ClassSet> slot_sets(slots, ClassSet(classes));
  for (std::size_t s = 0; s < slots; ++s) {
    for (std::size_t d = 0; d < classes; ++d) {
      if (d == slot_class[s] || within[s * classes + d]) slot_sets[s].insert(d);
    }
  }

  // Distinct absorbed sets get one mean map each.
  std::vector<int> set_of_slot(slot_class.size());
  std::vector<const ClassSet*> unique_sets;
  {
    std::unordered_map<std::size_t, std::vector<int>> by_hash;
    for (std::size_t s = 0; s < slot_sets.size(); ++s) {
      auto& bucket = by_hash[slot_sets[s].hash()];
      int id = -1;
      for (int u : bucket) {
        if (*unique_sets[u] == slot_sets[s]) {
          id = u;
          break;
        }
      }
      if (id < 0) {
        id = static_cast<int>(unique_sets.size());
        unique_sets.push_back(&slot_sets[s]);
        bucket.push_back(id);
      }
      set_of_slot[s] = id;
    }
  }
  const std::vector<std::vector<float>> unique_maps = mean_maps(af, mc, unique_sets);
  PreparedStack unique_prepared(unique_sets.size(), n);
  parallel_for(0, static_cast<std::int64_t>(unique_sets.size()), [&](std::int64_t u) {
    unique_prepared.set(u, unique_maps[u], eps);
  });

  std::vector<Working> current;
  std::vector<int> current_set_id;  // unique set behind each pass-1 proposal
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const int u = set_of_slot[slot_of_class[anchor_class[a]]];
    const ClassSet& set = *unique_sets[u];
    bool merged = false;
    for (std::size_t e = 0; e < current.size(); ++e) {
      const int ue = current_set_id[e];
      if (!set.subset_of(current[e].set)) continue;
      if (ue == u || unique_prepared.distance(u, ue, tau) <= tau) {
        current[e].anchors.push_back(static_cast<int>(a));
        merged = true;
        break;
      }
    }
    if (!merged) {
      current.push_back({set, unique_maps[u], {static_cast<int>(a)}});
      current_set_id.push_back(u);
    }
  }

  ProposalList result;
  result.resolution = res;
  result.counts_per_iteration.push_back(current.size());

  // Passes 2..N: greedy merging among proposals.
  for (int pass = 2; pass <= config.iterations; ++pass) {
    const std::size_t count = current.size();
    bool any_merge = false;
    if (count > 1) {
      PreparedStack stack(count, n);
      parallel_for(0, static_cast<std::int64_t>(count), [&](std::int64_t i) {
        stack.set(i, current[i].map, eps);
      });
      std::vector<double> dist(count * count, 0.0);
      parallel_for(0, static_cast<std::int64_t>(count), [&](std::int64_t i) {
        for (std::size_t j = i + 1; j < count; ++j) {
          dist[i * count + j] = stack.distance(i, j, tau);
        }
      });

      std::vector<bool> alive(count, true);
      std::vector<bool> changed(count, false);
      for (std::size_t i = 0; i < count; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = i + 1; j < count; ++j) {
          if (!alive[j] || dist[i * count + j] > tau) continue;
          current[i].set.unite(current[j].set);
          current[i].anchors.insert(current[i].anchors.end(),
                                    current[j].anchors.begin(),
                                    current[j].anchors.end());
          alive[j] = false;
          changed[i] = true;
          any_merge = true;
        }
      }
      if (any_merge) {
        parallel_for(0, static_cast<std::int64_t>(count), [&](std::int64_t i) {
          if (changed[i]) current[i].map = mean_map(af, mc, current[i].set);
        });
        std::vector<Working> survivors;
        for (std::size_t i = 0; i < count; ++i) {
          if (alive[i]) {
            std::sort(current[i].anchors.begin(), current[i].anchors.end());
            survivors.push_back(std::move(current[i]));
          }
        }
        current = std::move(survivors);
      }
    }
    result.counts_per_iteration.push_back(current.size());
    if (!any_merge) {
      // Later passes would see the same distances and merge nothing.
      result.counts_per_iteration.resize(config.iterations, current.size());
      break;
    }
  }

  result.proposals.reserve(current.size());
  for (auto& w : current) {
    Proposal p;
    p.map = std::move(w.map);
    p.anchors = std::move(w.anchors);
    for (std::size_t s = 0; s < af.slice_count(); ++s) {
      if (w.set.contains(mc.class_of[s])) p.members.push_back(static_cast<std::uint32_t>(s));
    }
    result.proposals.push_back(std::move(p));
  }
  return result;
}

}  // namespace attnseg
