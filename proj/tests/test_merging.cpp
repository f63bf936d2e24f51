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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "attnseg/attention.hpp"
#include "attnseg/error.hpp"
#include "attnseg/merging.hpp"
#include "attnseg/parallel.hpp"
#include "attnseg/synth.hpp"

namespace attnseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Straightforward reference: clamp, renormalize, then average both KL directions.
double oracle_kl(const std::vector<double>& p, const std::vector<double>& q, double eps) {
  auto prep = [eps](std::vector<double> v) {
    double s = 0.0;
    for (double& x : v) s += (x = std::max(x, eps));
    for (double& x : v) x /= s;
    return v;
  };
  const auto pp = prep(p);
  const auto qq = prep(q);
  double pq = 0.0, qp = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    pq += pp[i] * std::log(pp[i] / qq[i]);
    qp += qq[i] * std::log(qq[i] / pp[i]);
  }
  return 0.5 * (pq + qp);
}

std::vector<double> random_distribution(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += (x = u(rng));
  for (double& x : v) x /= s;
  return v;
}

AggregatedTensor random_af(int res, std::mt19937& rng) {
  AggregatedTensor af;
  af.resolution = res;
  const std::size_t n = af.slice_size();
  af.data.reserve(n * n);
  for (std::size_t s = 0; s < n; ++s) {
    for (double v : random_distribution(n, rng)) af.data.push_back(static_cast<float>(v));
  }
  return af;
}

AggregatedTensor planted_af(int regions, std::uint64_t seed, double noise = 0.0) {
  const PlantedScene scene = make_band_scene(regions, 64, 8, noise, seed);
  const GeneratedSet set = generate_tensor_set(scene, default_census(64));
  std::vector<int> res;
  for (const auto& t : set.tensors) res.push_back(t.resolution);
  return aggregate(set.tensors, compute_weights(res), 64);
}

TEST(AnchorGrid, SixteenOnSixtyFour) {
  const auto grid = anchor_grid(16, 64);
  ASSERT_EQ(grid.size(), 256u);
  for (int m = 0; m < 16; ++m) {
    EXPECT_EQ(grid[m * 16].i, 4 * m + 2);
    EXPECT_EQ(grid[m].j, 4 * m + 2);
  }
  EXPECT_EQ(grid.front(), (GridPoint{2, 2}));
  EXPECT_EQ(grid.back(), (GridPoint{62, 62}));
}

TEST(AnchorGrid, SingleAnchorIsCentre) {
  EXPECT_EQ(anchor_grid(1, 64), (std::vector<GridPoint>{{32, 32}}));
}

TEST(AnchorGrid, FullGridCoversEveryPixelOnce) {
  const auto grid = anchor_grid(8, 8);
  std::set<std::pair<int, int>> seen;
  for (const auto& g : grid) seen.insert({g.i, g.j});
  EXPECT_EQ(seen.size(), 64u);
}

TEST(AnchorGrid, Validation) {
  EXPECT_THROW(anchor_grid(0, 64), InvalidArgumentError);
  EXPECT_THROW(anchor_grid(65, 64), InvalidArgumentError);
}

TEST(KlDistance, IdenticalIsZero) {
  std::mt19937 rng(1);
  const auto p = random_distribution(64, rng);
  EXPECT_EQ(kl_distance(p, p, 1e-12), 0.0);
}

TEST(KlDistance, TwoPointExample) {
  const std::vector<double> p = {0.75, 0.25};
  const std::vector<double> q = {0.25, 0.75};
  EXPECT_NEAR(kl_distance(p, q, 1e-12), 0.5493061443340549, 1e-12);
  EXPECT_NEAR(kl_distance(p, q, 1e-12), 0.5 * std::log(3.0), 1e-12);
}

TEST(KlDistance, DisjointSupportIsFiniteAndLarge) {
  const std::vector<double> p = {1.0, 0.0};
  const std::vector<double> q = {0.0, 1.0};
  const double d = kl_distance(p, q, 1e-12);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_NEAR(d, oracle_kl(p, q, 1e-12), 1e-9);
  EXPECT_GT(d, 20.0);
}

TEST(KlDistance, MatchesOracleSymmetricAndNonNegative) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_distribution(256, rng);
    const auto q = random_distribution(256, rng);
    const double d = kl_distance(p, q, 1e-12);
    EXPECT_NEAR(d, oracle_kl(p, q, 1e-12), 1e-10);
    EXPECT_EQ(d, kl_distance(q, p, 1e-12));
    EXPECT_GE(d, 0.0);
  }
}

TEST(KlDistance, FloatOverloadAgrees) {
  std::mt19937 rng(3);
  const auto p = random_distribution(4096, rng);
  const auto q = random_distribution(4096, rng);
  const std::vector<float> pf(p.begin(), p.end());
  const std::vector<float> qf(q.begin(), q.end());
  EXPECT_NEAR(kl_distance(pf, qf, 1e-12), kl_distance(p, q, 1e-12), 1e-5);
}

TEST(KlDistance, Validation) {
  const std::vector<double> a = {0.5, 0.5};
  const std::vector<double> b = {1.0};
  EXPECT_THROW(kl_distance(a, b, 1e-12), ShapeMismatchError);
  const std::vector<double> c = {std::nan(""), 1.0};
  EXPECT_THROW(kl_distance(a, c, 1e-12), NonFiniteValueError);
}

TEST(MergeConfig, Validation) {
  MergeConfig c;
  EXPECT_NO_THROW(c.validate(64));
  c.tau = kInf;
  EXPECT_NO_THROW(c.validate(64));
  c.tau = -1.0;
  EXPECT_THROW(c.validate(64), InvalidArgumentError);
  c = MergeConfig{};
  c.grid_size = 65;
  EXPECT_THROW(c.validate(64), InvalidArgumentError);
  c = MergeConfig{};
  c.iterations = 0;
  EXPECT_THROW(c.validate(64), InvalidArgumentError);
  c = MergeConfig{};
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(64), InvalidArgumentError);
}

TEST(IterativeMerge, TwoHalvesByHand) {
  // Rows 0-1 attend to the top half, rows 2-3 to the bottom half.
  AggregatedTensor af;
  af.resolution = 4;
  af.data.assign(256, 0.0f);
  for (int I = 0; I < 4; ++I) {
    for (int J = 0; J < 4; ++J) {
      float* s = af.data.data() + (I * 4 + J) * 16;
      for (int p = 0; p < 16; ++p) s[p] = ((p / 8) == (I / 2)) ? 0.125f : 0.0f;
    }
  }
  MergeConfig cfg;
  cfg.grid_size = 2;
  const ProposalList pl = iterative_merge(af, cfg);
  ASSERT_EQ(pl.size(), 2u);
  const std::vector<std::uint32_t> top = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<std::uint32_t> bottom = {8, 9, 10, 11, 12, 13, 14, 15};
  EXPECT_EQ(pl.proposals[0].members, top);
  EXPECT_EQ(pl.proposals[1].members, bottom);
  EXPECT_EQ(pl.proposals[0].anchors, (std::vector<int>{0, 1}));
  EXPECT_EQ(pl.proposals[1].anchors, (std::vector<int>{2, 3}));
  for (int p = 0; p < 16; ++p) EXPECT_FLOAT_EQ(pl.proposals[0].map[p], p < 8 ? 0.125f : 0.0f);
}

TEST(IterativeMerge, InfiniteTauYieldsOneProposal) {
  std::mt19937 rng(4);
  const AggregatedTensor af = random_af(16, rng);
  MergeConfig cfg;
  cfg.grid_size = 8;
  cfg.tau = kInf;
  const ProposalList pl = iterative_merge(af, cfg);
  ASSERT_EQ(pl.size(), 1u);
  EXPECT_EQ(pl.proposals[0].members.size(), 256u);
  EXPECT_EQ(pl.proposals[0].anchors.size(), 64u);
}

TEST(IterativeMerge, ZeroTauKeepsEveryDistinctAnchor) {
  std::mt19937 rng(5);
  const AggregatedTensor af = random_af(16, rng);
  MergeConfig cfg;
  cfg.grid_size = 8;
  cfg.tau = 0.0;
  const ProposalList pl = iterative_merge(af, cfg);
  EXPECT_EQ(pl.size(), 64u);
  for (std::size_t c : pl.counts_per_iteration) EXPECT_EQ(c, 64u);
}

TEST(IterativeMerge, CountsAreNonIncreasing) {
  const AggregatedTensor af = planted_af(3, 9, 0.2);
  for (double tau : {0.0, 0.1, 0.5, 1.0, 4.0}) {
    MergeConfig cfg;
    cfg.tau = tau;
    cfg.iterations = 4;
    const ProposalList pl = iterative_merge(af, cfg);
    ASSERT_EQ(pl.counts_per_iteration.size(), 4u);
    for (std::size_t k = 1; k < 4; ++k) {
      EXPECT_LE(pl.counts_per_iteration[k], pl.counts_per_iteration[k - 1]);
    }
    EXPECT_EQ(pl.counts_per_iteration.back(), pl.size());
  }
}

TEST(IterativeMerge, PlantedTwoRegionsRecovered) {
  const PlantedScene scene = make_band_scene(2, 64, 8, 0.0, 17);
  const GeneratedSet set = generate_tensor_set(scene, default_census(64));
  std::vector<int> res;
  for (const auto& t : set.tensors) res.push_back(t.resolution);
  const AggregatedTensor af = aggregate(set.tensors, compute_weights(res), 64);
  const ProposalList pl = iterative_merge(af, MergeConfig{});
  ASSERT_EQ(pl.size(), 2u);
  std::set<std::set<std::uint32_t>> got;
  for (const auto& p : pl.proposals) got.insert({p.members.begin(), p.members.end()});
  std::set<std::set<std::uint32_t>> want;
  for (int r = 0; r < 2; ++r) {
    std::set<std::uint32_t> region;
    for (std::uint32_t i = 0; i < scene.region_map.size(); ++i) {
      if (scene.region_map[i] == r) region.insert(i);
    }
    want.insert(region);
  }
  EXPECT_EQ(got, want);
}

TEST(IterativeMerge, ProposalMapIsMeanOfMembers) {
  const AggregatedTensor af = planted_af(4, 3, 0.2);
  const ProposalList pl = iterative_merge(af, MergeConfig{});
  const std::size_t n = af.slice_size();
  for (const auto& p : pl.proposals) {
    ASSERT_FALSE(p.members.empty());
    ASSERT_TRUE(std::is_sorted(p.members.begin(), p.members.end()));
    std::vector<double> mean(n, 0.0);
    for (std::uint32_t m : p.members) {
      const auto s = af.slice(m);
      for (std::size_t i = 0; i < n; ++i) mean[i] += s[i];
    }
    double total = 0.0;
    for (double v : mean) total += v;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(mean[i] / total - p.map[i]));
    EXPECT_LE(worst, 1e-6);
  }
}

TEST(IterativeMerge, EveryAnchorLandsInExactlyOneProposal) {
  const AggregatedTensor af = planted_af(5, 11, 0.2);
  const ProposalList pl = iterative_merge(af, MergeConfig{});
  std::vector<int> seen(256, 0);
  for (const auto& p : pl.proposals) {
    for (int a : p.anchors) ++seen[a];
  }
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(IterativeMerge, IdenticalAcrossThreadCounts) {
  const AggregatedTensor af = planted_af(3, 21, 0.2);
  const int saved = max_threads();
  set_max_threads(1);
  const ProposalList a = iterative_merge(af, MergeConfig{});
  set_max_threads(4);
  const ProposalList b = iterative_merge(af, MergeConfig{});
  set_max_threads(saved);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.counts_per_iteration, b.counts_per_iteration);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.proposals[k].members, b.proposals[k].members);
    EXPECT_EQ(a.proposals[k].anchors, b.proposals[k].anchors);
    EXPECT_EQ(a.proposals[k].map, b.proposals[k].map);
  }
}

}  // namespace
}  // namespace attnseg
