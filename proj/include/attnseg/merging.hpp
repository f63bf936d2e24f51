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

#ifndef ATTNSEG_MERGING_HPP_
#define ATTNSEG_MERGING_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "attnseg/attention.hpp"

namespace attnseg {

struct MergeConfig {
  int grid_size = 16;      // M: anchors form an M x M grid
  int iterations = 3;      // N: anchor pass plus N - 1 proposal passes
  double tau = 1.0;        // merge threshold in nats, compared with D <= tau
  double epsilon = 1e-12;  // clamp floor applied before taking logs

  // Throws InvalidArgumentError. tau may be +infinity.
  void validate(int resolution) const;
};

struct GridPoint {
  int i = 0;
  int j = 0;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

// M x M evenly spaced points, (floor((m + 0.5) * res / M),
// floor((n + 0.5) * res / M)), row-major in (m, n).
std::vector<GridPoint> anchor_grid(int grid_size, int resolution);

// Symmetric KL distance D = (KL(P||Q) + KL(Q||P)) / 2 in nats. Both inputs
// are clamped to >= epsilon and renormalized first. Evaluated as
// sum((p - q) * (log p - log q)) / 2 so that D(P, Q) == D(Q, P) bit for bit
// and D(P, P) == 0.
double kl_distance(std::span<const double> p, std::span<const double> q,
                   double epsilon);
double kl_distance(std::span<const float> p, std::span<const float> q,
                   double epsilon);

struct Proposal {
  std::vector<float> map;  // resolution x resolution, sums to 1
  // Flat indices (I * resolution + J) of every A_f map averaged into this
  // proposal, ascending.
  std::vector<std::uint32_t> members;
  // Indices into anchor_grid(...) of the anchors merged into this proposal.
  std::vector<int> anchors;
};

struct ProposalList {
  int resolution = 0;
  std::vector<Proposal> proposals;
  // Proposal count after each completed pass; non-increasing.
  std::vector<std::size_t> counts_per_iteration;

  std::size_t size() const { return proposals.size(); }
};

// Pass 1: every anchor absorbs all A_f maps within tau and becomes the mean
// of them; an anchor whose absorbed set lies inside an earlier proposal's
// set, within tau of it, joins that proposal. Passes 2..N: greedy
// index-order scan over pairwise distances, later proposals within tau of
// the current one are folded into it. A proposal's map is always the mean of
// the A_f maps in its member set.
ProposalList iterative_merge(const AggregatedTensor& af,
                             const MergeConfig& config);

}  // namespace attnseg

#endif  // ATTNSEG_MERGING_HPP_
