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

#ifndef ATTNSEG_METRICS_HPP_
#define ATTNSEG_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnseg/mask.hpp"

namespace attnseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

// Percentages. A metric whose own denominator is zero scores 100.
double dsc(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

struct ClassMatch {
  int class_id = 0;
  std::optional<int> label;  // unset: scored against an empty prediction
  ConfusionCounts counts;
};

// Greedy best-IoU pairing of ground-truth classes with predicted labels:
// repeatedly take the pair with the highest positive IoU (ties: lower class,
// then lower label) and remove both. Classes left over, or with no
// overlapping label, are scored against an empty prediction. Result is
// ordered by class id. Truth pixels equal to `background` are not a class.
std::vector<ClassMatch> match_regions(const LabelMask& pred, const LabelMask& truth,
                                      std::optional<int> background = 0);

// Seed point for point-prompted evaluation: among the class pixels farthest
// (chessboard distance) from any other class or the raster border, the one
// closest to the class centroid; remaining ties go to row-major order.
GridPoint prompt_point(const LabelMask& truth, int class_id);

enum class EvalMode { kMatched, kPointPrompted };

const char* eval_mode_name(EvalMode mode);

struct MetricValues {
  double dsc = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ClassResult {
  int class_id = 0;
  std::optional<int> label;
  ConfusionCounts counts;
  MetricValues metrics;
};

struct SampleResult {
  std::string name;
  std::vector<ClassResult> classes;
  MetricValues mean;  // over this sample's classes
};

struct ClassSummary {
  int class_id = 0;
  std::size_t samples = 0;
  MetricValues metrics;  // mean over the samples containing the class
};

struct MetricsReport {
  EvalMode mode = EvalMode::kMatched;
  std::vector<SampleResult> samples;
  std::vector<ClassSummary> per_class;
  MetricValues aggregate;  // unweighted mean over per_class
  std::size_t sample_count = 0;
};

struct EvalSample {
  std::string name;
  LabelMask prediction;
  LabelMask truth;
};

MetricsReport evaluate_dataset(std::span<const EvalSample> samples, EvalMode mode,
                               std::optional<int> background = 0);

std::string report_to_json(const MetricsReport& report);
std::string report_to_text(const MetricsReport& report);

}  // namespace attnseg

#endif  // ATTNSEG_METRICS_HPP_
