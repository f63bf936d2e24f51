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

#include "attnseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "attnseg/error.hpp"
#include "json.hpp"

namespace attnseg {

namespace {

double percent(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return 100.0;
  return static_cast<double>(num) / static_cast<double>(den) * 100.0;
}

void require_same_dims(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) {
    throw ShapeMismatchError(std::string(what) + ": " + std::to_string(w1) + "x" +
                             std::to_string(h1) + " vs " + std::to_string(w2) + "x" +
                             std::to_string(h2));
  }
}

MetricValues metrics_of(const ConfusionCounts& c) {
  return {dsc(c), iou(c), precision(c), recall(c)};
}

MetricValues mean_of(const std::vector<MetricValues>& values) {
  MetricValues m;
  if (values.empty()) return m;
  for (const auto& v : values) {
    m.dsc += v.dsc;
    m.iou += v.iou;
    m.precision += v.precision;
    m.recall += v.recall;
  }
  const double n = static_cast<double>(values.size());
  m.dsc /= n;
  m.iou /= n;
  m.precision /= n;
  m.recall /= n;
  return m;
}

std::vector<int> truth_classes(const LabelMask& truth, std::optional<int> background) {
  std::vector<bool> present(65536, false);
  for (std::uint16_t v : truth.labels) present[v] = true;
  std::vector<int> classes;
  for (int c = 0; c < 65536; ++c) {
    if (present[c] && (!background || *background != c)) classes.push_back(c);
  }
  return classes;
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_dims(pred.width, pred.height, truth.width, truth.height, "confusion");
  ConfusionCounts c;
  for (std::size_t p = 0; p < pred.membership.size(); ++p) {
    const bool a = pred.membership[p] != 0;
    const bool b = truth.membership[p] != 0;
    if (a && b) ++c.tp;
    else if (a) ++c.fp;
    else if (b) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dsc(const ConfusionCounts& c) { return percent(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
double iou(const ConfusionCounts& c) { return percent(c.tp, c.tp + c.fp + c.fn); }
double precision(const ConfusionCounts& c) { return percent(c.tp, c.tp + c.fp); }
double recall(const ConfusionCounts& c) { return percent(c.tp, c.tp + c.fn); }

std::vector<ClassMatch> match_regions(const LabelMask& pred, const LabelMask& truth,
                                      std::optional<int> background) {
  require_same_dims(pred.width, pred.height, truth.width, truth.height, "match_regions");
  const std::vector<int> classes = truth_classes(truth, background);
  if (classes.empty()) {
    throw InvalidArgumentError("match_regions: ground truth has no non-background class");
  }

  std::map<int, std::size_t> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = i;
  const std::size_t labels = static_cast<std::size_t>(pred.num_labels);
  std::vector<std::uint64_t> class_size(classes.size(), 0);
  std::vector<std::uint64_t> label_size(labels, 0);
  std::vector<std::uint64_t> inter(classes.size() * labels, 0);
  std::vector<int> class_slot(65536, -1);
  for (auto [c, i] : class_index) class_slot[c] = static_cast<int>(i);
  for (std::size_t p = 0; p < pred.labels.size(); ++p) {
    const std::size_t l = pred.labels[p];
    ++label_size[l];
    const int ci = class_slot[truth.labels[p]];
    if (ci >= 0) {
      ++class_size[ci];
      ++inter[ci * labels + l];
    }
  }
  const std::uint64_t total = pred.labels.size();

  std::vector<bool> class_used(classes.size(), false);
  std::vector<bool> label_used(labels, false);
  std::vector<std::optional<int>> assigned(classes.size());
  for (;;) {
    // Best pair by IoU, compared exactly as fractions.
    long best_c = -1, best_l = -1;
    std::uint64_t best_num = 0, best_den = 1;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      if (class_used[ci]) continue;
      for (std::size_t l = 0; l < labels; ++l) {
        if (label_used[l]) continue;
        const std::uint64_t num = inter[ci * labels + l];
        if (num == 0) continue;
        const std::uint64_t den = class_size[ci] + label_size[l] - num;
        const auto lhs = static_cast<unsigned __int128>(num) * best_den;
        const auto rhs = static_cast<unsigned __int128>(best_num) * den;
        if (best_c < 0 || lhs > rhs) {
          best_c = static_cast<long>(ci);
          best_l = static_cast<long>(l);
          best_num = num;
          best_den = den;
        }
      }
    }
    if (best_c < 0) break;
    class_used[best_c] = true;
    label_used[best_l] = true;
    assigned[best_c] = static_cast<int>(best_l);
  }

  std::vector<ClassMatch> out;
  out.reserve(classes.size());
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    ClassMatch m;
    m.class_id = classes[ci];
    m.label = assigned[ci];
    if (m.label) {
      const std::uint64_t tp = inter[ci * labels + *m.label];
      m.counts.tp = tp;
      m.counts.fp = label_size[*m.label] - tp;
      m.counts.fn = class_size[ci] - tp;
    } else {
      m.counts.fn = class_size[ci];
    }
    m.counts.tn = total - m.counts.tp - m.counts.fp - m.counts.fn;
    out.push_back(m);
  }
  return out;
}

GridPoint prompt_point(const LabelMask& truth, int class_id) {
  const int w = truth.width, h = truth.height;
  // Chessboard distance to the nearest pixel outside the class, with the
  // area beyond the raster counting as outside.
  constexpr int kFar = std::numeric_limits<int>::max() / 2;
  std::vector<int> dist(static_cast<std::size_t>(w) * h);
  auto at = [&](int x, int y) -> int& { return dist[static_cast<std::size_t>(y) * w + x]; };
  auto get = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return at(x, y);
  };
  bool any = false;
  double cx = 0.0, cy = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool inside = truth.at(x, y) == class_id;
      at(x, y) = inside ? kFar : 0;
      if (inside) {
        any = true;
        cx += x;
        cy += y;
        ++count;
      }
    }
  }
  if (!any) {
    throw InvalidArgumentError("prompt_point: class " + std::to_string(class_id) +
                               " is absent");
  }
  cx /= static_cast<double>(count);
  cy /= static_cast<double>(count);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (at(x, y) == 0) continue;
      at(x, y) = std::min({at(x, y), get(x - 1, y) + 1, get(x - 1, y - 1) + 1,
                           get(x, y - 1) + 1, get(x + 1, y - 1) + 1});
    }
  }
  for (int y = h - 1; y >= 0; --y) {
    for (int x = w - 1; x >= 0; --x) {
      if (at(x, y) == 0) continue;
      at(x, y) = std::min({at(x, y), get(x + 1, y) + 1, get(x + 1, y + 1) + 1,
                           get(x, y + 1) + 1, get(x - 1, y + 1) + 1});
    }
  }
  int best_depth = -1;
  double best_d2 = 0.0;
  GridPoint best;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int depth = at(x, y);
      if (depth == 0) continue;
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (depth > best_depth || (depth == best_depth && d2 < best_d2)) {
        best_depth = depth;
        best_d2 = d2;
        best = {y, x};
      }
    }
  }
  return best;
}

const char* eval_mode_name(EvalMode mode) {
  return mode == EvalMode::kMatched ? "matched" : "point";
}

MetricsReport evaluate_dataset(std::span<const EvalSample> samples, EvalMode mode,
                               std::optional<int> background) {
  if (samples.empty()) throw InvalidArgumentError("evaluate_dataset: no samples");

  MetricsReport report;
  report.mode = mode;
  report.sample_count = samples.size();
  report.samples.resize(samples.size());

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const EvalSample& sample = samples[s];
    SampleResult& result = report.samples[s];
    result.name = sample.name;
    if (mode == EvalMode::kMatched) {
      for (const ClassMatch& m : match_regions(sample.prediction, sample.truth, background)) {
        result.classes.push_back({m.class_id, m.label, m.counts, metrics_of(m.counts)});
      }
    } else {
      require_same_dims(sample.prediction.width, sample.prediction.height,
                        sample.truth.width, sample.truth.height, "evaluate_dataset");
      const auto classes = truth_classes(sample.truth, background);
      if (classes.empty()) {
        throw InvalidArgumentError("evaluate_dataset: sample " + sample.name +
                                   " has no non-background class");
      }
      for (int c : classes) {
        const GridPoint pt = prompt_point(sample.truth, c);
        const BinaryMask selected = select_region(sample.prediction, pt.j, pt.i);
        BinaryMask truth_bin(sample.truth.width, sample.truth.height);
        for (std::size_t p = 0; p < sample.truth.labels.size(); ++p) {
          truth_bin.membership[p] = sample.truth.labels[p] == c;
        }
        const ConfusionCounts counts = confusion(selected, truth_bin);
        result.classes.push_back(
            {c, static_cast<int>(sample.prediction.at(pt.j, pt.i)), counts, metrics_of(counts)});
      }
    }
    std::vector<MetricValues> values;
    for (const auto& c : result.classes) values.push_back(c.metrics);
    result.mean = mean_of(values);
  }

  std::map<int, std::vector<MetricValues>> by_class;
  for (const auto& sample : report.samples) {
    for (const auto& c : sample.classes) by_class[c.class_id].push_back(c.metrics);
  }
  std::vector<MetricValues> class_means;
  for (const auto& [id, values] : by_class) {
    ClassSummary summary{id, values.size(), mean_of(values)};
    report.per_class.push_back(summary);
    class_means.push_back(summary.metrics);
  }
  report.aggregate = mean_of(class_means);
  return report;
}

namespace {

nlohmann::json metrics_json(const MetricValues& m) {
  return {{"dsc", m.dsc}, {"iou", m.iou}, {"precision", m.precision}, {"recall", m.recall}};
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  using nlohmann::json;
  json samples = json::array();
  for (const auto& s : report.samples) {
    json classes = json::array();
    for (const auto& c : s.classes) {
      json entry = metrics_json(c.metrics);
      entry["class_id"] = c.class_id;
      entry["label"] = c.label ? json(*c.label) : json(nullptr);
      entry["tp"] = c.counts.tp;
      entry["fp"] = c.counts.fp;
      entry["fn"] = c.counts.fn;
      entry["tn"] = c.counts.tn;
      classes.push_back(entry);
    }
    samples.push_back({{"name", s.name}, {"classes", classes}, {"mean", metrics_json(s.mean)}});
  }
  json per_class = json::array();
  for (const auto& c : report.per_class) {
    json entry = metrics_json(c.metrics);
    entry["class_id"] = c.class_id;
    entry["samples"] = c.samples;
    per_class.push_back(entry);
  }
  json aggregate = metrics_json(report.aggregate);
  aggregate["per_class"] = per_class;
  aggregate["sample_count"] = report.sample_count;
  aggregate["mode"] = eval_mode_name(report.mode);
  json doc = {{"samples", samples}, {"aggregate", aggregate}};
  return doc.dump(2) + "\n";
}

std::string report_to_text(const MetricsReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "Evaluation (%s mode, %zu samples)\n\n",
                eval_mode_name(report.mode), report.sample_count);
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s %14s %11s\n", "Class", "Samples",
                "DSC (%)", "IoU (%)", "Precision (%)", "Recall (%)");
  out += line;
  for (const auto& c : report.per_class) {
    std::snprintf(line, sizeof(line), "%-10d %8zu %8.1f %8.1f %14.1f %11.1f\n", c.class_id,
                  c.samples, c.metrics.dsc, c.metrics.iou, c.metrics.precision,
                  c.metrics.recall);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-10s %8zu %8.1f %8.1f %14.1f %11.1f\n", "Mean",
                report.sample_count, report.aggregate.dsc, report.aggregate.iou,
                report.aggregate.precision, report.aggregate.recall);
  out += line;
  return out;
}

}  // namespace attnseg
