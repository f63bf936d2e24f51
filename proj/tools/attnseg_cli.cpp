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

// Command-line front end. Talks to the library only through attnseg.h.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attnseg/attnseg.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

// Carries a library status out of a command body.
struct CommandError {
  int exit_code;
  std::string message;
};

void check(attnseg_status status, const std::string& context) {
  if (status == ATTNSEG_OK) return;
  std::string msg = context + ": " + attnseg_status_name(status) + ": " + attnseg_last_error();
  throw CommandError{status == ATTNSEG_ERR_INTERNAL ? kExitInternal : kExitUser, msg};
}

[[noreturn]] void fail(const std::string& message) { throw CommandError{kExitUser, message}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using TensorSetPtr =
    std::unique_ptr<attnseg_tensor_set, Deleter<attnseg_tensor_set, attnseg_tensor_set_free>>;
using LabelMaskPtr =
    std::unique_ptr<attnseg_label_mask, Deleter<attnseg_label_mask, attnseg_label_mask_free>>;
using BinaryMaskPtr =
    std::unique_ptr<attnseg_binary_mask, Deleter<attnseg_binary_mask, attnseg_binary_mask_free>>;
using ImagePtr = std::unique_ptr<attnseg_image, Deleter<attnseg_image, attnseg_image_free>>;
using EvaluatorPtr =
    std::unique_ptr<attnseg_evaluator, Deleter<attnseg_evaluator, attnseg_evaluator_free>>;

struct CString {
  char* p = nullptr;
  ~CString() { attnseg_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write " + tmp.string());
    out << text;
    if (!out) fail("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail("cannot rename into " + path.string());
}

std::pair<int, int> parse_pair(const std::string& text, char sep, const char* what) {
  const auto pos = text.find(sep);
  try {
    if (pos == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const int a = std::stoi(text.substr(0, pos), &used);
    if (used != pos) throw std::invalid_argument(text);
    const std::string rest = text.substr(pos + 1);
    const int b = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::exception&) {
    fail(std::string("invalid ") + what + " \"" + text + "\"");
  }
}

json tau_json(double tau) { return std::isfinite(tau) ? json(tau) : json("inf"); }

double tau_from_json(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    fail("config: tau must be a number or \"inf\"");
  }
  return v.get<double>();
}

// ---- segment ---------------------------------------------------------------

struct SegmentOptions {
  std::string manifest;
  std::string out_dir;
  std::string config_path;
  double tau = 0.0;
  int grid = 0;
  int iters = 0;
  double epsilon = 0.0;
  int target_resolution = 0;
  std::string out_size;
  std::string point;
  std::vector<double> weights;
};

int run_segment(const SegmentOptions& opt, const CLI::App& cmd) {
  attnseg_segment_config cfg;
  attnseg_segment_config_default(&cfg);
  std::vector<double> weights;
  std::optional<std::pair<int, int>> point;

  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) fail("cannot open config " + opt.config_path);
    json doc;
    try {
      doc = json::parse(in);
      if (!doc.is_object()) fail("config " + opt.config_path + ": expected a JSON object");
      for (const auto& [key, value] : doc.items()) {
        if (key == "tau") {
          cfg.tau = tau_from_json(value);
        } else if (key == "grid_size") {
          cfg.grid_size = value.get<int>();
        } else if (key == "iterations") {
          cfg.iterations = value.get<int>();
        } else if (key == "epsilon") {
          cfg.epsilon = value.get<double>();
        } else if (key == "target_resolution") {
          cfg.target_resolution = value.get<int>();
        } else if (key == "out_width") {
          cfg.out_width = value.get<int>();
        } else if (key == "out_height") {
          cfg.out_height = value.get<int>();
        } else if (key == "weights") {
          weights = value.get<std::vector<double>>();
        } else if (key == "point") {
          const auto p = value.get<std::vector<int>>();
          if (p.size() != 2) fail("config: point must be [x, y]");
          point = std::make_pair(p[0], p[1]);
        } else if (key != "weight_mode") {
          fail("config " + opt.config_path + ": unknown key \"" + key + "\"");
        }
      }
    } catch (const json::exception& e) {
      fail("config " + opt.config_path + ": " + e.what());
    }
  }
  if (cmd.count("--tau")) cfg.tau = opt.tau;
  if (cmd.count("--grid")) cfg.grid_size = opt.grid;
  if (cmd.count("--iters")) cfg.iterations = opt.iters;
  if (cmd.count("--epsilon")) cfg.epsilon = opt.epsilon;
  if (cmd.count("--target-res")) cfg.target_resolution = opt.target_resolution;
  if (cmd.count("--out-size")) {
    const auto wh = parse_pair(opt.out_size, 'x', "--out-size");
    cfg.out_width = wh.first;
    cfg.out_height = wh.second;
  }
  if (cmd.count("--weights")) weights = opt.weights;
  if (cmd.count("--point")) point = parse_pair(opt.point, ',', "--point");
  if (!weights.empty()) {
    cfg.weights = weights.data();
    cfg.weight_count = weights.size();
  }

  if (!fs::exists(opt.manifest)) fail("manifest " + opt.manifest + " does not exist");
  attnseg_tensor_set* raw_set = nullptr;
  check(attnseg_tensor_set_load(opt.manifest.c_str(), &raw_set), "loading " + opt.manifest);
  TensorSetPtr set(raw_set);

  attnseg_label_mask* raw_mask = nullptr;
  attnseg_segment_stats stats{};
  check(attnseg_segment(set.get(), &cfg, &raw_mask, &stats), "segmenting " + opt.manifest);
  LabelMaskPtr mask(raw_mask);

  const std::string image_id = attnseg_tensor_set_image_id(set.get());
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);
  const std::string mask_name = image_id + attnseg_label_mask_extension(mask.get());
  check(attnseg_label_mask_save(mask.get(), (out_dir / mask_name).string().c_str()),
        "writing mask");

  json summary = {
      {"image_id", image_id},
      {"num_proposals", stats.num_proposals},
      {"num_labels", attnseg_label_mask_num_labels(mask.get())},
      {"tensor_count", stats.num_tensors},
      {"target_resolution", stats.target_resolution},
      {"mask_file", mask_name},
      {"config",
       {{"grid_size", cfg.grid_size},
        {"iterations", cfg.iterations},
        {"tau", tau_json(cfg.tau)},
        {"epsilon", cfg.epsilon},
        {"out_width", cfg.out_width},
        {"out_height", cfg.out_height},
        {"weight_mode", weights.empty() ? "resolution_proportional" : "explicit"}}}};
  if (!weights.empty()) summary["config"]["weights"] = weights;

  if (point) {
    attnseg_binary_mask* raw_sel = nullptr;
    check(attnseg_select_region(mask.get(), point->first, point->second, &raw_sel),
          "selecting region");
    BinaryMaskPtr selected(raw_sel);
    fs::create_directories(out_dir / "selected");
    const std::string sel_name = "selected/" + image_id + ".pgm";
    check(attnseg_binary_mask_save(selected.get(), (out_dir / sel_name).string().c_str()),
          "writing selected region");
    summary["point"] = {point->first, point->second};
    summary["selected_file"] = sel_name;
    summary["selected_pixels"] = attnseg_binary_mask_count(selected.get());
  }

  const std::string summary_text = summary.dump(2) + "\n";
  write_text_atomic(out_dir / (image_id + ".summary.json"), summary_text);
  const json timings = {{"aggregate_seconds", stats.aggregate_seconds},
                        {"merge_seconds", stats.merge_seconds},
                        {"nms_seconds", stats.nms_seconds}};
  write_text_atomic(out_dir / (image_id + ".timings.json"), timings.dump(2) + "\n");
  std::cout << summary_text;
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

std::map<std::string, fs::path> mask_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail("directory " + dir.string() + " does not exist");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".pgm" && ext != ".lbl") continue;
    const std::string stem = entry.path().stem().string();
    if (files.count(stem)) fail("duplicate mask stem \"" + stem + "\" in " + dir.string());
    files[stem] = entry.path();
  }
  return files;
}

LabelMaskPtr load_mask(const fs::path& path) {
  attnseg_label_mask* raw = nullptr;
  check(attnseg_label_mask_load(path.string().c_str(), &raw), "loading " + path.string());
  return LabelMaskPtr(raw);
}

int run_eval(const std::string& pred_dir, const std::string& truth_dir, const std::string& mode,
             int background, const std::string& out_dir) {
  attnseg_eval_mode eval_mode;
  if (mode == "matched") eval_mode = ATTNSEG_EVAL_MATCHED;
  else if (mode == "point") eval_mode = ATTNSEG_EVAL_POINT;
  else fail("unknown mode \"" + mode + "\" (expected matched or point)");

  const auto preds = mask_files(pred_dir);
  const auto truths = mask_files(truth_dir);
  std::vector<std::string> unpaired;
  for (const auto& [stem, path] : preds) {
    if (!truths.count(stem)) unpaired.push_back(stem + " (prediction only)");
  }
  for (const auto& [stem, path] : truths) {
    if (!preds.count(stem)) unpaired.push_back(stem + " (truth only)");
  }
  if (!unpaired.empty()) {
    std::string msg = "unpaired files:";
    for (const auto& s : unpaired) msg += "\n  " + s;
    fail(msg);
  }
  if (preds.empty()) fail("no masks found in " + pred_dir);

  attnseg_evaluator* raw_ev = nullptr;
  check(attnseg_evaluator_create(eval_mode, background, &raw_ev), "creating evaluator");
  EvaluatorPtr ev(raw_ev);
  for (const auto& [stem, pred_path] : preds) {
    auto pred = load_mask(pred_path);
    auto truth = load_mask(truths.at(stem));
    check(attnseg_evaluator_add(ev.get(), stem.c_str(), pred.get(), truth.get()),
          "adding sample " + stem);
  }
  CString report_json, report_text;
  check(attnseg_evaluator_report(ev.get(), &report_json.p, &report_text.p), "evaluating");
  fs::create_directories(out_dir);
  write_text_atomic(fs::path(out_dir) / "report.json", report_json.str());
  write_text_atomic(fs::path(out_dir) / "report.txt", report_text.str());
  std::cout << report_text.str();
  return kExitOk;
}

// ---- synth-gen ---------------------------------------------------------------

int run_synth(const attnseg_synth_config& cfg, const std::string& out_dir,
              const std::string& truth_out) {
  CString image_id;
  check(attnseg_synth_generate(&cfg, out_dir.c_str(), truth_out.empty() ? nullptr : truth_out.c_str(),
                               &image_id.p),
        "generating synthetic set");
  std::cout << "wrote " << image_id.str() << " to " << out_dir << "\n";
  return kExitOk;
}

// ---- render ----------------------------------------------------------------

int run_render(const std::string& image_path, const std::string& mask_path,
               const std::string& truth_path, double opacity, const std::string& out_path) {
  attnseg_image* raw_img = nullptr;
  check(attnseg_image_load(image_path.c_str(), &raw_img), "loading " + image_path);
  ImagePtr image(raw_img);
  auto mask = load_mask(mask_path);
  BinaryMaskPtr truth;
  if (!truth_path.empty()) {
    auto truth_labels = load_mask(truth_path);
    attnseg_binary_mask* raw = nullptr;
    check(attnseg_binary_mask_from_labels(truth_labels.get(), &raw), "reading " + truth_path);
    truth.reset(raw);
  }
  attnseg_image* raw_out = nullptr;
  check(attnseg_render_overlay(image.get(), mask.get(), truth.get(), opacity, &raw_out),
        "rendering overlay");
  ImagePtr out(raw_out);
  check(attnseg_image_save_png(out.get(), out_path.c_str()), "writing " + out_path);
  return kExitOk;
}

// ---- info ------------------------------------------------------------------

int run_info(const std::string& manifest) {
  if (!fs::exists(manifest)) fail("manifest " + manifest + " does not exist");
  attnseg_tensor_set* raw = nullptr;
  check(attnseg_tensor_set_load(manifest.c_str(), &raw), "loading " + manifest);
  TensorSetPtr set(raw);
  CString text;
  check(attnseg_tensor_set_info_json(set.get(), &text.p), "summarizing");
  const json info = json::parse(text.str());

  char line[160];
  std::cout << "image_id:          " << info["image_id"].get<std::string>() << "\n"
            << "latent resolution: " << info["latent_resolution"].get<int>() << "\n"
            << "timestep:          " << info["timestep"].get<int>() << "\n"
            << "tensors:           " << info["tensor_count"].get<std::size_t>() << "\n";
  std::cout << "census (resolution-proportional weights):\n";
  for (const auto& c : info["census"]) {
    std::snprintf(line, sizeof(line), "  %3d x %-3d  count %2d  R = %.6f per layer\n",
                  c["resolution"].get<int>(), c["resolution"].get<int>(),
                  c["count"].get<int>(), c["weight_per_layer"].get<double>());
    std::cout << line;
  }
  std::snprintf(line, sizeof(line),
                "normalization drift: max %.3e, mean %.3e, renormalized slices %zu\n",
                info["drift"]["max"].get<double>(), info["drift"]["mean"].get<double>(),
                info["drift"]["renormalized_slices"].get<std::size_t>());
  std::cout << line;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot segmentation from diffusion self-attention tensors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(attnseg_version()));

  SegmentOptions seg;
  auto* segment = app.add_subcommand("segment", "Segment one tensor set");
  segment->add_option("--manifest", seg.manifest, "Tensor set manifest")->required();
  segment->add_option("--out", seg.out_dir, "Output directory")->required();
  segment->add_option("--config", seg.config_path, "JSON config; flags override it");
  segment->add_option("--tau", seg.tau, "Merge threshold in nats (default 1.0)");
  segment->add_option("--grid", seg.grid, "Anchor grid size M (default 16)");
  segment->add_option("--iters", seg.iters, "Merge iterations N (default 3)");
  segment->add_option("--epsilon", seg.epsilon, "KL clamp floor (default 1e-12)");
  segment->add_option("--target-res", seg.target_resolution,
                      "Aggregation resolution (default: manifest latent resolution)");
  segment->add_option("--out-size", seg.out_size, "Mask size WxH (default 512x512)");
  segment->add_option("--point", seg.point, "Select the region under X,Y");
  segment->add_option("--weights", seg.weights, "Explicit per-tensor weights")->delimiter(',');

  std::string pred_dir, truth_dir, mode = "matched", eval_out;
  int background = 0;
  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval->add_option("--pred", pred_dir, "Directory of predicted masks")->required();
  eval->add_option("--truth", truth_dir, "Directory of ground-truth masks")->required();
  eval->add_option("--mode", mode, "matched | point")->capture_default_str();
  eval->add_option("--background", background, "Truth label to ignore, -1 for none")
      ->capture_default_str();
  eval->add_option("--out", eval_out, "Report directory")->required();

  attnseg_synth_config synth_cfg;
  attnseg_synth_config_default(&synth_cfg);
  std::string synth_out, synth_truth, census;
  auto* synth = app.add_subcommand("synth-gen", "Write a synthetic planted tensor set");
  synth->add_option("--regions", synth_cfg.regions, "Number of planted regions K")
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise, "Noise level in [0, 1]")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "Random seed")->capture_default_str();
  synth->add_option("--resolution", synth_cfg.resolution, "Latent resolution")
      ->capture_default_str();
  synth->add_option("--block", synth_cfg.block, "Band granularity in pixels");
  synth->add_option("--census", census, "Tensor census, e.g. 64:5,32:5,16:5,8:1");
  synth->add_option("--truth-out", synth_truth, "Region map path (default OUT/truth/ID.pgm)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string image_path, mask_path, render_truth, render_out;
  double opacity = 0.0;
  auto* render = app.add_subcommand("render", "Draw region boundaries over an image");
  render->add_option("--image", image_path, "PNG or PPM image")->required();
  render->add_option("--mask", mask_path, "Label mask")->required();
  render->add_option("--truth", render_truth, "Ground-truth mask (boundary drawn in red)");
  render->add_option("--opacity", opacity, "Region fill opacity")->capture_default_str();
  render->add_option("--out", render_out, "Output PNG")->required();

  std::string info_manifest;
  auto* info = app.add_subcommand("info", "Summarize a tensor set");
  info->add_option("--manifest", info_manifest, "Tensor set manifest")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) return run_segment(seg, *segment);
    if (*eval) return run_eval(pred_dir, truth_dir, mode, background, eval_out);
    if (*synth) {
      if (!census.empty()) synth_cfg.census = census.c_str();
      return run_synth(synth_cfg, synth_out, synth_truth);
    }
    if (*render) return run_render(image_path, mask_path, render_truth, opacity, render_out);
    if (*info) return run_info(info_manifest);
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.exit_code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
