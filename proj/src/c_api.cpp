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

#include "attnseg/attnseg.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <map>
#include <new>
#include <string>

#include "attnseg/attention.hpp"
#include "attnseg/error.hpp"
#include "attnseg/mask.hpp"
#include "attnseg/merging.hpp"
#include "attnseg/metrics.hpp"
#include "attnseg/parallel.hpp"
#include "attnseg/synth.hpp"
#include "attnseg/tensor_io.hpp"
#include "json.hpp"

struct attnseg_tensor_set {
  attnseg::TensorSet value;
};
struct attnseg_label_mask {
  attnseg::LabelMask value;
};
struct attnseg_binary_mask {
  attnseg::BinaryMask value;
};
struct attnseg_image {
  attnseg::RgbImage value;
};
struct attnseg_evaluator {
  attnseg::EvalMode mode;
  std::optional<int> background;
  std::vector<attnseg::EvalSample> samples;
};

namespace {

thread_local std::string g_last_error;

attnseg_status to_status(attnseg::ErrorCode code) {
  using attnseg::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return ATTNSEG_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return ATTNSEG_ERR_IO;
    case ErrorCode::kBadMagic: return ATTNSEG_ERR_BAD_MAGIC;
    case ErrorCode::kUnsupportedVersion: return ATTNSEG_ERR_UNSUPPORTED_VERSION;
    case ErrorCode::kShapeMismatch: return ATTNSEG_ERR_SHAPE_MISMATCH;
    case ErrorCode::kNonFiniteValue: return ATTNSEG_ERR_NON_FINITE_VALUE;
    case ErrorCode::kInvalidValue: return ATTNSEG_ERR_INVALID_VALUE;
    case ErrorCode::kSchema: return ATTNSEG_ERR_SCHEMA;
    case ErrorCode::kNormalization: return ATTNSEG_ERR_NORMALIZATION;
    case ErrorCode::kInternal: return ATTNSEG_ERR_INTERNAL;
  }
  return ATTNSEG_ERR_INTERNAL;
}

// Runs fn, translating exceptions into a status and the thread's message.
template <typename Fn>
attnseg_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ATTNSEG_OK;
  } catch (const attnseg::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ATTNSEG_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ATTNSEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return ATTNSEG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error: unknown exception";
    return ATTNSEG_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw attnseg::InvalidArgumentError(what);
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

extern "C" {

const char* attnseg_version(void) { return "1.0.0"; }

const char* attnseg_last_error(void) { return g_last_error.c_str(); }

const char* attnseg_status_name(attnseg_status status) {
  switch (status) {
    case ATTNSEG_OK: return "OK";
    case ATTNSEG_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case ATTNSEG_ERR_IO: return "IoError";
    case ATTNSEG_ERR_BAD_MAGIC: return "BadMagic";
    case ATTNSEG_ERR_UNSUPPORTED_VERSION: return "UnsupportedVersion";
    case ATTNSEG_ERR_SHAPE_MISMATCH: return "ShapeMismatch";
    case ATTNSEG_ERR_NON_FINITE_VALUE: return "NonFiniteValue";
    case ATTNSEG_ERR_INVALID_VALUE: return "InvalidValue";
    case ATTNSEG_ERR_SCHEMA: return "SchemaError";
    case ATTNSEG_ERR_NORMALIZATION: return "NormalizationError";
    case ATTNSEG_ERR_INTERNAL: return "InternalError";
  }
  return "Unknown";
}

void attnseg_string_free(char* str) { std::free(str); }

void attnseg_set_num_threads(int threads) { attnseg::set_max_threads(threads); }
int attnseg_get_num_threads(void) { return attnseg::max_threads(); }

// ---- tensor sets ----------------------------------------------------------

attnseg_status attnseg_tensor_set_load(const char* manifest_path, attnseg_tensor_set** out) {
  return guarded([&] {
    require(manifest_path && out, "attnseg_tensor_set_load: null argument");
    *out = nullptr;
    auto set = std::make_unique<attnseg_tensor_set>();
    set->value = attnseg::load_tensor_set(manifest_path);
    *out = set.release();
  });
}

void attnseg_tensor_set_free(attnseg_tensor_set* set) { delete set; }

size_t attnseg_tensor_set_count(const attnseg_tensor_set* set) {
  return set ? set->value.tensors.size() : 0;
}

int attnseg_tensor_set_latent_resolution(const attnseg_tensor_set* set) {
  return set ? set->value.manifest.latent_resolution : 0;
}

const char* attnseg_tensor_set_image_id(const attnseg_tensor_set* set) {
  return set ? set->value.manifest.image_id.c_str() : "";
}

attnseg_status attnseg_tensor_set_info_json(const attnseg_tensor_set* set, char** out_json) {
  return guarded([&] {
    require(set && out_json, "attnseg_tensor_set_info_json: null argument");
    const auto& ts = set->value;
    std::vector<int> resolutions;
    std::map<int, int, std::greater<int>> census;
    for (const auto& t : ts.tensors) {
      resolutions.push_back(t.resolution);
      ++census[t.resolution];
    }
    const auto weights = attnseg::compute_weights(resolutions);
    nlohmann::json layers = nlohmann::json::array();
    std::map<int, double, std::greater<int>> weight_by_res;
    for (std::size_t k = 0; k < ts.tensors.size(); ++k) {
      layers.push_back({{"layer_id", ts.tensors[k].layer_id},
                        {"resolution", ts.tensors[k].resolution},
                        {"file", ts.manifest.entries[k].file},
                        {"weight", weights[k]}});
      weight_by_res[ts.tensors[k].resolution] = weights[k];
    }
    nlohmann::json census_json = nlohmann::json::array();
    for (auto [res, count] : census) {
      census_json.push_back(
          {{"resolution", res}, {"count", count}, {"weight_per_layer", weight_by_res[res]}});
    }
    nlohmann::json doc = {{"image_id", ts.manifest.image_id},
                          {"latent_resolution", ts.manifest.latent_resolution},
                          {"timestep", ts.manifest.timestep},
                          {"extractor_info", ts.manifest.extractor_info},
                          {"tensor_count", ts.tensors.size()},
                          {"census", census_json},
                          {"layers", layers},
                          {"drift",
                           {{"renormalized_slices", ts.renormalized_slices},
                            {"max", ts.max_drift},
                            {"mean", ts.mean_drift}}}};
    *out_json = copy_string(doc.dump(2));
  });
}

// ---- segmentation ---------------------------------------------------------

void attnseg_segment_config_default(attnseg_segment_config* config) {
  if (!config) return;
  const attnseg::MergeConfig merge;
  config->grid_size = merge.grid_size;
  config->iterations = merge.iterations;
  config->tau = merge.tau;
  config->epsilon = merge.epsilon;
  config->target_resolution = 0;
  config->out_width = 512;
  config->out_height = 512;
  config->weights = nullptr;
  config->weight_count = 0;
}

attnseg_status attnseg_segment(const attnseg_tensor_set* set,
                               const attnseg_segment_config* config,
                               attnseg_label_mask** out_mask, attnseg_segment_stats* stats) {
  return guarded([&] {
    require(set && config && out_mask, "attnseg_segment: null argument");
    *out_mask = nullptr;
    const auto& ts = set->value;
    const int target =
        config->target_resolution > 0 ? config->target_resolution : ts.manifest.latent_resolution;

    attnseg::WeightVector weights;
    if (config->weights) {
      if (config->weight_count != ts.tensors.size()) {
        throw attnseg::InvalidArgumentError(
            "attnseg_segment: " + std::to_string(config->weight_count) + " weights for " +
            std::to_string(ts.tensors.size()) + " tensors");
      }
      weights = attnseg::explicit_weights(
          std::vector<double>(config->weights, config->weights + config->weight_count));
    } else {
      std::vector<int> resolutions;
      for (const auto& t : ts.tensors) resolutions.push_back(t.resolution);
      weights = attnseg::compute_weights(resolutions);
    }

    attnseg::MergeConfig merge;
    merge.grid_size = config->grid_size;
    merge.iterations = config->iterations;
    merge.tau = config->tau;
    merge.epsilon = config->epsilon;
    merge.validate(target);

    auto t0 = std::chrono::steady_clock::now();
    const auto af = attnseg::aggregate(ts.tensors, weights, target);
    const double t_agg = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto proposals = attnseg::iterative_merge(af, merge);
    const double t_merge = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto mask = std::make_unique<attnseg_label_mask>();
    mask->value = attnseg::nms_mask(proposals, config->out_width, config->out_height);
    const double t_nms = seconds_since(t0);

    if (proposals.size() < 1 ||
        proposals.size() > static_cast<std::size_t>(merge.grid_size) * merge.grid_size) {
      throw attnseg::InternalError("proposal count " + std::to_string(proposals.size()) +
                                   " outside [1, M^2]");
    }
    if (stats) {
      stats->num_proposals = proposals.size();
      stats->num_tensors = ts.tensors.size();
      stats->target_resolution = target;
      stats->aggregate_seconds = t_agg;
      stats->merge_seconds = t_merge;
      stats->nms_seconds = t_nms;
    }
    *out_mask = mask.release();
  });
}

// ---- label masks ----------------------------------------------------------

attnseg_status attnseg_label_mask_load(const char* path, attnseg_label_mask** out) {
  return guarded([&] {
    require(path && out, "attnseg_label_mask_load: null argument");
    *out = nullptr;
    auto mask = std::make_unique<attnseg_label_mask>();
    mask->value = attnseg::read_label_mask(path);
    *out = mask.release();
  });
}

attnseg_status attnseg_label_mask_save(const attnseg_label_mask* mask, const char* path) {
  return guarded([&] {
    require(mask && path, "attnseg_label_mask_save: null argument");
    attnseg::write_label_mask(mask->value, path);
  });
}

const char* attnseg_label_mask_extension(const attnseg_label_mask* mask) {
  return mask ? attnseg::label_mask_extension(mask->value) : ".pgm";
}

void attnseg_label_mask_free(attnseg_label_mask* mask) { delete mask; }
int attnseg_label_mask_width(const attnseg_label_mask* mask) { return mask ? mask->value.width : 0; }
int attnseg_label_mask_height(const attnseg_label_mask* mask) { return mask ? mask->value.height : 0; }
int attnseg_label_mask_num_labels(const attnseg_label_mask* mask) {
  return mask ? mask->value.num_labels : 0;
}
const uint16_t* attnseg_label_mask_data(const attnseg_label_mask* mask) {
  return mask ? mask->value.labels.data() : nullptr;
}

attnseg_status attnseg_select_region(const attnseg_label_mask* mask, int x, int y,
                                     attnseg_binary_mask** out) {
  return guarded([&] {
    require(mask && out, "attnseg_select_region: null argument");
    *out = nullptr;
    auto region = std::make_unique<attnseg_binary_mask>();
    region->value = attnseg::select_region(mask->value, x, y);
    *out = region.release();
  });
}

attnseg_status attnseg_binary_mask_from_labels(const attnseg_label_mask* mask,
                                               attnseg_binary_mask** out) {
  return guarded([&] {
    require(mask && out, "attnseg_binary_mask_from_labels: null argument");
    *out = nullptr;
    auto bin = std::make_unique<attnseg_binary_mask>();
    bin->value = attnseg::binary_from_labels(mask->value);
    *out = bin.release();
  });
}

attnseg_status attnseg_binary_mask_save(const attnseg_binary_mask* mask, const char* path) {
  return guarded([&] {
    require(mask && path, "attnseg_binary_mask_save: null argument");
    attnseg::write_binary_mask(mask->value, path);
  });
}

size_t attnseg_binary_mask_count(const attnseg_binary_mask* mask) {
  return mask ? mask->value.count() : 0;
}

void attnseg_binary_mask_free(attnseg_binary_mask* mask) { delete mask; }

// ---- images ---------------------------------------------------------------

attnseg_status attnseg_image_load(const char* path, attnseg_image** out) {
  return guarded([&] {
    require(path && out, "attnseg_image_load: null argument");
    *out = nullptr;
    auto img = std::make_unique<attnseg_image>();
    img->value = attnseg::read_image(path);
    *out = img.release();
  });
}

attnseg_status attnseg_image_save_png(const attnseg_image* image, const char* path) {
  return guarded([&] {
    require(image && path, "attnseg_image_save_png: null argument");
    attnseg::write_png(image->value, path);
  });
}

void attnseg_image_free(attnseg_image* image) { delete image; }
int attnseg_image_width(const attnseg_image* image) { return image ? image->value.width : 0; }
int attnseg_image_height(const attnseg_image* image) { return image ? image->value.height : 0; }

attnseg_status attnseg_render_overlay(const attnseg_image* image, const attnseg_label_mask* mask,
                                      const attnseg_binary_mask* truth, double fill_opacity,
                                      attnseg_image** out) {
  return guarded([&] {
    require(image && mask && out, "attnseg_render_overlay: null argument");
    *out = nullptr;
    attnseg::OverlayStyle style;
    style.fill_opacity = fill_opacity;
    auto img = std::make_unique<attnseg_image>();
    img->value = attnseg::render_overlay(image->value, mask->value,
                                         truth ? &truth->value : nullptr, style);
    *out = img.release();
  });
}

// ---- evaluation -----------------------------------------------------------

attnseg_status attnseg_evaluator_create(attnseg_eval_mode mode, int background,
                                        attnseg_evaluator** out) {
  return guarded([&] {
    require(out, "attnseg_evaluator_create: null argument");
    require(mode == ATTNSEG_EVAL_MATCHED || mode == ATTNSEG_EVAL_POINT,
            "attnseg_evaluator_create: unknown mode");
    require(background >= -1 && background <= 65535,
            "attnseg_evaluator_create: background out of range");
    auto ev = std::make_unique<attnseg_evaluator>();
    ev->mode = mode == ATTNSEG_EVAL_MATCHED ? attnseg::EvalMode::kMatched
                                            : attnseg::EvalMode::kPointPrompted;
    if (background >= 0) ev->background = background;
    *out = ev.release();
  });
}

void attnseg_evaluator_free(attnseg_evaluator* evaluator) { delete evaluator; }

attnseg_status attnseg_evaluator_add(attnseg_evaluator* evaluator, const char* name,
                                     const attnseg_label_mask* prediction,
                                     const attnseg_label_mask* truth) {
  return guarded([&] {
    require(evaluator && name && prediction && truth, "attnseg_evaluator_add: null argument");
    const auto& p = prediction->value;
    const auto& t = truth->value;
    if (p.width != t.width || p.height != t.height) {
      throw attnseg::ShapeMismatchError(std::string("sample ") + name + ": prediction is " +
                                        std::to_string(p.width) + "x" +
                                        std::to_string(p.height) + ", truth is " +
                                        std::to_string(t.width) + "x" +
                                        std::to_string(t.height));
    }
    evaluator->samples.push_back({name, p, t});
  });
}

attnseg_status attnseg_evaluator_report(const attnseg_evaluator* evaluator, char** out_json,
                                        char** out_text) {
  return guarded([&] {
    require(evaluator, "attnseg_evaluator_report: null argument");
    const auto report =
        attnseg::evaluate_dataset(evaluator->samples, evaluator->mode, evaluator->background);
    char* json = out_json ? copy_string(attnseg::report_to_json(report)) : nullptr;
    if (out_text) {
      try {
        *out_text = copy_string(attnseg::report_to_text(report));
      } catch (...) {
        std::free(json);
        throw;
      }
    }
    if (out_json) *out_json = json;
  });
}

// ---- synthetic fixtures ---------------------------------------------------

void attnseg_synth_config_default(attnseg_synth_config* config) {
  if (!config) return;
  config->regions = 2;
  config->noise = 0.0;
  config->seed = 0;
  config->resolution = 64;
  config->block = 0;
  config->census = nullptr;
}

attnseg_status attnseg_synth_generate(const attnseg_synth_config* config, const char* out_dir,
                                      const char* truth_path, char** image_id_out) {
  return guarded([&] {
    require(config && out_dir, "attnseg_synth_generate: null argument");
    const int block = config->block > 0 ? config->block : std::max(1, config->resolution / 8);
    const auto scene = attnseg::make_band_scene(config->regions, config->resolution, block,
                                                config->noise, config->seed);
    const auto census = config->census ? attnseg::parse_census(config->census)
                                       : attnseg::default_census(config->resolution);
    const auto set = attnseg::generate_tensor_set(scene, census);
    const std::filesystem::path dir(out_dir);
    const std::filesystem::path truth =
        truth_path ? std::filesystem::path(truth_path)
                   : dir / "truth" / (set.manifest.image_id + ".pgm");
    attnseg::write_generated_set(set, scene, dir, truth);
    if (image_id_out) *image_id_out = copy_string(set.manifest.image_id);
  });
}

}  // extern "C"
