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

#include "attnseg/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "attnseg/error.hpp"
#include "json.hpp"

namespace attnseg {

namespace fs = std::filesystem;
using nlohmann::json;

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kNormalization: return "NormalizationError";
    case ErrorCode::kInternal: return "InternalError";
  }
  return "Unknown";
}

AttentionTensor::AttentionTensor(int layer, int res)
    : layer_id(layer), resolution(res) {
  if (res < 1 || res > kMaxTensorResolution) {
    throw InvalidArgumentError("tensor resolution " + std::to_string(res) +
                               " out of range [1, " +
                               std::to_string(kMaxTensorResolution) + "]");
  }
  data.assign(slice_size() * slice_count(), 0.0f);
}

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
         (v >> 24);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return byteswap32(v);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::uint32_t le = to_le(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw IoError("unexpected end of data reading " + std::string(what) +
                    " at byte offset " + std::to_string(offset_ + in_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    read(&v, sizeof(v), what);
    return to_le(v);
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_tensor(const AttentionTensor& tensor, std::ostream& sink) {
  const auto w = static_cast<std::uint32_t>(tensor.resolution);
  const std::size_t expected = static_cast<std::size_t>(w) * w * w * w;
  if (tensor.resolution < 1 || tensor.data.size() != expected) {
    throw ShapeMismatchError("tensor data holds " +
                             std::to_string(tensor.data.size()) +
                             " values, resolution " +
                             std::to_string(tensor.resolution) + " needs " +
                             std::to_string(expected));
  }
  sink.write(kTensorMagic, 4);
  put_u32(sink, kTensorVersion);
  put_u32(sink, 4);
  for (int d = 0; d < 4; ++d) put_u32(sink, w);
  if constexpr (std::endian::native == std::endian::little) {
    sink.write(reinterpret_cast<const char*>(tensor.data.data()),
               static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  } else {
    for (float f : tensor.data) put_u32(sink, std::bit_cast<std::uint32_t>(f));
  }
  if (!sink) throw IoError("tensor write failed");
}

void write_tensor_file(const AttentionTensor& tensor, const fs::path& path) {
  std::ostringstream buffer(std::ios::binary);
  write_tensor(tensor, buffer);
  write_file_atomic(path, buffer.str());
}

AttentionTensor read_tensor(std::istream& source) {
  Reader reader(source);
  char magic[4];
  reader.read(magic, 4, "magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw BadMagicError("bad magic at byte offset 0: expected \"ADZT\", got \"" +
                        std::string(magic, 4) + "\"");
  }
  const std::uint32_t version = reader.u32("version");
  if (version != kTensorVersion) {
    throw UnsupportedVersionError("unsupported version " +
                                  std::to_string(version) +
                                  " at byte offset 4");
  }
  const std::uint32_t ndim = reader.u32("ndim");
  if (ndim != 4) {
    throw ShapeMismatchError("ndim " + std::to_string(ndim) +
                             " at byte offset 8, expected 4");
  }
  std::uint32_t dims[4];
  for (auto& d : dims) d = reader.u32("dims");
  for (int d = 0; d < 4; ++d) {
    if (dims[d] != dims[0]) {
      throw ShapeMismatchError(
          "non-square shape " + std::to_string(dims[0]) + "x" +
          std::to_string(dims[1]) + "x" + std::to_string(dims[2]) + "x" +
          std::to_string(dims[3]) + ": dim " + std::to_string(d) +
          " at byte offset " + std::to_string(12 + 4 * d) +
          " differs from dim 0");
    }
  }
  if (dims[0] < 1 || dims[0] > static_cast<std::uint32_t>(kMaxTensorResolution)) {
    throw ShapeMismatchError("resolution " + std::to_string(dims[0]) +
                             " at byte offset 12 out of range [1, " +
                             std::to_string(kMaxTensorResolution) + "]");
  }

  AttentionTensor tensor(0, static_cast<int>(dims[0]));
  reader.read(tensor.data.data(), tensor.data.size() * sizeof(float), "payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : tensor.data) {
      f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
    }
  }
  for (std::size_t i = 0; i < tensor.data.size(); ++i) {
    const float v = tensor.data[i];
    if (!std::isfinite(v)) {
      throw NonFiniteValueError("non-finite value at element " +
                                std::to_string(i) + " (byte offset " +
                                std::to_string(kTensorHeaderBytes + 4 * i) + ")");
    }
    if (v < 0.0f) {
      throw InvalidValueError("negative value at element " + std::to_string(i) +
                              " (byte offset " +
                              std::to_string(kTensorHeaderBytes + 4 * i) + ")");
    }
  }
  return tensor;
}

AttentionTensor read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + path.string());
  try {
    return read_tensor(in);
  } catch (const Error& e) {
    // Re-throw with the file name prepended, keeping the error kind.
    const std::string msg = path.string() + ": " + e.what();
    switch (e.code()) {
      case ErrorCode::kBadMagic: throw BadMagicError(msg);
      case ErrorCode::kUnsupportedVersion: throw UnsupportedVersionError(msg);
      case ErrorCode::kShapeMismatch: throw ShapeMismatchError(msg);
      case ErrorCode::kNonFiniteValue: throw NonFiniteValueError(msg);
      case ErrorCode::kInvalidValue: throw InvalidValueError(msg);
      case ErrorCode::kIo: throw IoError(msg);
      default: throw;
    }
  }
}

namespace {

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(where + ": missing required field \"" + key + "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field \"" + key + "\" has the wrong type");
  }
}

template <typename T>
T optional_field(const json& obj, const char* key, T fallback,
                 const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return require<T>(obj, key, where);
}

}  // namespace

TensorSetManifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("manifest root must be an object");

  TensorSetManifest m;
  m.image_id = require<std::string>(doc, "image_id", "manifest");
  m.latent_resolution = optional_field<int>(doc, "latent_resolution", 64, "manifest");
  m.timestep = optional_field<int>(doc, "timestep", 0, "manifest");
  m.extractor_info =
      optional_field<std::string>(doc, "extractor_info", "", "manifest");

  auto entries = doc.find("entries");
  if (entries == doc.end() || !entries->is_array()) {
    throw SchemaError("manifest: \"entries\" must be an array");
  }
  if (entries->empty()) throw SchemaError("manifest: \"entries\" is empty");
  if (m.latent_resolution < 1) {
    throw SchemaError("manifest: latent_resolution must be positive");
  }

  std::set<int> seen;
  bool has_latent = false;
  for (std::size_t i = 0; i < entries->size(); ++i) {
    const json& e = (*entries)[i];
    const std::string where = "manifest entries[" + std::to_string(i) + "]";
    if (!e.is_object()) throw SchemaError(where + " must be an object");
    ManifestEntry entry;
    entry.layer_id = require<int>(e, "layer_id", where);
    entry.resolution = require<int>(e, "resolution", where);
    entry.file = require<std::string>(e, "file", where);
    if (entry.layer_id < 0) throw SchemaError(where + ": negative layer_id");
    if (entry.resolution < 1 || entry.resolution > kMaxTensorResolution) {
      throw SchemaError(where + ": resolution out of range");
    }
    if (!seen.insert(entry.layer_id).second) {
      throw SchemaError(where + ": duplicate layer_id " +
                        std::to_string(entry.layer_id));
    }
    has_latent |= entry.resolution == m.latent_resolution;
    m.entries.push_back(std::move(entry));
  }
  if (!has_latent) {
    throw SchemaError("manifest: no entry has the latent resolution " +
                      std::to_string(m.latent_resolution));
  }
  return m;
}

std::string manifest_to_json(const TensorSetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back(
        {{"layer_id", e.layer_id}, {"resolution", e.resolution}, {"file", e.file}});
  }
  json doc = {{"image_id", manifest.image_id},
              {"latent_resolution", manifest.latent_resolution},
              {"timestep", manifest.timestep},
              {"extractor_info", manifest.extractor_info},
              {"entries", entries}};
  return doc.dump(2) + "\n";
}

TensorSet load_tensor_set(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  std::stringstream text;
  text << in.rdbuf();

  TensorSet set;
  try {
    set.manifest = parse_manifest(text.str());
  } catch (const SchemaError& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }

  const fs::path base = manifest_path.parent_path();
  double drift_total = 0.0;
  std::size_t slices_total = 0;
  for (const auto& entry : set.manifest.entries) {
    const fs::path file = base / entry.file;
    if (!fs::exists(file)) {
      throw IoError("tensor file " + file.string() + " (layer " +
                    std::to_string(entry.layer_id) + ") does not exist");
    }
    AttentionTensor t = read_tensor_file(file);
    if (t.resolution != entry.resolution) {
      throw ShapeMismatchError(file.string() + ": resolution " +
                               std::to_string(t.resolution) +
                               " does not match manifest resolution " +
                               std::to_string(entry.resolution));
    }
    t.layer_id = entry.layer_id;

    for (int i = 0; i < t.resolution; ++i) {
      for (int j = 0; j < t.resolution; ++j) {
        auto s = t.slice(i, j);
        double sum = 0.0;
        for (float v : s) sum += v;
        const double drift = std::abs(sum - 1.0);
        if (drift > kMaxDrift) {
          throw NormalizationError(
              file.string() + ": slice (" + std::to_string(i) + ", " +
              std::to_string(j) + ") sums to " + std::to_string(sum) +
              ", beyond the accepted drift of " + std::to_string(kMaxDrift));
        }
        if (drift > kSilentDrift) {
          const double inv = 1.0 / sum;
          for (float& v : s) v = static_cast<float>(v * inv);
          ++set.renormalized_slices;
        }
        set.max_drift = std::max(set.max_drift, drift);
        drift_total += drift;
        ++slices_total;
      }
    }
    set.tensors.push_back(std::move(t));
  }
  set.mean_drift = slices_total ? drift_total / slices_total : 0.0;
  return set;
}

void write_tensor_set(const fs::path& dir, const TensorSetManifest& manifest,
                      std::span<const AttentionTensor> tensors) {
  if (manifest.entries.size() != tensors.size()) {
    throw InvalidArgumentError("manifest has " +
                               std::to_string(manifest.entries.size()) +
                               " entries but " + std::to_string(tensors.size()) +
                               " tensors were given");
  }
  fs::create_directories(dir);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    write_tensor_file(tensors[k], dir / manifest.entries[k].file);
  }
  write_file_atomic(dir / "manifest.json", manifest_to_json(manifest));
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace attnseg
