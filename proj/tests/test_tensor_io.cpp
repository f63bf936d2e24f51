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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "attnseg/error.hpp"
#include "attnseg/tensor_io.hpp"

namespace attnseg {
namespace {

namespace fs = std::filesystem;

AttentionTensor random_tensor(int w, std::mt19937& rng) {
  AttentionTensor t(0, w);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < w; ++j) {
      auto s = t.slice(i, j);
      double sum = 0.0;
      for (float& v : s) sum += (v = u(rng));
      for (float& v : s) v = static_cast<float>(v / sum);
    }
  }
  return t;
}

std::string serialize(const AttentionTensor& t) {
  std::ostringstream out(std::ios::binary);
  write_tensor(t, out);
  return out.str();
}

AttentionTensor parse(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_tensor(in);
}

void put_u32(std::string& s, std::size_t offset, std::uint32_t v) {
  std::memcpy(s.data() + offset, &v, 4);  // test host is little-endian
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("attnseg_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(WriteTensor, SmallestTensorIs32Bytes) {
  AttentionTensor t(0, 1);
  t.data[0] = 1.0f;
  const std::string bytes = serialize(t);
  ASSERT_EQ(bytes.size(), 32u);
  EXPECT_EQ(bytes.substr(0, 4), "ADZT");
  std::uint32_t header[6];
  std::memcpy(header, bytes.data() + 4, sizeof(header));
  EXPECT_EQ(header[0], 1u);  // version
  EXPECT_EQ(header[1], 4u);  // ndim
  for (int d = 2; d < 6; ++d) EXPECT_EQ(header[d], 1u);
  float payload;
  std::memcpy(&payload, bytes.data() + 28, 4);
  EXPECT_EQ(payload, 1.0f);
}

TEST(WriteTensor, EightCubedLayoutSize) {
  std::mt19937 rng(1);
  EXPECT_EQ(serialize(random_tensor(8, rng)).size(), 28u + 4096u * 4u);
}

TEST(WriteTensor, RejectsInconsistentData) {
  AttentionTensor t(0, 2);
  t.data.pop_back();
  std::ostringstream out;
  EXPECT_THROW(write_tensor(t, out), ShapeMismatchError);
}

TEST(ReadTensor, MinimalFile) {
  AttentionTensor t(0, 1);
  t.data[0] = 1.0f;
  const AttentionTensor back = parse(serialize(t));
  EXPECT_EQ(back.resolution, 1);
  ASSERT_EQ(back.data.size(), 1u);
  EXPECT_EQ(back.data[0], 1.0f);
}

TEST(ReadTensor, RoundTripIsBitIdentical) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionTensor t = random_tensor(size(rng), rng);
    const AttentionTensor back = parse(serialize(t));
    ASSERT_EQ(back.resolution, t.resolution);
    ASSERT_EQ(0, std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4));
  }
}

TEST(ReadTensor, BadMagic) {
  std::mt19937 rng(2);
  std::string bytes = serialize(random_tensor(2, rng));
  bytes.replace(0, 4, "XXXX");
  EXPECT_THROW(parse(bytes), BadMagicError);
}

TEST(ReadTensor, UnsupportedVersion) {
  std::mt19937 rng(2);
  std::string bytes = serialize(random_tensor(2, rng));
  put_u32(bytes, 4, 2);
  EXPECT_THROW(parse(bytes), UnsupportedVersionError);
}

TEST(ReadTensor, WrongRank) {
  std::mt19937 rng(2);
  std::string bytes = serialize(random_tensor(2, rng));
  put_u32(bytes, 8, 3);
  EXPECT_THROW(parse(bytes), ShapeMismatchError);
}

TEST(ReadTensor, NonSquarePairing) {
  std::mt19937 rng(3);
  std::string bytes = serialize(random_tensor(8, rng));
  put_u32(bytes, 24, 4);  // dims 8x8x8x4
  try {
    parse(bytes);
    FAIL() << "expected ShapeMismatchError";
  } catch (const ShapeMismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 24"), std::string::npos) << e.what();
  }
}

TEST(ReadTensor, NonFiniteValueNamesIndex) {
  std::mt19937 rng(4);
  std::string bytes = serialize(random_tensor(2, rng));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 28 + 4 * 5, &nan, 4);
  try {
    parse(bytes);
    FAIL() << "expected NonFiniteValueError";
  } catch (const NonFiniteValueError& e) {
    EXPECT_NE(std::string(e.what()).find("element 5"), std::string::npos) << e.what();
  }
}

TEST(ReadTensor, NegativeValue) {
  std::mt19937 rng(4);
  std::string bytes = serialize(random_tensor(2, rng));
  const float neg = -0.5f;
  std::memcpy(bytes.data() + 28, &neg, 4);
  EXPECT_THROW(parse(bytes), InvalidValueError);
}

TEST(ReadTensor, TruncatedPayload) {
  std::mt19937 rng(5);
  std::string bytes = serialize(random_tensor(3, rng));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(parse(bytes), IoError);
  EXPECT_THROW(parse("AD"), IoError);
}

TEST(ParseManifest, EmptyEntriesIsSchemaViolation) {
  EXPECT_THROW(parse_manifest(R"({"image_id": "a", "latent_resolution": 64, "entries": []})"),
               SchemaError);
}

TEST(ParseManifest, DuplicateLayerId) {
  const char* text = R"({"image_id": "a", "latent_resolution": 8, "entries": [
      {"layer_id": 0, "resolution": 8, "file": "a.adzt"},
      {"layer_id": 0, "resolution": 4, "file": "b.adzt"}]})";
  EXPECT_THROW(parse_manifest(text), SchemaError);
}

TEST(ParseManifest, RequiresLatentResolutionEntry) {
  const char* text = R"({"image_id": "a", "latent_resolution": 64, "entries": [
      {"layer_id": 0, "resolution": 8, "file": "a.adzt"}]})";
  EXPECT_THROW(parse_manifest(text), SchemaError);
}

TEST(ParseManifest, WrongTypesAndMissingFields) {
  EXPECT_THROW(parse_manifest("[]"), SchemaError);
  EXPECT_THROW(parse_manifest("{not json"), SchemaError);
  EXPECT_THROW(parse_manifest(R"({"entries": [{"layer_id": 0, "resolution": 8, "file": "a"}]})"),
               SchemaError);
  EXPECT_THROW(parse_manifest(R"({"image_id": "a", "latent_resolution": 8,
      "entries": [{"layer_id": "zero", "resolution": 8, "file": "a"}]})"),
               SchemaError);
}

TEST(ParseManifest, RoundTripsThroughJson) {
  TensorSetManifest m;
  m.image_id = "img";
  m.latent_resolution = 8;
  m.timestep = 300;
  m.extractor_info = "x";
  m.entries = {{0, 8, "a.adzt"}, {3, 4, "b.adzt"}};
  const TensorSetManifest back = parse_manifest(manifest_to_json(m));
  EXPECT_EQ(back.image_id, "img");
  EXPECT_EQ(back.timestep, 300);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].layer_id, 3);
  EXPECT_EQ(back.entries[1].resolution, 4);
  EXPECT_EQ(back.entries[1].file, "b.adzt");
}

TEST(LoadTensorSet, FullCensusLoadsSixteenTensors) {
  // Small-resolution analogue of {64:5, 32:5, 16:5, 8:1}.
  TempDir dir;
  std::mt19937 rng(11);
  TensorSetManifest m;
  m.image_id = "census";
  m.latent_resolution = 8;
  std::vector<AttentionTensor> tensors;
  int layer = 0;
  for (auto [w, count] : {std::pair{8, 5}, {4, 5}, {2, 5}, {1, 1}}) {
    for (int c = 0; c < count; ++c, ++layer) {
      tensors.push_back(random_tensor(w, rng));
      m.entries.push_back({layer, w, "t" + std::to_string(layer) + ".adzt"});
    }
  }
  write_tensor_set(dir.path(), m, tensors);
  const TensorSet set = load_tensor_set(dir.path() / "manifest.json");
  ASSERT_EQ(set.tensors.size(), 16u);
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_EQ(set.tensors[k].layer_id, static_cast<int>(k));
    EXPECT_EQ(set.tensors[k].resolution, m.entries[k].resolution);
  }
  EXPECT_EQ(set.renormalized_slices, 0u);
}

TEST(LoadTensorSet, SingleTensorManifest) {
  TempDir dir;
  std::mt19937 rng(12);
  TensorSetManifest m{"one", 4, 0, "", {{0, 4, "only.adzt"}}};
  std::vector<AttentionTensor> tensors{random_tensor(4, rng)};
  write_tensor_set(dir.path(), m, tensors);
  EXPECT_EQ(load_tensor_set(dir.path() / "manifest.json").tensors.size(), 1u);
}

TEST(LoadTensorSet, DriftPolicy) {
  TempDir dir;
  TensorSetManifest m{"drift", 2, 0, "", {{0, 2, "d.adzt"}}};
  AttentionTensor t(0, 2);
  std::fill(t.data.begin(), t.data.end(), 0.25f);
  // Slice (0, 0) sums to 1.004: renormalized silently.
  t.slice(0, 0)[0] = 0.254f;
  std::vector<AttentionTensor> tensors{t};
  write_tensor_set(dir.path(), m, tensors);
  const TensorSet set = load_tensor_set(dir.path() / "manifest.json");
  EXPECT_EQ(set.renormalized_slices, 1u);
  EXPECT_NEAR(set.max_drift, 0.004, 1e-6);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double sum = 0.0;
      for (float v : set.tensors[0].slice(i, j)) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }

  // Slice (1, 1) sums to 1.05: rejected.
  tensors[0].slice(1, 1)[3] = 0.3f;
  write_tensor_set(dir.path(), m, tensors);
  EXPECT_THROW(load_tensor_set(dir.path() / "manifest.json"), NormalizationError);
}

TEST(LoadTensorSet, MissingFileAndResolutionMismatch) {
  TempDir dir;
  std::mt19937 rng(13);
  TensorSetManifest m{"bad", 4, 0, "", {{0, 4, "missing.adzt"}}};
  write_file_atomic(dir.path() / "manifest.json", manifest_to_json(m));
  try {
    load_tensor_set(dir.path() / "manifest.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.adzt"), std::string::npos);
  }

  std::vector<AttentionTensor> tensors{random_tensor(2, rng)};
  m.entries[0].file = "small.adzt";
  write_tensor_set(dir.path(), m, tensors);
  EXPECT_THROW(load_tensor_set(dir.path() / "manifest.json"), ShapeMismatchError);

  EXPECT_THROW(load_tensor_set(dir.path() / "nope.json"), IoError);
}

TEST(LoadTensorSet, CorruptTensorKeepsErrorKindAndNamesFile) {
  TempDir dir;
  std::mt19937 rng(14);
  TensorSetManifest m{"corrupt", 2, 0, "", {{0, 2, "c.adzt"}}};
  std::vector<AttentionTensor> tensors{random_tensor(2, rng)};
  write_tensor_set(dir.path(), m, tensors);
  {
    std::fstream f(dir.path() / "c.adzt", std::ios::in | std::ios::out | std::ios::binary);
    f.write("JUNK", 4);
  }
  try {
    load_tensor_set(dir.path() / "manifest.json");
    FAIL() << "expected BadMagicError";
  } catch (const BadMagicError& e) {
    EXPECT_NE(std::string(e.what()).find("c.adzt"), std::string::npos);
  }
}

}  // namespace
}  // namespace attnseg
