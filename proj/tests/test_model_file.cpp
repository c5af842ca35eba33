#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "exerclass/errors.hpp"
#include "exerclass/model.hpp"
#include "support/oracles.hpp"

namespace exerclass {
namespace {

std::string expect_format_error(const std::string& bytes) {
  try {
    deserialize_model(bytes);
  } catch (const ModelFormatError& e) {
    return e.field();
  }
  ADD_FAILURE() << "file was accepted";
  return {};
}

std::string replace_line(std::string bytes, const std::string& key, const std::string& value) {
  const auto at = bytes.find(key + ": ");
  EXPECT_NE(at, std::string::npos);
  const auto end = bytes.find('\n', at);
  bytes.replace(at, end - at, key + ": " + value);
  return bytes;
}

TEST(ModelFile, RoundTripIsBitExact) {
  const ModelConfig cfg;
  const auto params = init_params(cfg, 9);
  const ClassRegistry registry;
  const auto bytes = serialize_model(params, cfg, registry);
  const auto loaded = deserialize_model(bytes);
  EXPECT_EQ(loaded.config, cfg);
  EXPECT_EQ(loaded.registry, registry);
  std::vector<float> a, b;
  params.visit([&a](std::span<const float> t) { a.insert(a.end(), t.begin(), t.end()); });
  loaded.params.visit([&b](std::span<const float> t) { b.insert(b.end(), t.begin(), t.end()); });
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  EXPECT_EQ(serialize_model(loaded.params, loaded.config, loaded.registry), bytes);
}

TEST(ModelFile, RoundTripKeepsSpecialValuesAndCustomConfig) {
  auto cfg = testing::tiny_config(7, {5, 3, 2}, 3, 12);
  cfg.pad_value = -1.0f;
  std::mt19937_64 gen(1);
  auto params = testing::random_params<float>(cfg, gen);
  params.dense_bias[0] = -0.0f;
  params.dense_bias[1] = 1e-42f;  // subnormal
  const ClassRegistry registry({"a", "b", "c d"});
  const auto loaded = deserialize_model(serialize_model(params, cfg, registry));
  EXPECT_EQ(loaded.config, cfg);
  EXPECT_EQ(loaded.registry, registry);
  EXPECT_TRUE(std::signbit(loaded.params.dense_bias[0]));
  EXPECT_EQ(loaded.params.dense_bias[1], 1e-42f);
  EXPECT_EQ(loaded.params, params);
}

TEST(ModelFile, SaveAndLoadFromDisk) {
  const ModelConfig cfg;
  const auto params = init_params(cfg, 2);
  const std::string path = ::testing::TempDir() + "model_roundtrip.bin";
  save_model(params, cfg, ClassRegistry{}, path);
  EXPECT_EQ(load_model(path).params, params);
}

TEST(ModelFile, TruncationIsChecksumError) {
  const ModelConfig cfg;
  const auto bytes = serialize_model(init_params(cfg, 1), cfg, ClassRegistry{});
  for (std::size_t cut : {std::size_t{1}, std::size_t{4}, std::size_t{1000}, bytes.size() / 2}) {
    EXPECT_EQ(expect_format_error(bytes.substr(0, bytes.size() - cut)), "checksum");
  }
}

TEST(ModelFile, FlippedPayloadByteIsChecksumError) {
  const ModelConfig cfg;
  auto bytes = serialize_model(init_params(cfg, 1), cfg, ClassRegistry{});
  bytes[bytes.size() - 100] ^= 0x10;
  EXPECT_EQ(expect_format_error(bytes), "checksum");
}

TEST(ModelFile, KernelsForSmallerUnitsIsShapeError) {
  // Parameters for one 32-unit layer, relabeled in the header as [64, 64].
  const auto small = testing::tiny_config(132, {32}, 4, 32);
  auto bytes = serialize_model(init_params(small, 1), small, ClassRegistry{});
  bytes = replace_line(bytes, "lstm_units", "64 64");
  EXPECT_EQ(expect_format_error(bytes), "lstm0.input_kernel");
}

TEST(ModelFile, HeaderFieldsAreNamed) {
  const ModelConfig cfg;
  const auto bytes = serialize_model(init_params(cfg, 1), cfg, ClassRegistry{});
  EXPECT_EQ(expect_format_error("NOT-A-MODEL\n" + bytes.substr(bytes.find('\n') + 1)), "magic");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "format_version", "2")), "format_version");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "gate_order", "i g f o")), "gate_order");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "kernel_layout", "gate-major")), "kernel_layout");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "class_registry", R"(["A","B","C"])")),
            "class_registry");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "payload_bytes", "12")), "payload_bytes");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "checksum_crc32", "00000000")), "checksum");
  EXPECT_EQ(expect_format_error(replace_line(bytes, "max_seq_len", "0")), "config");
}

TEST(ModelFile, MissingFileIsNotAFormatError) {
  EXPECT_THROW(load_model(::testing::TempDir() + "does-not-exist.bin"), std::runtime_error);
}

}  // namespace
}  // namespace exerclass
