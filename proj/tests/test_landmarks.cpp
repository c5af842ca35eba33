#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "exerclass/errors.hpp"
#include "exerclass/landmarks.hpp"
#include "exerclass/synthgen.hpp"
#include "support/oracles.hpp"

namespace exerclass {
namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

std::vector<float> finite_raw(float base = 0.1f) {
  std::vector<float> raw(kFrameFeatures);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = base + 0.001f * static_cast<float>(i % 50);
  for (std::size_t p = 0; p < kNumLandmarks; ++p) raw[4 * p + 3] = 0.5f;
  return raw;
}

// Frame whose x coordinates all equal `tag`, used to track frames by index.
LandmarkFrame tagged(float tag) {
  LandmarkFrame f;
  for (auto& p : f.points) p = {tag, 0.0f, 0.0f, 1.0f};
  return f;
}

TEST(Flatten, RepeatsPointLayout) {
  LandmarkFrame f;
  for (auto& p : f.points) p = {0, 0, 0, 1};
  const auto v = flatten_frame(f);
  ASSERT_EQ(v.size(), 132u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], i % 4 == 3 ? 1.0f : 0.0f);
}

TEST(Flatten, OrderIsPointMajor) {
  LandmarkFrame f;
  for (std::size_t p = 0; p < kNumLandmarks; ++p) {
    const auto b = static_cast<float>(p);
    f.points[p] = {b, b + 0.25f, b + 0.5f, 0.75f};
  }
  const auto v = flatten_frame(f);
  EXPECT_EQ(v[4 * 12 + 0], 12.0f);
  EXPECT_EQ(v[4 * 12 + 2], 12.5f);
  EXPECT_EQ(v[4 * 32 + 3], 0.75f);
}

TEST(Flatten, PaddingUsesPadValue) {
  for (float pad : {0.0f, -1.0f}) {
    const auto v = flatten_frame(LandmarkFrame::padding(), pad);
    for (float x : v) EXPECT_EQ(x, pad);
  }
}

TEST(Sanitize, FiniteFrameIsReal) {
  const auto raw = finite_raw();
  const auto f = sanitize_frame(std::span<const float>(raw));
  EXPECT_FALSE(f.is_padding);
  EXPECT_EQ(f.points[3].x, raw[12]);
}

TEST(Sanitize, NaNInOnePointPadsWholeFrame) {
  auto raw = finite_raw();
  raw[4 * 12 + 2] = kNaN;
  EXPECT_TRUE(sanitize_frame(std::span<const float>(raw)).is_padding);
}

TEST(Sanitize, InfinityPadsWholeFrame) {
  auto raw = finite_raw();
  raw[77] = std::numeric_limits<float>::infinity();
  EXPECT_TRUE(sanitize_frame(std::span<const float>(raw)).is_padding);
  raw[77] = -std::numeric_limits<float>::infinity();
  EXPECT_TRUE(sanitize_frame(std::span<const float>(raw)).is_padding);
}

TEST(Sanitize, WrongSizeIsMalformed) {
  std::vector<float> raw(128, 0.0f);
  EXPECT_THROW(sanitize_frame(std::span<const float>(raw)), MalformedInput);
  raw.resize(136);
  EXPECT_THROW(sanitize_frame(std::span<const float>(raw)), MalformedInput);
}

TEST(Sanitize, VisibilityClamped) {
  auto raw = finite_raw();
  raw[3] = 1.5f;
  raw[7] = -0.25f;
  const auto f = sanitize_frame(std::span<const float>(raw));
  EXPECT_EQ(f.points[0].visibility, 1.0f);
  EXPECT_EQ(f.points[1].visibility, 0.0f);
}

TEST(Sanitize, IdempotentOnRandomFrames) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<float> wide(-3.0f, 3.0f);
  std::bernoulli_distribution poison(0.01);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> raw(kFrameFeatures);
    for (auto& v : raw) v = poison(gen) ? kNaN : wide(gen);
    const auto once = sanitize_frame(std::span<const float>(raw));
    const auto twice = sanitize_frame(once);
    EXPECT_EQ(once, twice);
    EXPECT_EQ(once.is_padding, twice.is_padding);
    if (!once.is_padding) {
      for (const auto& p : once.points) {
        EXPECT_GE(p.visibility, 0.0f);
        EXPECT_LE(p.visibility, 1.0f);
      }
    }
  }
}

TEST(PadOrTruncate, ShortClipGetsTailPadding) {
  std::vector<LandmarkFrame> clip;
  for (int i = 1; i <= 5; ++i) clip.push_back(tagged(static_cast<float>(i)));
  const auto s = pad_or_truncate(clip, 8, 2);
  ASSERT_EQ(s.frames.size(), 8u);
  EXPECT_EQ(s.real_len, 5);
  EXPECT_EQ(s.label, 2);
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(s.frames[static_cast<std::size_t>(i)].is_padding);
  for (int i = 5; i < 8; ++i) EXPECT_TRUE(s.frames[static_cast<std::size_t>(i)].is_padding);
}

TEST(PadOrTruncate, ExactLengthUnchanged) {
  std::vector<LandmarkFrame> clip;
  for (int i = 1; i <= 8; ++i) clip.push_back(tagged(static_cast<float>(i)));
  const auto s = pad_or_truncate(clip, 8);
  EXPECT_EQ(s.real_len, 8);
  EXPECT_EQ(s.frames, clip);
}

TEST(PadOrTruncate, LongClipKeepsMostRecentFrames) {
  std::vector<LandmarkFrame> clip;
  for (int i = 1; i <= 12; ++i) clip.push_back(tagged(static_cast<float>(i)));
  const auto s = pad_or_truncate(clip, 8);
  ASSERT_EQ(s.frames.size(), 8u);
  EXPECT_EQ(s.real_len, 8);
  // Frames 5..12 (1-based) survive, in order.
  for (int i = 0; i < 8; ++i) EXPECT_EQ(s.frames[static_cast<std::size_t>(i)].points[0].x, 5.0f + i);
}

TEST(PadOrTruncate, InteriorDropoutStaysInPlace) {
  std::vector<LandmarkFrame> clip{tagged(1), LandmarkFrame::padding(), tagged(3)};
  const auto s = pad_or_truncate(clip, 5);
  EXPECT_EQ(s.real_len, 2);
  EXPECT_TRUE(s.frames[1].is_padding);
  EXPECT_FALSE(s.frames[2].is_padding);
  EXPECT_TRUE(s.frames[3].is_padding);
}

TEST(PadOrTruncate, Errors) {
  std::vector<LandmarkFrame> empty;
  EXPECT_THROW(pad_or_truncate(empty, 8), MalformedInput);
  std::vector<LandmarkFrame> one{tagged(1)};
  EXPECT_THROW(pad_or_truncate(one, 0), ConfigError);
}

TEST(PadOrTruncate, LengthAndRealCountProperty) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> len(1, 60), cap(1, 40);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(gen), m = cap(gen);
    std::vector<LandmarkFrame> clip;
    for (int i = 0; i < n; ++i) clip.push_back(tagged(static_cast<float>(i)));
    const auto s = pad_or_truncate(clip, m);
    ASSERT_EQ(static_cast<int>(s.frames.size()), m);
    EXPECT_EQ(s.real_len, std::min(n, m));
    // Real frames form a prefix; padding only in the tail.
    for (int i = 0; i < m; ++i) EXPECT_EQ(s.frames[static_cast<std::size_t>(i)].is_padding, i >= s.real_len);
    // The last real frame is always the clip's last frame.
    EXPECT_EQ(s.frames[static_cast<std::size_t>(s.real_len - 1)].points[0].x, static_cast<float>(n - 1));
  }
}

TEST(Registry, DefaultOrder) {
  const ClassRegistry r;
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r.name(0), "BodyWeightSquats");
  EXPECT_EQ(r.name(1), "Lunges");
  EXPECT_EQ(r.name(2), "PushUps");
  EXPECT_EQ(r.name(3), "ThrowingDiscus");
  EXPECT_EQ(r.index_of("PushUps"), 2);
  EXPECT_FALSE(r.index_of("Burpees").has_value());
}

TEST(Registry, RejectsBadNames) {
  EXPECT_THROW(ClassRegistry({"A"}), ConfigError);
  EXPECT_THROW(ClassRegistry({"A", "A"}), ConfigError);
  EXPECT_THROW(ClassRegistry({"A", ""}), ConfigError);
}

std::string point_list(int n, const std::string& value = "[0.1,0.2,0.3,0.9]") {
  std::string s = "[";
  for (int i = 0; i < n; ++i) s += (i ? "," : "") + value;
  return s + "]";
}

const std::string kHeader =
    R"({"format":"exerclass-landmarks","format_version":1,"class_registry":["BodyWeightSquats","Lunges","PushUps","ThrowingDiscus"]})";

TEST(LandmarkFile, SingleLabeledClip) {
  const std::string text = kHeader + "\n" + R"({"sequence_id":"clip-a","label":"PushUps","frames":[)" +
                           point_list(33) + "," + point_list(33) + "]}\n";
  const auto d = parse_landmark_text(text);
  ASSERT_EQ(d.clips.size(), 1u);
  EXPECT_EQ(d.clips[0].sequence_id, "clip-a");
  EXPECT_EQ(d.clips[0].label, 2);
  const auto s = pad_or_truncate(d.clips[0].frames, 32, d.clips[0].label);
  EXPECT_EQ(s.real_len, 2);
}

TEST(LandmarkFile, ThirtyTwoPointsIsParseError) {
  const std::string text =
      kHeader + "\n" + R"({"sequence_id":"bad","frames":[)" + point_list(32) + "]}\n";
  try {
    parse_landmark_text(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("33"), std::string::npos);
  }
}

TEST(LandmarkFile, SchemaErrorsNameTheLine) {
  const std::string good = R"({"sequence_id":"ok","frames":[)" + point_list(33) + "]}";
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"", 1},
      {R"({"format":"something-else","format_version":1,"class_registry":["A","B"]})", 1},
      {R"({"format":"exerclass-landmarks","format_version":9,"class_registry":["A","B"]})", 1},
      {kHeader + "\n" + good + "\n" + R"({"sequence_id":"x","label":"Burpees","frames":[)" +
           point_list(33) + "]}",
       3},
      {kHeader + "\n" + R"({"sequence_id":"x","frames":[]})", 2},
      {kHeader + "\n" + R"({"sequence_id":"x","frames":[)" + point_list(33, "[0,0,0]") + "]}", 2},
      {kHeader + "\n" + R"({"sequence_id":"x","frames":[)" + point_list(33, R"([0,0,"a",1])") + "]}", 2},
      {kHeader + "\n{not json", 2},
  };
  for (const auto& [text, line] : cases) {
    try {
      parse_landmark_text(text);
      ADD_FAILURE() << "accepted: " << text.substr(0, 80);
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  }
}

TEST(LandmarkFile, NaNLandmarksBecomePadding) {
  const std::string text = kHeader + "\n" + R"({"sequence_id":"x","frames":[)" + point_list(33) + "," +
                           point_list(33, R"(["NaN","NaN","NaN","NaN"])") + "]}\n";
  const auto d = parse_landmark_text(text);
  EXPECT_FALSE(d.clips[0].frames[0].is_padding);
  EXPECT_TRUE(d.clips[0].frames[1].is_padding);
  EXPECT_FALSE(d.clips[0].label.has_value());
}

TEST(LandmarkFile, GeneratedDatasetRoundTripsBitExact) {
  SynthSpec spec;
  spec.counts = {6, 6, 6, 6};
  spec.visibility_dropout_prob = 0.1;
  const auto d = generate(spec);
  const auto text = format_landmark_text(d);
  const auto back = parse_landmark_text(text);
  EXPECT_EQ(back, d);
  EXPECT_EQ(format_landmark_text(back), text);
  // Bit-level check on every float, beyond operator==.
  for (std::size_t c = 0; c < d.clips.size(); ++c) {
    for (std::size_t f = 0; f < d.clips[c].frames.size(); ++f) {
      const auto a = flatten_frame(d.clips[c].frames[f]);
      const auto b = flatten_frame(back.clips[c].frames[f]);
      EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()), 0);
    }
  }
}

TEST(LandmarkFile, RandomFloatsRoundTrip) {
  std::mt19937_64 gen(99);
  LandmarkDataset d;
  d.fps = 29.97f;
  for (int c = 0; c < 5; ++c) {
    Clip clip;
    clip.sequence_id = "r" + std::to_string(c);
    if (c % 2 == 0) clip.label = c % 4;
    for (int f = 0; f < 7; ++f) clip.frames.push_back(testing::random_frame(gen));
    d.clips.push_back(clip);
  }
  EXPECT_EQ(parse_landmark_text(format_landmark_text(d)), d);
}

TEST(LandmarkFile, SaveAndLoad) {
  SynthSpec spec;
  spec.counts = {2, 2, 2, 2};
  const auto d = generate(spec);
  const std::string path = ::testing::TempDir() + "landmarks_roundtrip.ndjson";
  save_landmark_file(d, path);
  EXPECT_EQ(load_landmark_file(path), d);
}

}  // namespace
}  // namespace exerclass
