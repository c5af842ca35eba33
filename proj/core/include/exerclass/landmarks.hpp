#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace exerclass {

inline constexpr std::size_t kNumLandmarks = 33;
inline constexpr std::size_t kFeaturesPerLandmark = 4;  // x, y, z, visibility
inline constexpr std::size_t kFrameFeatures = kNumLandmarks * kFeaturesPerLandmark;

/// Default value written into every feature of a padding frame.
inline constexpr float kDefaultPadValue = 0.0f;

/// One tracked body point: hip-relative normalized coordinates plus the
/// extractor's visibility score in [0, 1].
struct LandmarkPoint {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float visibility = 0.0f;

  friend bool operator==(const LandmarkPoint&, const LandmarkPoint&) = default;
};

/// A single time step. Padding frames are flagged explicitly; the mask is
/// never inferred from the feature values.
struct LandmarkFrame {
  std::array<LandmarkPoint, kNumLandmarks> points{};
  bool is_padding = false;

  static LandmarkFrame padding() {
    LandmarkFrame f;
    f.is_padding = true;
    return f;
  }

  /// Padding frames compare equal regardless of their (unused) points.
  friend bool operator==(const LandmarkFrame& a, const LandmarkFrame& b) {
    if (a.is_padding || b.is_padding) return a.is_padding == b.is_padding;
    return a.points == b.points;
  }
};

using FrameFeatures = std::array<float, kFrameFeatures>;

/// Flattens to [x0,y0,z0,v0, x1,y1,z1,v1, ...]; a padding frame yields
/// kFrameFeatures copies of pad_value.
FrameFeatures flatten_frame(const LandmarkFrame& frame, float pad_value = kDefaultPadValue);

/// Builds a frame from 33x4 raw extractor values. Any non-finite value turns
/// the whole frame into padding. Visibility is clamped into [0, 1].
/// Throws MalformedInput unless raw.size() == 132.
LandmarkFrame sanitize_frame(std::span<const float> raw);

/// Re-applies the sanitizing rules to an existing frame (idempotent).
LandmarkFrame sanitize_frame(const LandmarkFrame& frame);

/// Class registry: a fixed, persisted ordering of exercise names.
class ClassRegistry {
 public:
  ClassRegistry();  // the four default exercises
  explicit ClassRegistry(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::optional<int> index_of(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<std::string> names_;
};

/// Default registry order: BodyWeightSquats=0, Lunges=1, PushUps=2, ThrowingDiscus=3.
enum class Exercise : int { BodyWeightSquats = 0, Lunges = 1, PushUps = 2, ThrowingDiscus = 3 };

/// A clip padded or truncated to a fixed number of steps.
struct PoseSequence {
  std::vector<LandmarkFrame> frames;
  std::optional<int> label;
  int real_len = 0;  // frames with is_padding == false
};

/// Keeps the last max_seq_len frames of a longer clip; appends padding frames
/// to a shorter one. Padding frames already inside the clip (sanitized
/// extractor dropouts) stay where they are and are not counted in real_len.
/// Throws MalformedInput for an empty clip and ConfigError for max_seq_len < 1.
PoseSequence pad_or_truncate(std::span<const LandmarkFrame> frames, int max_seq_len,
                             std::optional<int> label = std::nullopt);

/// A labeled (or unlabeled) variable-length clip as stored on disk.
struct Clip {
  std::string sequence_id;
  std::optional<int> label;
  std::vector<LandmarkFrame> frames;

  friend bool operator==(const Clip&, const Clip&) = default;
};

struct LandmarkDataset {
  ClassRegistry registry;
  std::optional<float> fps;
  std::vector<Clip> clips;

  friend bool operator==(const LandmarkDataset&, const LandmarkDataset&) = default;
};

inline constexpr int kLandmarkFormatVersion = 1;

/// Newline-delimited JSON: one header record, then one record per clip.
/// Throws ParseError naming the line on any schema violation.
LandmarkDataset load_landmark_file(const std::string& path);
LandmarkDataset parse_landmark_text(std::string_view text);

/// Canonical serialization: shortest round-trip decimals for every float,
/// fixed key order, padding frames written as "NaN" landmarks.
void save_landmark_file(const LandmarkDataset& dataset, const std::string& path);
std::string format_landmark_text(const LandmarkDataset& dataset);

}  // namespace exerclass
