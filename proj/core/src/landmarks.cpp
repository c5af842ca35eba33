#include "exerclass/landmarks.hpp"

#include <algorithm>
#include <cmath>

#include "exerclass/errors.hpp"

namespace exerclass {

FrameFeatures flatten_frame(const LandmarkFrame& frame, float pad_value) {
  FrameFeatures out;
  if (frame.is_padding) {
    out.fill(pad_value);
    return out;
  }
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    const auto& p = frame.points[i];
    out[4 * i + 0] = p.x;
    out[4 * i + 1] = p.y;
    out[4 * i + 2] = p.z;
    out[4 * i + 3] = p.visibility;
  }
  return out;
}

LandmarkFrame sanitize_frame(std::span<const float> raw) {
  if (raw.size() != kFrameFeatures) {
    throw MalformedInput("expected " + std::to_string(kFrameFeatures) +
                         " landmark values (33 x 4), got " + std::to_string(raw.size()));
  }
  if (!std::all_of(raw.begin(), raw.end(), [](float v) { return std::isfinite(v); })) {
    return LandmarkFrame::padding();
  }
  LandmarkFrame frame;
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    frame.points[i] = {raw[4 * i], raw[4 * i + 1], raw[4 * i + 2],
                       std::clamp(raw[4 * i + 3], 0.0f, 1.0f)};
  }
  return frame;
}

LandmarkFrame sanitize_frame(const LandmarkFrame& frame) {
  if (frame.is_padding) return LandmarkFrame::padding();
  const auto flat = flatten_frame(frame);
  return sanitize_frame(std::span<const float>(flat));
}

ClassRegistry::ClassRegistry()
    : names_{"BodyWeightSquats", "Lunges", "PushUps", "ThrowingDiscus"} {}

ClassRegistry::ClassRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw ConfigError("class registry needs at least two classes");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("class registry contains an empty name");
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw ConfigError("duplicate class name '" + names_[i] + "'");
    }
  }
}

std::optional<int> ClassRegistry::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

PoseSequence pad_or_truncate(std::span<const LandmarkFrame> frames, int max_seq_len,
                             std::optional<int> label) {
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
  if (frames.empty()) throw MalformedInput("cannot pad an empty clip");

  const auto keep = std::min(frames.size(), static_cast<std::size_t>(max_seq_len));
  PoseSequence seq;
  seq.label = label;
  seq.frames.reserve(static_cast<std::size_t>(max_seq_len));
  seq.frames.assign(frames.end() - static_cast<std::ptrdiff_t>(keep), frames.end());
  seq.frames.resize(static_cast<std::size_t>(max_seq_len), LandmarkFrame::padding());
  seq.real_len = static_cast<int>(std::count_if(
      seq.frames.begin(), seq.frames.end(), [](const LandmarkFrame& f) { return !f.is_padding; }));
  return seq;
}

}  // namespace exerclass
