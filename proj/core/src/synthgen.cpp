#include "exerclass/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "exerclass/errors.hpp"
#include "exerclass/rng.hpp"

namespace exerclass {
namespace {

struct V3 {
  double x = 0, y = 0, z = 0;
};

V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
V3 operator*(double s, V3 a) { return {s * a.x, s * a.y, s * a.z}; }

// Rotation about the lateral axis; positive angles tip "up" toward +z.
V3 rot_x(V3 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {v.x, v.y * c - v.z * s, v.y * s + v.z * c};
}
V3 rot_y(V3 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {v.x * c + v.z * s, v.y, -v.x * s + v.z * c};
}
V3 rot_z(V3 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {v.x * c - v.y * s, v.x * s + v.y * c, v.z};
}

constexpr V3 kDown{0, -1, 0};

// Segment lengths of the canonical figure (hip-width normalized units).
constexpr double kTorso = 0.50;
constexpr double kShoulderHalf = 0.18;
constexpr double kHipHalf = 0.10;
constexpr double kThigh = 0.42;
constexpr double kShank = 0.40;
constexpr double kUpperArm = 0.28;
constexpr double kForearm = 0.25;

// Limb direction: raise forward by `flex`, then outward by `abd`.
// side = +1 for the left limb (+x), -1 for the right.
V3 limb_dir(double flex, double abd, double side) {
  return rot_z(rot_x(kDown, -flex), side * abd);
}

// Per-point visibility baseline: face and far-side hands are less reliable.
double base_visibility(std::size_t point) {
  if (point <= 10) return 0.90;
  if (point >= 17 && point <= 22) return 0.75;
  if (point >= 29) return 0.80;
  return 0.97;
}

// Stepping lunge with a torso twist and extended arms. stagger in [-1, 1]
// (positive: left leg forward), twist in [-1, 1].
BodyPose stagger_twist_pose(double stagger, double twist) {
  BodyPose pose;
  const double a = std::abs(stagger);
  const std::size_t front = stagger >= 0.0 ? 0 : 1;
  const std::size_t back = 1 - front;
  pose.hip_flex[front] = 1.3 * a;
  pose.knee_flex[front] = 1.4 * a;
  pose.hip_flex[back] = -0.5 * a;
  pose.knee_flex[back] = 1.5 * a;
  pose.torso_yaw = 0.9 * twist;
  pose.torso_pitch = 0.1;
  pose.shoulder_abd = {1.2, 1.2};
  pose.shoulder_flex = {0.5 + 0.4 * twist, 0.5 - 0.4 * twist};
  pose.elbow_flex = {0.2, 0.2};
  return pose;
}

}  // namespace

void SynthSpec::validate() const {
  if (counts.size() != 4) throw ConfigError("counts must list one entry per exercise (4)");
  for (int c : counts) {
    if (c < 0) throw ConfigError("per-class counts must be >= 0");
  }
  if (t_min < 8) throw ConfigError("t_min must be >= 8 so a serving window can be filled");
  if (t_max < t_min) throw ConfigError("t_max must be >= t_min");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(visibility_dropout_prob >= 0.0 && visibility_dropout_prob <= 1.0)) {
    throw ConfigError("visibility_dropout_prob must be in [0, 1]");
  }
  if (!(freq_min > 0.0 && freq_max >= freq_min)) throw ConfigError("need 0 < freq_min <= freq_max");
  if (!(end_phase_spread >= 0.0 && end_phase_spread <= std::numbers::pi)) {
    throw ConfigError("end_phase_spread must be in [0, pi]");
  }
}

LandmarkFrame skeleton_frame(const BodyPose& pose) {
  std::array<V3, kNumLandmarks> p{};

  // Upper body, in a frame rotated by torso pitch and yaw about the hip center.
  auto upper = [&pose](V3 v) { return rot_y(rot_x(v, pose.torso_pitch), pose.torso_yaw); };
  const V3 neck{0, kTorso, 0};
  p[0] = upper(neck + V3{0, 0.18, 0.08});
  p[1] = upper(neck + V3{0.025, 0.21, 0.07});
  p[2] = upper(neck + V3{0.040, 0.21, 0.065});
  p[3] = upper(neck + V3{0.055, 0.21, 0.055});
  p[4] = upper(neck + V3{-0.025, 0.21, 0.07});
  p[5] = upper(neck + V3{-0.040, 0.21, 0.065});
  p[6] = upper(neck + V3{-0.055, 0.21, 0.055});
  p[7] = upper(neck + V3{0.080, 0.19, 0.0});
  p[8] = upper(neck + V3{-0.080, 0.19, 0.0});
  p[9] = upper(neck + V3{0.025, 0.14, 0.07});
  p[10] = upper(neck + V3{-0.025, 0.14, 0.07});

  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? 1.0 : -1.0;  // left = +x
    const auto i = static_cast<std::size_t>(s);
    const V3 shoulder{side * kShoulderHalf, kTorso, 0};
    const V3 upper_dir = limb_dir(pose.shoulder_flex[i], pose.shoulder_abd[i], side);
    const V3 fore_dir =
        limb_dir(pose.shoulder_flex[i] + pose.elbow_flex[i], pose.shoulder_abd[i], side);
    const V3 elbow = shoulder + kUpperArm * upper_dir;
    const V3 wrist = elbow + kForearm * fore_dir;
    p[11 + i] = upper(shoulder);
    p[13 + i] = upper(elbow);
    p[15 + i] = upper(wrist);
    p[17 + i] = upper(wrist + 0.07 * fore_dir + V3{side * 0.02, 0, -0.01});  // pinky
    p[19 + i] = upper(wrist + 0.08 * fore_dir + V3{0, 0, 0.015});             // index
    p[21 + i] = upper(wrist + 0.05 * fore_dir + V3{-side * 0.015, 0, 0.03});  // thumb

    const V3 hip{side * kHipHalf, 0, 0};
    const V3 thigh_dir = limb_dir(pose.hip_flex[i], 0.0, side);
    const V3 shank_dir = limb_dir(pose.hip_flex[i] - pose.knee_flex[i], 0.0, side);
    const V3 knee = hip + kThigh * thigh_dir;
    const V3 ankle = knee + kShank * shank_dir;
    p[23 + i] = hip;
    p[25 + i] = knee;
    p[27 + i] = ankle;
    p[29 + i] = ankle + V3{0, -0.04, -0.05};  // heel
    p[31 + i] = ankle + V3{0, -0.05, 0.14};   // foot index
  }

  LandmarkFrame frame;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    const V3 w = rot_x(p[k], pose.body_pitch);
    frame.points[k] = {static_cast<float>(w.x), static_cast<float>(w.y), static_cast<float>(w.z), 1.0f};
  }
  return frame;
}

BodyPose exercise_pose(Exercise exercise, double phase) {
  const double depth = 0.5 * (1.0 - std::cos(phase));  // 0 at rest, 1 at the bottom
  BodyPose pose;
  switch (exercise) {
    case Exercise::BodyWeightSquats:
      pose.hip_flex = {1.35 * depth, 1.35 * depth};
      pose.knee_flex = {2.3 * depth, 2.3 * depth};
      pose.torso_pitch = 0.55 * depth;
      pose.shoulder_flex = {1.4 * depth, 1.4 * depth};
      pose.elbow_flex = {0.1, 0.1};
      break;
    case Exercise::Lunges:
      // Lead leg alternates with the sign of the stagger; the twist trails it.
      return stagger_twist_pose(std::sin(phase), -std::cos(phase));
    case Exercise::PushUps:
      pose.body_pitch = 1.45;
      pose.shoulder_flex = {std::numbers::pi / 2, std::numbers::pi / 2};
      pose.shoulder_abd = {0.25, 0.25};
      pose.elbow_flex = {1.5 * depth, 1.5 * depth};
      pose.torso_pitch = -0.1 * depth;
      break;
    case Exercise::ThrowingDiscus:
      // Same poses as the lunge loop, visited in the opposite order.
      return stagger_twist_pose(std::sin(phase), std::cos(phase));
  }
  return pose;
}

LandmarkDataset generate(const SynthSpec& spec) {
  spec.validate();
  LandmarkDataset dataset;
  dataset.fps = spec.fps;
  const ClassRegistry& registry = dataset.registry;

  std::uint64_t global_index = 0;
  std::array<float, kFrameFeatures> raw{};
  for (std::size_t c = 0; c < spec.counts.size(); ++c) {
    for (int n = 0; n < spec.counts[c]; ++n, ++global_index) {
      Rng rng(derive_seed(spec.seed, global_index));
      const auto length = spec.t_min + static_cast<int>(
                                           rng.index(static_cast<std::uint64_t>(spec.t_max - spec.t_min + 1)));
      const double freq = rng.uniform(spec.freq_min, spec.freq_max);
      const double phase_end = rng.uniform(-spec.end_phase_spread, spec.end_phase_spread);
      const double phase0 = phase_end - 2.0 * std::numbers::pi * freq * (length - 1) / length;

      Clip clip;
      char id[64];
      std::snprintf(id, sizeof(id), "%s-%04d", registry.name(c).c_str(), n);
      clip.sequence_id = id;
      clip.label = static_cast<int>(c);
      clip.frames.reserve(static_cast<std::size_t>(length));

      for (int t = 0; t < length; ++t) {
        const double phase = phase0 + 2.0 * std::numbers::pi * freq * t / length;
        const auto ideal = skeleton_frame(exercise_pose(static_cast<Exercise>(c), phase));
        const bool dropped = rng.bernoulli(spec.visibility_dropout_prob);
        for (std::size_t k = 0; k < kNumLandmarks; ++k) {
          const auto& pt = ideal.points[k];
          raw[4 * k + 0] = static_cast<float>(pt.x + spec.noise_sigma * rng.normal());
          raw[4 * k + 1] = static_cast<float>(pt.y + spec.noise_sigma * rng.normal());
          raw[4 * k + 2] = static_cast<float>(pt.z + spec.noise_sigma * rng.normal());
          raw[4 * k + 3] = static_cast<float>(
              std::clamp(base_visibility(k) + 2.0 * spec.noise_sigma * rng.normal(), 0.0, 1.0));
        }
        if (dropped) raw.fill(std::numeric_limits<float>::quiet_NaN());
        clip.frames.push_back(sanitize_frame(std::span<const float>(raw)));
      }
      dataset.clips.push_back(std::move(clip));
    }
  }
  return dataset;
}

}  // namespace exerclass
