#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "exerclass/landmarks.hpp"

namespace exerclass {

/// Parameters of the synthetic landmark-clip generator.
struct SynthSpec {
  std::vector<int> counts{120, 120, 120, 120};  // per class, registry order
  int t_min = 16;                                // frames per clip, inclusive range
  int t_max = 32;
  double noise_sigma = 0.02;               // Gaussian jitter on every coordinate
  double visibility_dropout_prob = 0.02;   // per-frame chance of a lost detection
  double freq_min = 1.0;                   // cycles per clip
  double freq_max = 2.5;
  // Clips end within +-end_phase_spread of the start of a cycle; the start
  // phase follows from length and frequency. pi gives a uniform phase.
  double end_phase_spread = 1.0471975511965976;
  float fps = 30.0f;
  std::uint64_t seed = 7;

  /// Throws ConfigError on an invalid spec (t_min < 8, negative counts, ...).
  void validate() const;
};

/// Joint-angle description of one body configuration. Angles in radians.
struct BodyPose {
  double body_pitch = 0.0;   // whole-body rotation about the lateral axis (plank ~ pi/2)
  double torso_pitch = 0.0;  // forward lean of the upper body
  double torso_yaw = 0.0;    // rotation of the upper body about the spine
  std::array<double, 2> hip_flex{};       // [left, right], thigh forward of vertical
  std::array<double, 2> knee_flex{};      // knee bend
  std::array<double, 2> shoulder_flex{};  // arm raised forward
  std::array<double, 2> shoulder_abd{};   // arm raised sideways
  std::array<double, 2> elbow_flex{};
};

/// Hip-centered 33-point positions for a pose; visibility is set to 1.
LandmarkFrame skeleton_frame(const BodyPose& pose);

/// Pose of an exercise at a motion phase (radians). One cycle is 2*pi.
/// Lunges and discus throws pass through the same poses in opposite order.
BodyPose exercise_pose(Exercise exercise, double phase);

/// Generates counts[c] clips per class (default registry). Deterministic in spec.seed.
LandmarkDataset generate(const SynthSpec& spec);

}  // namespace exerclass
