#pragma once

#include <cstdint>

#include "vidcl/frames.hpp"
#include "vidcl/manifest.hpp"

namespace vidcl::data {

// Desk-scale stand-in for the real video datasets. Every class is a motion
// pattern of one bright blob over per-frame noise: the blob drifts across a
// toroidal frame while its radius and brightness follow class-specific
// waveforms. Start position, heading and waveform phases are randomized per
// video, so a single frame is close to uninformative and classification has
// to aggregate over time.
struct SyntheticConfig {
  int num_classes = 4;
  int videos_per_class = 20;
  int frames_per_video = 16;
  int height = 16;
  int width = 16;
  std::uint64_t seed = 0;
  // Scales the waveform swings that carry the class signal. Raising it puts
  // more of the signal into temporal structure (and widens the overlap of
  // instantaneous appearances across classes).
  double temporal_strength = 1.0;

  bool operator==(const SyntheticConfig&) const = default;
};

// Trimmed manifest with synth: locators; records partition 70/15/15 per
// class (floor for train/val, remainder test). Frames are rendered lazily
// by FrameProvider.
DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg);

// Per-class motion/waveform parameters, derived from (pattern seed, class).
struct MotionPattern {
  double angle = 0.0;
  double speed = 1.0;
  double wobble_amp = 0.0;
  double wobble_period = 5.0;
  double r_mid = 2.0, r_amp = 0.5, r_period = 4.0, r_duty = 0.5;
  bool r_square = true;
  double a_mid = 0.55, a_amp = 0.2, a_period = 6.0, a_duty = 0.5;
  bool a_square = false;
};

MotionPattern class_pattern(std::uint64_t pattern_seed, int class_id,
                            int num_classes, double temporal_strength);

// Renders frames [offset, offset + frames) of one synthetic video.
FrameStack render_synthetic(const MotionPattern& pattern, std::uint64_t video_seed,
                            int frames, int height, int width, long long offset);

}  // namespace vidcl::data
