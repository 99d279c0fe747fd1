#include "vidcl/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "vidcl/errors.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::data {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBackgroundMean = 0.24;
constexpr double kBackgroundStd = 0.055;

// fractional phase in [0, 1)
double fract(double x) { return x - std::floor(x); }

double wave(double phase01, bool square, double duty) {
  const double f = fract(phase01);
  if (square) return f < duty ? 1.0 : -1.0;
  return std::sin(2.0 * kPi * f);
}

double torus_delta(double a, double b, double extent) {
  double d = std::fabs(a - b);
  return std::min(d, extent - d);
}

}  // namespace

MotionPattern class_pattern(std::uint64_t pattern_seed, int class_id,
                            int num_classes, double temporal_strength) {
  Rng rng(mix_seed(pattern_seed, "class-pattern", static_cast<std::uint64_t>(class_id)));
  const int c = class_id;
  const double ts = temporal_strength;

  // Each class flips between two blob radii and two brightness levels with
  // class-specific periods. The (radius pair, brightness pair) combination
  // is unique per class while individual levels are shared across classes,
  // so one frame narrows the class down far less than the mix over time
  // does. temporal_strength widens the swings around the shared midpoints.
  static constexpr double kRadiusPairs[4][2] = {
      {1.3, 2.3}, {1.3, 3.3}, {2.3, 3.3}, {1.8, 2.8}};
  static constexpr double kBrightPairs[3][2] = {
      {0.30, 0.55}, {0.30, 0.80}, {0.55, 0.80}};
  // every class flips one waveform at period 4 (strided 4-frame storage of
  // a 16-frame video locks onto a single phase of it) and the other at
  // period 8 (the same striding always samples both of its levels)

  const auto& rp = kRadiusPairs[c % 4];
  const auto& ap = kBrightPairs[(c / 4) % 3];
  const bool radius_fast = c % 2 == 0;

  MotionPattern p;
  p.angle = kPi * (c + 0.5) / std::max(1, num_classes) + rng.next_double(-0.06, 0.06);
  p.speed = 0.8 + 0.7 * ((c / 2) % 3) + rng.next_double(-0.05, 0.05);
  p.wobble_amp = (c % 3 == 1) ? 1.4 : 0.0;
  p.wobble_period = 5.0 + (c % 3);

  p.r_mid = 0.5 * (rp[0] + rp[1]) + rng.next_double(-0.03, 0.03);
  p.r_amp = ts * 0.5 * (rp[1] - rp[0]);
  p.r_period = radius_fast ? 4.0 : 8.0;
  p.r_duty = 0.5;
  p.r_square = true;

  p.a_mid = 0.5 * (ap[0] + ap[1]) + rng.next_double(-0.01, 0.01);
  p.a_amp = ts * 0.5 * (ap[1] - ap[0]);
  p.a_period = radius_fast ? 8.0 : 4.0;
  p.a_duty = 0.5;
  p.a_square = true;
  return p;
}

FrameStack render_synthetic(const MotionPattern& p, std::uint64_t video_seed,
                            int frames, int height, int width, long long offset) {
  FrameStack stack;
  stack.frames = frames;
  stack.height = height;
  stack.width = width;
  stack.data.resize(static_cast<std::size_t>(frames) * height * width);

  Rng vid(mix_seed(video_seed, "video-draws"));
  const double x0 = vid.next_double(0.0, width);
  const double y0 = vid.next_double(0.0, height);
  const double heading = p.angle + vid.next_double(-0.35, 0.35) +
                         (vid.next_below(2) ? kPi : 0.0);
  const double speed = p.speed * vid.next_double(0.9, 1.1) * (width / 16.0);
  const double phase_r = vid.next_double();
  const double phase_a = vid.next_double();
  const double phase_w = vid.next_double();

  const double ux = std::cos(heading);
  const double uy = std::sin(heading);
  const double scale = width / 16.0;

  for (int f = 0; f < frames; ++f) {
    const double t = static_cast<double>(offset + f);
    const double travel = speed * t;
    const double wob = p.wobble_amp * scale *
                       std::sin(2.0 * kPi * (t / p.wobble_period + phase_w));
    const double cx = fract((x0 + ux * travel - uy * wob) / width) * width;
    const double cy = fract((y0 + uy * travel + ux * wob) / height) * height;
    const double radius =
        std::max(0.6, (p.r_mid + p.r_amp * wave(t / p.r_period + phase_r, p.r_square,
                                                p.r_duty)) *
                          scale);
    const double amp =
        std::max(0.05, p.a_mid + p.a_amp * wave(t / p.a_period + phase_a, p.a_square,
                                                p.a_duty));
    const double inv2r2 = 1.0 / (2.0 * radius * radius);

    Rng noise(mix_seed(video_seed, "frame-noise", static_cast<std::uint64_t>(offset + f)));
    for (int y = 0; y < height; ++y) {
      const double dy = torus_delta(y + 0.5, cy, height);
      for (int x = 0; x < width; ++x) {
        const double dx = torus_delta(x + 0.5, cx, width);
        double v = kBackgroundMean + kBackgroundStd * noise.next_gaussian();
        v += amp * std::exp(-(dx * dx + dy * dy) * inv2r2);
        v = std::min(1.0, std::max(0.0, v));
        stack.at(f, y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return stack;
}

DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.videos_per_class < 1 || cfg.frames_per_video < 1)
    throw ConfigError("synthetic dataset counts must be >= 1");
  if (cfg.height < 8 || cfg.width < 8)
    throw ConfigError("synthetic frame size must be at least 8x8");

  DatasetManifest m;
  m.name = "synthetic";
  m.trim_mode = TrimMode::trimmed;
  for (int c = 0; c < cfg.num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pattern_%02d", c);
    m.class_names.emplace_back(buf);
  }

  const int n = cfg.videos_per_class;
  const int n_train = static_cast<int>(n * 0.70);
  const int n_val = static_cast<int>(n * 0.15);
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int i = 0; i < n; ++i) {
      VideoRecord r;
      char id[48];
      std::snprintf(id, sizeof(id), "synth_c%02d_v%03d", c, i);
      r.video_id = id;
      r.total_frames = cfg.frames_per_video;
      r.segments = {{0, cfg.frames_per_video, c}};
      r.class_id = c;
      r.partition = i < n_train            ? Partition::train
                    : i < n_train + n_val ? Partition::val
                                          : Partition::test;
      const std::uint64_t vs =
          mix_seed(cfg.seed, "video", static_cast<std::uint64_t>(c),
                   static_cast<std::uint64_t>(i));
      char src[160];
      std::snprintf(src, sizeof(src), "synth:ps=%llu;v=%llu;c=%d;nc=%d;h=%d;w=%d;ts=%.17g",
                    static_cast<unsigned long long>(cfg.seed),
                    static_cast<unsigned long long>(vs), c, cfg.num_classes, cfg.height,
                    cfg.width, cfg.temporal_strength);
      r.frame_source = src;
      m.records.push_back(std::move(r));
    }
  }
  m.validate();
  return m;
}

}  // namespace vidcl::data
