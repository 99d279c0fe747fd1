#include <cmath>
#include <map>

#include "doctest.h"
#include "test_support.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/memory.hpp"
#include "vidcl/synthetic.hpp"

using namespace vidcl;
using namespace vidcl::data;

TEST_CASE("synthetic dataset has the requested shape") {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.videos_per_class = 10;
  cfg.frames_per_video = 16;
  cfg.height = 32;
  cfg.width = 32;
  cfg.seed = 7;
  const auto m = generate_synthetic_dataset(cfg);
  CHECK(m.records.size() == 20);
  for (const auto& r : m.records) CHECK(r.total_frames == 16);
  // 70/15/15 per class: 7 train, 1 val, 2 test
  std::map<Partition, int> counts;
  for (const auto& r : m.records) counts[r.partition]++;
  CHECK(counts[Partition::train] == 14);
  CHECK(counts[Partition::val] == 2);
  CHECK(counts[Partition::test] == 4);
}

TEST_CASE("same seed renders bit-identical frames") {
  SyntheticConfig cfg;
  cfg.num_classes = 3;
  cfg.videos_per_class = 2;
  cfg.frames_per_video = 8;
  cfg.seed = 123;
  const auto m1 = generate_synthetic_dataset(cfg);
  const auto m2 = generate_synthetic_dataset(cfg);
  REQUIRE(m1.records.size() == m2.records.size());
  FrameProvider p1, p2;
  for (std::size_t i = 0; i < m1.records.size(); ++i)
    CHECK(p1.load(m1.records[i]) == p2.load(m2.records[i]));
}

TEST_CASE("frame sizes below 8x8 are rejected") {
  SyntheticConfig cfg;
  cfg.height = 4;
  cfg.width = 4;
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), ConfigError);
}

TEST_CASE("trimmed children of synthetic sources read the parent's frames") {
  SyntheticConfig cfg;
  cfg.num_classes = 1;
  cfg.videos_per_class = 1;
  cfg.frames_per_video = 12;
  cfg.seed = 5;
  const auto m = generate_synthetic_dataset(cfg);
  const auto& parent = m.records[0];

  DatasetManifest untrimmed;
  untrimmed.name = "wrap";
  untrimmed.class_names = m.class_names;
  untrimmed.trim_mode = TrimMode::untrimmed;
  VideoRecord r = parent;
  r.class_id = kUnassignedClass;
  r.segments = {{4, 12, 0}};
  untrimmed.records = {r};

  const auto trimmed = trim_manifest(untrimmed);
  REQUIRE(trimmed.records.size() == 1);
  CHECK(trimmed.records[0].total_frames == 8);

  FrameProvider provider;
  const auto parent_frames = provider.load(parent);
  const auto child_frames = provider.load(trimmed.records[0]);
  REQUIRE(child_frames.frames == 8);
  for (int f = 0; f < 8; ++f)
    for (int y = 0; y < parent_frames.height; ++y)
      for (int x = 0; x < parent_frames.width; ++x)
        CHECK(child_frames.at(f, y, x) == parent_frames.at(f + 4, y, x));
}

TEST_CASE("directory-backed sources round-trip through PGM frames") {
  test_support::TempDir dir("pgmdir");
  SyntheticConfig cfg;
  cfg.num_classes = 1;
  cfg.videos_per_class = 1;
  cfg.frames_per_video = 3;
  cfg.seed = 9;
  const auto m = generate_synthetic_dataset(cfg);
  FrameProvider provider;
  const auto stack = provider.load(m.records[0]);
  for (int f = 0; f < stack.frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%06d.pgm", f);
    write_pgm(dir.path() + name, stack.data.data() + f * stack.frame_bytes(),
              stack.height, stack.width);
  }
  VideoRecord r = m.records[0];
  r.frame_source = "dir:" + dir.path();
  FrameProvider fresh;
  CHECK(fresh.load(r) == stack);
}

// ---------------------------------------------------------------------------
// Generator oracle: a nearest-mean classifier on static single-frame
// descriptors must stay near chance while the same classifier on temporal
// descriptors of 8 sampled frames clears it comfortably.

namespace {

std::vector<double> static_descriptors(const FrameStack& s, int f) {
  const int n = s.height * s.width;
  double sum = 0.0, sum2 = 0.0, mx = 0.0;
  int over_half = 0, over_three_quarters = 0;
  for (int i = 0; i < n; ++i) {
    const double v = s.data[f * s.frame_bytes() + i] / 255.0;
    sum += v;
    sum2 += v * v;
    mx = std::max(mx, v);
    over_half += v > 0.5 ? 1 : 0;
    over_three_quarters += v > 0.75 ? 1 : 0;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {mean, std::sqrt(var), mx, static_cast<double>(over_half) / n,
          static_cast<double>(over_three_quarters) / n};
}

std::vector<double> temporal_descriptors(const FrameStack& s) {
  const auto idx = mem::uniform_subsample(s.frames, 8);
  std::vector<std::vector<double>> per_frame;
  for (long long f : idx) per_frame.push_back(static_descriptors(s, static_cast<int>(f)));

  std::vector<double> feat;
  const std::size_t d = per_frame[0].size();
  for (std::size_t k = 0; k < d; ++k) {  // temporal mean and spread per descriptor
    double m = 0.0;
    for (const auto& p : per_frame) m += p[k];
    m /= per_frame.size();
    double v = 0.0;
    for (const auto& p : per_frame) v += (p[k] - m) * (p[k] - m);
    feat.push_back(m);
    feat.push_back(std::sqrt(v / per_frame.size()));
  }
  // mean absolute inter-frame difference picks up motion speed
  double motion = 0.0;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    double diff = 0.0;
    for (std::size_t p = 0; p < s.frame_bytes(); ++p)
      diff += std::fabs(static_cast<double>(s.data[idx[i] * s.frame_bytes() + p]) -
                        static_cast<double>(s.data[idx[i - 1] * s.frame_bytes() + p]));
    motion += diff / static_cast<double>(s.frame_bytes());
  }
  feat.push_back(motion / static_cast<double>(idx.size() - 1));
  return feat;
}

double nearest_mean_accuracy(const DatasetManifest& m, bool temporal) {
  FrameProvider provider;
  auto featurize = [&](const VideoRecord& r) {
    const auto stack = provider.load(r);
    return temporal ? temporal_descriptors(stack)
                    : static_descriptors(stack, stack.frames / 2);
  };

  // z-scale using train statistics so no descriptor dominates
  std::vector<std::vector<double>> train_feats;
  std::vector<int> train_labels;
  for (const auto& r : m.records) {
    if (r.partition != Partition::train) continue;
    train_feats.push_back(featurize(r));
    train_labels.push_back(r.class_id);
  }
  const std::size_t d = train_feats[0].size();
  std::vector<double> mu(d, 0.0), sigma(d, 0.0);
  for (const auto& f : train_feats)
    for (std::size_t k = 0; k < d; ++k) mu[k] += f[k];
  for (auto& v : mu) v /= train_feats.size();
  for (const auto& f : train_feats)
    for (std::size_t k = 0; k < d; ++k) sigma[k] += (f[k] - mu[k]) * (f[k] - mu[k]);
  for (auto& v : sigma) v = std::max(1e-9, std::sqrt(v / train_feats.size()));
  auto zscale = [&](std::vector<double> f) {
    for (std::size_t k = 0; k < d; ++k) f[k] = (f[k] - mu[k]) / sigma[k];
    return f;
  };

  std::map<int, std::pair<std::vector<double>, int>> means;
  for (std::size_t i = 0; i < train_feats.size(); ++i) {
    auto& [acc, count] = means[train_labels[i]];
    acc.resize(d, 0.0);
    const auto z = zscale(train_feats[i]);
    for (std::size_t k = 0; k < d; ++k) acc[k] += z[k];
    ++count;
  }

  int correct = 0, total = 0;
  for (const auto& r : m.records) {
    if (r.partition == Partition::train) continue;
    const auto z = zscale(featurize(r));
    int best = -1;
    double best_dist = 0.0;
    for (const auto& [cls, mc] : means) {
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double delta = z[k] - mc.first[k] / mc.second;
        dist += delta * delta;
      }
      if (best < 0 || dist < best_dist) {
        best = cls;
        best_dist = dist;
      }
    }
    correct += best == r.class_id ? 1 : 0;
    ++total;
  }
  return static_cast<double>(correct) / total;
}

}  // namespace

TEST_CASE("single frames are near chance; temporal aggregation is not") {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.videos_per_class = 40;
  cfg.frames_per_video = 16;
  cfg.seed = 21;
  const auto m = generate_synthetic_dataset(cfg);

  const double chance = 1.0 / cfg.num_classes;
  const double single = nearest_mean_accuracy(m, false);
  const double temporal = nearest_mean_accuracy(m, true);
  INFO("single-frame accuracy ", single, ", temporal accuracy ", temporal);
  CHECK(single <= 1.5 * chance);
  CHECK(temporal > 2.0 * chance);
}
