#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/memory.hpp"
#include "vidcl/rng.hpp"

using namespace vidcl;
using namespace vidcl::mem;

TEST_CASE("frame capacity reproduces the benchmark table cells") {
  // down-sampled rows are exact products
  CHECK(frame_capacity(8000, 8) == 64000);
  CHECK(frame_capacity(8000, 4) == 32000);
  CHECK(frame_capacity(8000, 16) == 128000);
  CHECK(frame_capacity(4000, 4) == 16000);
  CHECK(frame_capacity(4000, 8) == 32000);
  CHECK(frame_capacity(4000, 16) == 64000);
  CHECK(frame_capacity(2020, 4) == 8080);
  CHECK(frame_capacity(2020, 8) == 16160);
  CHECK(frame_capacity(2020, 16) == 32320);
  // full-video rows derive from the average length
  CHECK(frame_capacity(8000, MemoryBudget::kAllFrames, 250) == 2000000);
  CHECK(frame_capacity(2020, MemoryBudget::kAllFrames, 183) == 369660);
  CHECK(frame_capacity(4000, MemoryBudget::kAllFrames, 3879) ==
        doctest::Approx(15.5e6).epsilon(0.01));
}

TEST_CASE("frame capacity validates its inputs") {
  CHECK_THROWS_AS(frame_capacity(0, 8), ConfigError);
  CHECK_THROWS_AS(frame_capacity(10, -2), ConfigError);
  CHECK_THROWS_AS(frame_capacity(10, MemoryBudget::kAllFrames, 0.0), ConfigError);
}

TEST_CASE("uniform_subsample evaluates the bin-center formula") {
  CHECK(uniform_subsample(8, 8) == std::vector<long long>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(uniform_subsample(8, 4) == std::vector<long long>{1, 3, 5, 7});
  CHECK(uniform_subsample(3, 4) == std::vector<long long>{0, 1, 1, 2});
}

TEST_CASE("uniform_subsample properties over random shapes") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const long long total = 1 + static_cast<long long>(rng.next_below(500));
    const int k = 1 + static_cast<int>(rng.next_below(40));
    const auto idx = uniform_subsample(total, k);
    REQUIRE(idx.size() == static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(idx[i] >= 0);
      CHECK(idx[i] < total);
      if (i > 0) CHECK(idx[i] >= idx[i - 1]);
      if (i > 0 && total >= k) {
        CHECK(idx[i] > idx[i - 1]);  // strictly increasing when enough frames
        const double gap = static_cast<double>(idx[i] - idx[i - 1]);
        CHECK(std::fabs(gap - static_cast<double>(total) / k) <= 1.0);
      }
    }
  }
}

TEST_CASE("random exemplar selection is seeded, per class, without replacement") {
  std::vector<std::pair<std::string, int>> candidates;
  for (int i = 0; i < 12; ++i) candidates.emplace_back("a" + std::to_string(i), 0);
  for (int i = 0; i < 5; ++i) candidates.emplace_back("b" + std::to_string(i), 1);

  CHECK(select_exemplars_random(candidates, 0, 1).empty());

  const auto picks = select_exemplars_random(candidates, 10, 42);
  int class0 = 0, class1 = 0;
  for (const auto& p : picks) (p.class_id == 0 ? class0 : class1)++;
  CHECK(class0 == 10);
  CHECK(class1 == 5);  // fewer candidates than quota takes all

  // distinct ids, ranks are draw order
  std::set<std::string> ids;
  for (const auto& p : picks) ids.insert(p.video_id);
  CHECK(ids.size() == picks.size());

  const auto again = select_exemplars_random(candidates, 10, 42);
  CHECK(again.size() == picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    CHECK(again[i].video_id == picks[i].video_id);
    CHECK(again[i].selection_rank == picks[i].selection_rank);
  }
}

// exhaustive re-evaluation of each greedy step, recomputing means from scratch
static std::vector<int> herding_oracle(const std::vector<std::vector<double>>& feats,
                                       int quota) {
  const int n = static_cast<int>(feats.size());
  const std::size_t d = feats[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& f : feats)
    for (std::size_t k = 0; k < d; ++k) mean[k] += f[k] / n;

  std::vector<int> picked;
  std::vector<bool> used(n, false);
  for (int step = 0; step < std::min(quota, n); ++step) {
    int best = -1;
    double best_dist = 1e300;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      std::vector<double> running(d, 0.0);
      for (int j : picked)
        for (std::size_t k = 0; k < d; ++k) running[k] += feats[j][k];
      for (std::size_t k = 0; k < d; ++k) running[k] = (running[k] + feats[i][k]) / (step + 1);
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        dist += (mean[k] - running[k]) * (mean[k] - running[k]);
      if (dist < best_dist - 1e-15) {
        best = i;
        best_dist = dist;
      }
    }
    used[best] = true;
    picked.push_back(best);
  }
  return picked;
}

TEST_CASE("herding first pick minimizes distance to the class mean") {
  const std::vector<std::vector<double>> feats{{0, 0}, {2, 0}, {1, 0}};
  const auto order = select_exemplars_herding(feats, 3);
  CHECK(order[0] == 2);  // (1,0) sits on the mean
}

TEST_CASE("single candidate herding returns it") {
  CHECK(select_exemplars_herding({{0.5, -1.0}}, 1) == std::vector<int>{0});
}

TEST_CASE("full-quota herding is a permutation") {
  Rng rng(7);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 6; ++i)
    feats.push_back({rng.next_double(), rng.next_double(), rng.next_double()});
  auto order = select_exemplars_herding(feats, 6);
  std::sort(order.begin(), order.end());
  CHECK(order == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("herding equals the exhaustive greedy oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    const int dim = 1 + static_cast<int>(rng.next_below(3));
    std::vector<std::vector<double>> feats(n, std::vector<double>(dim));
    for (auto& f : feats)
      for (auto& v : f) v = rng.next_double(-2.0, 2.0);
    const int quota = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    CHECK(select_exemplars_herding(feats, quota) == herding_oracle(feats, quota));
  }
}

TEST_CASE("herding rejects empty candidate sets and mixed dimensions") {
  CHECK_THROWS_AS(select_exemplars_herding({}, 1), DataError);
  CHECK_THROWS_AS(select_exemplars_herding({{1.0}, {1.0, 2.0}}, 1), DataError);
}

namespace {

MemoryEntry make_entry(const std::string& id, int cls, int rank, int frames = 4) {
  MemoryEntry e;
  e.video_id = id;
  e.class_id = cls;
  e.selection_rank = rank;
  e.frame_indices.resize(frames);
  std::iota(e.frame_indices.begin(), e.frame_indices.end(), 0);
  e.stored_frames.frames = frames;
  e.stored_frames.height = 2;
  e.stored_frames.width = 2;
  e.stored_frames.data.assign(static_cast<std::size_t>(frames) * 4,
                              static_cast<std::uint8_t>(cls * 16 + rank));
  return e;
}

}  // namespace

TEST_CASE("inserts respect the frame budget") {
  EpisodicMemory memory(make_budget(3, 4));
  memory.insert(make_entry("a", 0, 0));
  memory.insert(make_entry("b", 0, 1));
  memory.insert(make_entry("c", 1, 0));
  CHECK(memory.total_stored_frames() == 12);
  CHECK_THROWS_AS(memory.insert(make_entry("d", 1, 1)), DataError);
}

TEST_CASE("rebalance trims to the per-class quota and is idempotent") {
  EpisodicMemory memory(make_budget(8, 4));
  for (int r = 0; r < 4; ++r) memory.insert(make_entry("a" + std::to_string(r), 0, r));
  for (int r = 0; r < 4; ++r) memory.insert(make_entry("b" + std::to_string(r), 1, r));

  // 8000-instance budgets at 40 and 400 classes: 200 and 20 per class
  CHECK(8000 / 40 == 200);
  CHECK(8000 / 400 == 20);

  memory.rebalance(4);  // quota 2
  auto counts = memory.per_class_counts();
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  // quota keeps the lowest selection ranks
  for (const auto* e : memory.all_entries()) CHECK(e->selection_rank < 2);

  const auto before = memory;
  memory.rebalance(4);
  CHECK(memory == before);

  CHECK_THROWS_AS(memory.rebalance(2), ConfigError);  // classes cannot un-see
}

TEST_CASE("rebalance never raises a class count") {
  EpisodicMemory memory(make_budget(9, 4));
  memory.insert(make_entry("a0", 0, 0));
  for (int r = 0; r < 3; ++r) memory.insert(make_entry("b" + std::to_string(r), 1, r));
  memory.rebalance(3);  // quota 3
  auto counts = memory.per_class_counts();
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 3);
}

TEST_CASE("replay batches shuffle deterministically and preserve the multiset") {
  EpisodicMemory memory(make_budget(10, 4));
  for (int i = 0; i < 10; ++i) memory.insert(make_entry("v" + std::to_string(i), i % 2, i / 2));

  const auto batches = replay_batches(memory, 4, 99);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  std::multiset<std::string> seen;
  for (const auto& b : batches)
    for (const auto* e : b) seen.insert(e->video_id);
  CHECK(seen.size() == 10);

  const auto batches2 = replay_batches(memory, 4, 99);
  for (std::size_t i = 0; i < batches.size(); ++i)
    for (std::size_t j = 0; j < batches[i].size(); ++j)
      CHECK(batches[i][j]->video_id == batches2[i][j]->video_id);

  EpisodicMemory empty(make_budget(4, 4));
  CHECK(replay_batches(empty, 4, 0).empty());
}

TEST_CASE("memory snapshots round-trip bit-exactly") {
  test_support::TempDir dir("memsnap");
  EpisodicMemory memory(make_budget(6, 4));
  for (int i = 0; i < 5; ++i) memory.insert(make_entry("v" + std::to_string(i), i % 3, i / 3, 4));
  memory.rebalance(3);

  save_memory_snapshot(memory, dir.path() + "/snap");
  const auto loaded = load_memory_snapshot(dir.path() + "/snap");
  CHECK(loaded == memory);

  // byte-for-byte stable across a save of the reloaded state
  save_memory_snapshot(loaded, dir.path() + "/snap2");
  const auto digest = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(digest(dir.path() + "/snap/frames.bin") == digest(dir.path() + "/snap2/frames.bin"));
  CHECK(digest(dir.path() + "/snap/index.json") == digest(dir.path() + "/snap2/index.json"));
}
