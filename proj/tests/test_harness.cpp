#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/harness.hpp"
#include "vidcl/methods.hpp"
#include "vidcl/metrics.hpp"
#include "vidcl/model.hpp"
#include "vidcl/rng.hpp"
#include "vidcl/synthetic.hpp"

using namespace vidcl;
using namespace vidcl::harness;

namespace {

data::DatasetManifest tiny_dataset(int classes, int videos_per_class = 10,
                                   std::uint64_t seed = 33) {
  data::SyntheticConfig cfg;
  cfg.num_classes = classes;
  cfg.videos_per_class = videos_per_class;
  cfg.frames_per_video = 12;
  cfg.height = 16;
  cfg.width = 16;
  cfg.seed = seed;
  return data::generate_synthetic_dataset(cfg);
}

RunConfig tiny_config(Method method, std::uint64_t seed = 1) {
  RunConfig cfg;
  cfg.method = method;
  cfg.epochs_memory = 4;
  cfg.epochs_reg = 4;
  cfg.learning_rate = 1e-3;
  cfg.segments = 8;
  cfg.lambda_tc = 0.5;
  cfg.lambda_reg = 100.0;
  cfg.batch_size = 8;
  cfg.seed = seed;
  cfg.model.height = 16;
  cfg.model.width = 16;
  if (is_memory_method(method)) cfg.budget = mem::make_budget(40, 4);
  return cfg;
}

}  // namespace

TEST_CASE("eval-mode segment sampling takes bin centers") {
  CHECK(segment_sample(16, 8, false, 0) ==
        std::vector<long long>{1, 3, 5, 7, 9, 11, 13, 15});
  // deterministic and seed-independent
  CHECK(segment_sample(100, 8, false, 1) == segment_sample(100, 8, false, 2));
}

TEST_CASE("train-mode indices stay inside their segments") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const long long total = 1 + static_cast<long long>(rng.next_below(60));
    const int n = 1 + static_cast<int>(rng.next_below(12));
    const auto idx = segment_sample(total, n, true, rng.next_u64());
    REQUIRE(idx.size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const long long lo = static_cast<long long>(i) * total / n;
      const long long hi = std::max(lo + 1, static_cast<long long>(i + 1) * total / n);
      CHECK(idx[i] >= std::min(lo, total - 1));
      CHECK(idx[i] < std::max(hi, lo + 1));
      CHECK(idx[i] < total);
    }
  }
}

TEST_CASE("run_sequence is bit-reproducible for a fixed seed") {
  const auto manifest = tiny_dataset(4);
  const auto tasks = data::generate_task_sequence(manifest, 2, 5);
  const auto cfg = tiny_config(Method::naive);
  const auto a = run_sequence(cfg, manifest, tasks);
  const auto b = run_sequence(cfg, manifest, tasks);
  CHECK(a.accuracy_matrix == b.accuracy_matrix);
  CHECK(metrics::accuracy_matrix_to_csv(a.accuracy_matrix) ==
        metrics::accuracy_matrix_to_csv(b.accuracy_matrix));
}

TEST_CASE("icarl+tc at lambda 0 reproduces icarl exactly") {
  const auto manifest = tiny_dataset(4);
  const auto tasks = data::generate_task_sequence(manifest, 2, 8);
  auto icarl_cfg = tiny_config(Method::icarl);
  auto tc_cfg = tiny_config(Method::icarl_tc);
  tc_cfg.lambda_tc = 0.0;
  const auto a = run_sequence(icarl_cfg, manifest, tasks);
  const auto b = run_sequence(tc_cfg, manifest, tasks);
  CHECK(a.accuracy_matrix == b.accuracy_matrix);
}

TEST_CASE("memory trace respects the frame budget over five tasks") {
  const auto manifest = tiny_dataset(10, 8);
  const auto tasks = data::generate_task_sequence(manifest, 5, 4);
  for (int fpv : {4, 8}) {
    auto cfg = tiny_config(Method::naive);
    cfg.epochs_memory = 2;
    cfg.budget = mem::make_budget(30, fpv);
    const auto result = run_sequence(cfg, manifest, tasks);
    REQUIRE(result.memory_trace.size() == 5);
    for (long long frames : result.memory_trace)
      CHECK(frames <= cfg.budget.frame_capacity);
    CHECK(result.memory_trace.back() > 0);
  }
}

TEST_CASE("a single-task sequence yields a 1x1 matrix and zero BWF") {
  const auto manifest = tiny_dataset(2);
  data::TaskSequence tasks;
  tasks.seed = 0;
  data::Task task;
  task.task_index = 0;
  task.class_ids = {0, 1};
  for (const auto& r : manifest.records) {
    if (r.partition == data::Partition::train) task.train_ids.push_back(r.video_id);
    if (r.partition == data::Partition::val) task.val_ids.push_back(r.video_id);
    if (r.partition == data::Partition::test) task.test_ids.push_back(r.video_id);
  }
  tasks.tasks = {task};

  const auto result = run_sequence(tiny_config(Method::finetune), manifest, tasks);
  CHECK(result.accuracy_matrix.n_tasks() == 1);
  CHECK(metrics::backward_forgetting(result.accuracy_matrix) == 0.0);
}

TEST_CASE("task-boundary checkpoints reload into consistent state") {
  test_support::TempDir dir("ckpt");
  const auto manifest = tiny_dataset(4);
  const auto tasks = data::generate_task_sequence(manifest, 2, 6);
  auto cfg = tiny_config(Method::icarl);
  cfg.epochs_memory = 2;
  run_sequence(cfg, manifest, tasks, dir.path());

  // every boundary leaves a loadable model + memory pair whose shapes agree
  for (int t = 0; t < 2; ++t) {
    const std::string base = dir.path() + "/task_" + std::to_string(t);
    const auto net = model::ReferenceModel::load(base + "_model.bin");
    CHECK(net.num_classes() == 2 * (t + 1));
    const auto memory = mem::load_memory_snapshot(base + "_memory");
    CHECK(memory.classes_seen() == 2 * (t + 1));
    CHECK(memory.budget() == cfg.budget);
    CHECK(memory.total_stored_frames() <= cfg.budget.frame_capacity);
    // the restored model evaluates the restored memory without errors
    std::vector<std::string> val = tasks.tasks[0].val_ids;
    data::FrameProvider provider;
    const double acc = evaluate_task(net, &memory, Method::icarl, val, manifest,
                                     provider, cfg.segments);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }

  auto reg_cfg = tiny_config(Method::ewc);
  reg_cfg.epochs_reg = 2;
  run_sequence(reg_cfg, manifest, tasks, dir.path() + "/reg");
  const auto net = model::ReferenceModel::load(dir.path() + "/reg/task_1_model.bin");
  const auto imp =
      methods::load_importance_state(dir.path() + "/reg/task_1_importance.bin");
  CHECK(imp.omega.size() == net.parameter_count());
  CHECK(imp.anchor == net.parameters());  // anchor snapshots the boundary state
}

TEST_CASE("an extreme regularizer pins parameters to the previous anchor") {
  test_support::TempDir dir("clamp");
  const auto manifest = tiny_dataset(4);
  const auto tasks = data::generate_task_sequence(manifest, 2, 2);
  auto cfg = tiny_config(Method::ewc);
  cfg.lambda_reg = 1e12;
  cfg.epochs_reg = 3;
  run_sequence(cfg, manifest, tasks, dir.path());

  const auto anchor_state =
      methods::load_importance_state(dir.path() + "/task_0_importance.bin");
  const auto after = model::ReferenceModel::load(dir.path() + "/task_1_model.bin");
  const auto params = after.parameters();
  double weighted = 0.0;
  for (std::size_t i = 0; i < anchor_state.omega.size(); ++i) {
    const double d = params[i] - anchor_state.anchor[i];
    weighted += anchor_state.omega[i] * d * d;
  }
  CHECK(std::sqrt(weighted) <= 1e-3);
}

namespace {

// deterministic pseudo-random logits derived from the clip bytes
class NoiseModel final : public model::Model {
 public:
  explicit NoiseModel(int classes) : head_(classes) {
    for (int i = 0; i < classes; ++i) head_[i] = i;
  }
  int feature_dim() const override { return 1; }
  int num_classes() const override { return static_cast<int>(head_.size()); }
  const std::vector<int>& head_classes() const override { return head_; }
  std::vector<double> forward(const data::FrameStack& clip) const override {
    std::vector<double> logits(head_.size());
    std::uint64_t h = fnv1a64(std::string_view(
        reinterpret_cast<const char*>(clip.data.data()), clip.data.size()));
    for (auto& z : logits) {
      h = mix_seed(h, "logit");
      z = static_cast<double>(h >> 11) * 0x1.0p-53;
    }
    return logits;
  }
  std::vector<double> features(const data::FrameStack&) const override { return {0.0}; }
  std::size_t parameter_count() const override { return 0; }
  std::vector<double> parameters() const override { return {}; }
  void set_parameters(const std::vector<double>&) override {}
  void accumulate_vjp(const data::FrameStack&, const std::vector<double>&,
                      std::vector<double>&) const override {}
  void expand_head(const std::vector<int>&) override {}
  std::unique_ptr<Model> clone() const override {
    return std::make_unique<NoiseModel>(*this);
  }

 private:
  std::vector<int> head_;
};

}  // namespace

TEST_CASE("random logits evaluate at chance within three binomial sigmas") {
  const auto manifest = tiny_dataset(4, 40, 77);  // 6 val per class
  std::vector<std::string> val_ids;
  for (const auto& r : manifest.records)
    if (r.partition == data::Partition::val) val_ids.push_back(r.video_id);
  REQUIRE(val_ids.size() >= 20);

  NoiseModel model(4);
  data::FrameProvider provider;
  const double acc = evaluate_task(model, nullptr, Method::finetune, val_ids, manifest,
                                   provider, 8);
  const double p = 0.25;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(val_ids.size()));
  CHECK(acc >= p - 3 * sigma);
  CHECK(acc <= p + 3 * sigma);
}

TEST_CASE("evaluation is invariant to video order") {
  const auto manifest = tiny_dataset(3, 12, 9);
  std::vector<std::string> val_ids;
  for (const auto& r : manifest.records)
    if (r.partition == data::Partition::val) val_ids.push_back(r.video_id);
  auto reversed = val_ids;
  std::reverse(reversed.begin(), reversed.end());

  NoiseModel model(3);
  data::FrameProvider provider;
  CHECK(evaluate_task(model, nullptr, Method::finetune, val_ids, manifest, provider, 8) ==
        evaluate_task(model, nullptr, Method::finetune, reversed, manifest, provider, 8));
  CHECK_THROWS_AS(
      evaluate_task(model, nullptr, Method::finetune, {}, manifest, provider, 8),
      DataError);
}

TEST_CASE("config validation flags method/budget mismatches") {
  auto cfg = tiny_config(Method::icarl);
  cfg.budget = mem::MemoryBudget{};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  auto reg = tiny_config(Method::mas);
  reg.lambda_reg = 0.0;
  CHECK_THROWS_AS(reg.validate(), ConfigError);

  auto tc = tiny_config(Method::icarl_tc);
  tc.budget = mem::make_budget(40, mem::MemoryBudget::kAllFrames, 12.0);
  CHECK_THROWS_AS(tc.validate(), ConfigError);

  auto bad_lambda = tiny_config(Method::naive_tc);
  bad_lambda.lambda_tc = 1.5;
  CHECK_THROWS_AS(bad_lambda.validate(), ConfigError);
}

TEST_CASE("an empty task is rejected") {
  const auto manifest = tiny_dataset(4);
  auto tasks = data::generate_task_sequence(manifest, 2, 5);
  tasks.tasks[1].train_ids.clear();
  CHECK_THROWS_AS(run_sequence(tiny_config(Method::finetune), manifest, tasks),
                  DataError);
}
