#include "vidcl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>

#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::harness {

const char* to_string(Method m) {
  switch (m) {
    case Method::finetune: return "finetune";
    case Method::ewc: return "ewc";
    case Method::mas: return "mas";
    case Method::naive: return "naive";
    case Method::icarl: return "icarl";
    case Method::bic: return "bic";
    case Method::naive_tc: return "naive+tc";
    case Method::icarl_tc: return "icarl+tc";
    case Method::bic_tc: return "bic+tc";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::finetune, Method::ewc, Method::mas, Method::naive,
                   Method::icarl, Method::bic, Method::naive_tc, Method::icarl_tc,
                   Method::bic_tc})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "'");
}

bool is_memory_method(Method m) {
  switch (m) {
    case Method::naive:
    case Method::icarl:
    case Method::bic:
    case Method::naive_tc:
    case Method::icarl_tc:
    case Method::bic_tc: return true;
    default: return false;
  }
}

bool is_reg_method(Method m) { return m == Method::ewc || m == Method::mas; }

bool uses_tc(Method m) {
  return m == Method::naive_tc || m == Method::icarl_tc || m == Method::bic_tc;
}

bool uses_herding(Method m) {
  return m == Method::icarl || m == Method::icarl_tc || m == Method::bic ||
         m == Method::bic_tc;
}

bool uses_nearest_mean(Method m) {
  return m == Method::naive || m == Method::naive_tc || m == Method::icarl ||
         m == Method::icarl_tc;
}

bool uses_bias_correction(Method m) {
  return m == Method::bic || m == Method::bic_tc;
}

void RunConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs_for_method() < 1) throw ConfigError("epoch count must be >= 1");
  if (lambda_tc < 0.0 || lambda_tc > 1.0)
    throw ConfigError("lambda_tc must lie in [0, 1]");
  if (is_memory_method(method)) {
    if (budget.max_video_instances < 1 || budget.frame_capacity < 1)
      throw ConfigError(std::string(to_string(method)) +
                        " needs a positive memory budget");
    if (uses_tc(method) && budget.stores_all_frames())
      throw ConfigError("temporal consistency needs a down-sampled memory "
                        "(frames_per_video >= 1)");
  }
  if (is_reg_method(method) && lambda_reg <= 0.0)
    throw ConfigError(std::string(to_string(method)) + " needs a positive lambda_reg");
}

namespace {

std::vector<long long> segment_sample_rng(long long total_frames, int n,
                                          bool train_mode, Rng& rng) {
  if (total_frames < 1) throw ConfigError("total_frames must be >= 1");
  if (n < 1) throw ConfigError("segment count must be >= 1");
  if (!train_mode) return mem::uniform_subsample(total_frames, n);
  std::vector<long long> indices(n);
  for (int i = 0; i < n; ++i) {
    const long long lo = static_cast<long long>(i) * total_frames / n;
    const long long hi = static_cast<long long>(i + 1) * total_frames / n;
    if (hi <= lo)
      indices[i] = std::min(lo, total_frames - 1);
    else
      indices[i] = lo + static_cast<long long>(
                            rng.next_below(static_cast<std::uint64_t>(hi - lo)));
  }
  return indices;
}

int argmax_row(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double eval_videos(const model::Model& model, Method method,
                   const std::vector<std::string>& video_ids,
                   const std::unordered_map<std::string, const data::VideoRecord*>& by_id,
                   const data::FrameProvider& provider, int segments,
                   const methods::NearestMeanClassifier* nme,
                   const methods::BiasCorrectionLayer* bias_layer,
                   std::vector<std::pair<int, int>>* predictions) {
  if (video_ids.empty()) throw DataError("empty evaluation set");
  int correct = 0;
  for (const auto& id : video_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("evaluation video '" + id + "' not found");
    const data::VideoRecord& rec = *it->second;
    const auto stack = provider.load(rec);
    const auto clip = data::take_frames(
        stack, mem::uniform_subsample(rec.total_frames, segments));
    int predicted;
    if (uses_nearest_mean(method)) {
      predicted = nme->classify(model, clip);
    } else {
      auto logits = model.forward(clip);
      if (uses_bias_correction(method) && bias_layer != nullptr)
        logits = methods::apply_bias_correction(*bias_layer, logits,
                                                model.head_classes());
      predicted = model.head_classes()[argmax_row(logits)];
    }
    if (predicted == rec.class_id) ++correct;
    if (predictions) predictions->emplace_back(rec.class_id, predicted);
  }
  return static_cast<double>(correct) / static_cast<double>(video_ids.size());
}

}  // namespace

std::vector<long long> segment_sample(long long total_frames, int n, bool train_mode,
                                      std::uint64_t seed) {
  Rng rng(mix_seed(seed, "segment-sample"));
  return segment_sample_rng(total_frames, n, train_mode, rng);
}

double evaluate_task(const model::Model& model, const mem::EpisodicMemory* memory,
                     Method method, const std::vector<std::string>& video_ids,
                     const data::DatasetManifest& manifest,
                     const data::FrameProvider& provider, int segments,
                     const methods::BiasCorrectionLayer* bias_layer,
                     std::vector<std::pair<int, int>>* predictions) {
  std::unordered_map<std::string, const data::VideoRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.video_id] = &r;
  std::optional<methods::NearestMeanClassifier> nme;
  if (uses_nearest_mean(method)) {
    if (memory == nullptr) throw DataError("nearest-mean inference needs a memory");
    nme.emplace(model, *memory);
  }
  return eval_videos(model, method, video_ids, by_id, provider, segments,
                     nme ? &*nme : nullptr, bias_layer, predictions);
}

namespace {

struct Trainer {
  const RunConfig& cfg;
  const data::DatasetManifest& manifest;
  const data::FrameProvider& provider;
  std::unordered_map<std::string, const data::VideoRecord*> by_id;

  model::ReferenceModel model;
  model::AdamOptimizer adam;
  mem::EpisodicMemory memory;
  methods::ImportanceState importance;
  bool have_importance = false;
  std::unique_ptr<model::Model> old_model;  // previous-task snapshot
  methods::BiasCorrectionLayer bic_layer;
  bool have_bic = false;

  std::vector<double> grad;
  double batch_loss = 0.0;

  Trainer(const RunConfig& cfg_, const data::DatasetManifest& manifest_,
          const data::FrameProvider& provider_)
      : cfg(cfg_),
        manifest(manifest_),
        provider(provider_),
        model([&] {
          model::ReferenceModel::Config mc = cfg_.model;
          mc.init_seed = mix_seed(cfg_.seed, "model-init");
          return mc;
        }()),
        adam(cfg_.learning_rate),
        memory(cfg_.budget) {
    for (const auto& r : manifest.records) by_id[r.video_id] = &r;
  }

  const data::VideoRecord& record(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("video '" + id + "' not in manifest");
    return *it->second;
  }

  // stored-frame indices an exemplar of this record would keep
  std::vector<long long> stored_indices(const data::VideoRecord& rec) const {
    if (cfg.budget.stores_all_frames()) {
      std::vector<long long> all(rec.total_frames);
      for (long long i = 0; i < rec.total_frames; ++i) all[i] = i;
      return all;
    }
    return mem::uniform_subsample(rec.total_frames, cfg.budget.frames_per_video);
  }

  // Method loss for one clip view with the given convex weight; accumulates
  // scaled gradients.
  void add_view_loss(const data::FrameStack& clip, int label_row, double weight,
                     double inv_batch) {
    if (weight == 0.0) return;
    const double scale = weight * inv_batch;
    if (is_memory_method(cfg.method)) {
      std::vector<double> old_logits;
      if (old_model) old_logits = old_model->forward(clip);
      const auto targets =
          methods::icarl_targets(old_logits, model.num_classes(), label_row);
      auto lg = methods::bce_with_logits(model.forward(clip), targets);
      batch_loss += scale * lg.value;
      for (auto& g : lg.dlogits) g *= scale;
      model.accumulate_vjp(clip, lg.dlogits, grad);
    } else {
      auto lg = methods::cross_entropy(model.forward(clip), label_row);
      batch_loss += scale * lg.value;
      for (auto& g : lg.dlogits) g *= scale;
      model.accumulate_vjp(clip, lg.dlogits, grad);
    }
  }

  // New-task sample: the sampled clip plus, for TC methods, the video
  // down-sampled at the same indices memory storage would keep.
  void add_new_sample_loss(const data::VideoRecord& rec, const data::FrameStack& clip,
                           int label_row, double inv_batch) {
    if (uses_tc(cfg.method)) {
      const auto down = provider.load_frames(rec, stored_indices(rec));
      add_view_loss(clip, label_row, 1.0 - cfg.lambda_tc, inv_batch);
      add_view_loss(down, label_row, cfg.lambda_tc, inv_batch);
    } else {
      add_view_loss(clip, label_row, 1.0, inv_batch);
    }
  }

  // Replay sample: stored clips already sit at the memory rate, so the TC
  // term degenerates unless they hold more frames than that rate.
  void add_replay_sample_loss(const data::FrameStack& clip, int label_row,
                              double inv_batch) {
    if (uses_tc(cfg.method) && clip.frames > cfg.budget.frames_per_video) {
      const auto down = data::take_frames(
          clip, mem::uniform_subsample(clip.frames, cfg.budget.frames_per_video));
      add_view_loss(clip, label_row, 1.0 - cfg.lambda_tc, inv_batch);
      add_view_loss(down, label_row, cfg.lambda_tc, inv_batch);
    } else {
      add_view_loss(clip, label_row, 1.0, inv_batch);
    }
  }

  data::FrameStack train_clip(const data::VideoRecord& rec, Rng& rng) const {
    const auto stack = provider.load(rec);
    return data::take_frames(
        stack, segment_sample_rng(rec.total_frames, cfg.segments, true, rng));
  }

  data::FrameStack replay_clip(const mem::MemoryEntry& entry, Rng& rng) const {
    if (entry.stored_frames.frames > cfg.segments)
      return data::take_frames(
          entry.stored_frames,
          segment_sample_rng(entry.stored_frames.frames, cfg.segments, true, rng));
    return entry.stored_frames;
  }

  void train_task(int task_index, const std::vector<std::string>& train_ids) {
    const int epochs = cfg.epochs_for_method();
    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng erng(mix_seed(cfg.seed, "train-epoch",
                        static_cast<std::uint64_t>(task_index),
                        static_cast<std::uint64_t>(epoch)));
      std::vector<std::string> order = train_ids;
      erng.shuffle(order);

      std::vector<std::vector<const mem::MemoryEntry*>> mem_batches;
      std::size_t mem_cursor = 0;
      int mem_cycle = 0;
      const bool replay = is_memory_method(cfg.method) && !memory.empty();
      if (replay)
        mem_batches = mem::replay_batches(
            memory, cfg.batch_size,
            mix_seed(cfg.seed, "replay", static_cast<std::uint64_t>(task_index),
                     static_cast<std::uint64_t>(epoch) * 1000));

      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        grad.assign(model.parameter_count(), 0.0);
        batch_loss = 0.0;

        const double inv_new = 1.0 / static_cast<double>(end - start);
        for (std::size_t i = start; i < end; ++i) {
          const auto& rec = record(order[i]);
          const auto clip = train_clip(rec, erng);
          add_new_sample_loss(rec, clip, model.logit_index_of(rec.class_id), inv_new);
        }

        if (replay) {  // one memory batch per new-task batch, losses summed
          if (mem_cursor >= mem_batches.size()) {
            ++mem_cycle;
            mem_cursor = 0;
            mem_batches = mem::replay_batches(
                memory, cfg.batch_size,
                mix_seed(cfg.seed, "replay", static_cast<std::uint64_t>(task_index),
                         static_cast<std::uint64_t>(epoch) * 1000 +
                             static_cast<std::uint64_t>(mem_cycle)));
          }
          const auto& mb = mem_batches[mem_cursor++];
          const double inv_mem = 1.0 / static_cast<double>(mb.size());
          for (const auto* entry : mb) {
            const auto clip = replay_clip(*entry, erng);
            add_replay_sample_loss(clip, model.logit_index_of(entry->class_id), inv_mem);
          }
        }

        if (is_reg_method(cfg.method) && have_importance) {
          auto params = model.parameters();
          batch_loss += methods::regularization_penalty(importance, params);
          methods::add_regularization_gradient(importance, params, grad);
        }

        auto params = model.parameters();
        adam.step(params, grad);
        model.set_parameters(params);
      }
    }
  }

  void update_memory(int task_index, const data::Task& task, int classes_seen) {
    memory.rebalance(classes_seen);
    const int quota = cfg.budget.max_video_instances / classes_seen;
    if (quota < 1)
      throw ConfigError("memory budget allows no exemplars once " +
                        std::to_string(classes_seen) + " classes are seen");

    std::map<int, std::vector<std::string>> by_class;
    for (const auto& id : task.train_ids)
      by_class[record(id).class_id].push_back(id);

    if (uses_herding(cfg.method)) {
      for (const auto& [cls, ids] : by_class) {
        std::vector<std::vector<double>> feats;
        feats.reserve(ids.size());
        for (const auto& id : ids) {
          const auto& rec = record(id);
          auto f = model.features(
              provider.load_frames(rec, stored_indices(rec)));
          double norm = 0.0;
          for (double v : f) norm += v * v;
          norm = std::sqrt(norm);
          if (norm > 0.0)
            for (auto& v : f) v /= norm;
          feats.push_back(std::move(f));
        }
        const auto order = mem::select_exemplars_herding(feats, quota);
        for (std::size_t rank = 0; rank < order.size(); ++rank)
          insert_exemplar(record(ids[order[rank]]), static_cast<int>(rank));
      }
    } else {
      std::vector<std::pair<std::string, int>> candidates;
      for (const auto& [cls, ids] : by_class)
        for (const auto& id : ids) candidates.emplace_back(id, cls);
      const auto picks = mem::select_exemplars_random(
          candidates, quota,
          mix_seed(cfg.seed, "select", static_cast<std::uint64_t>(task_index)));
      for (const auto& pick : picks)
        insert_exemplar(record(pick.video_id), pick.selection_rank);
    }
  }

  void insert_exemplar(const data::VideoRecord& rec, int rank) {
    mem::MemoryEntry entry;
    entry.video_id = rec.video_id;
    entry.class_id = rec.class_id;
    entry.frame_indices = stored_indices(rec);
    entry.stored_frames = provider.load_frames(rec, entry.frame_indices);
    entry.selection_rank = rank;
    memory.insert(std::move(entry));
  }

  void fit_bias_layer(const data::Task& task,
                      const std::vector<std::string>& heldout_new) {
    // balanced held-out stream: reserved new-task videos plus memory
    // exemplars of every old class
    std::vector<std::vector<double>> logits;
    std::vector<int> target_rows;

    std::map<int, int> new_per_class;
    for (const auto& id : heldout_new) {
      const auto& rec = record(id);
      const auto clip = provider.load_frames(
          rec, mem::uniform_subsample(rec.total_frames, cfg.segments));
      logits.push_back(model.forward(clip));
      target_rows.push_back(model.logit_index_of(rec.class_id));
      ++new_per_class[rec.class_id];
    }
    int mean_new = 0;
    for (const auto& [cls, n] : new_per_class) mean_new += n;
    mean_new = std::max(1, mean_new / std::max<int>(1, new_per_class.size()));

    const std::vector<int> task_classes(task.class_ids.begin(), task.class_ids.end());
    for (const auto& [cls, entries] : memory.entries_by_class()) {
      if (std::find(task_classes.begin(), task_classes.end(), cls) !=
          task_classes.end())
        continue;  // old classes only
      int taken = 0;
      for (const auto& e : entries) {
        if (taken++ >= mean_new) break;
        logits.push_back(model.forward(e.stored_frames));
        target_rows.push_back(model.logit_index_of(e.class_id));
      }
    }

    std::vector<bool> new_row(model.num_classes(), false);
    for (int r = 0; r < model.num_classes(); ++r)
      new_row[r] = std::find(task_classes.begin(), task_classes.end(),
                             model.head_classes()[r]) != task_classes.end();
    bic_layer = methods::bic_fit_logits(logits, target_rows, new_row,
                                        model.head_classes());
    have_bic = true;
  }

  void update_importance(const data::Task& task) {
    std::vector<std::pair<data::FrameStack, int>> labeled;
    labeled.reserve(task.train_ids.size());
    for (const auto& id : task.train_ids) {
      const auto& rec = record(id);
      labeled.emplace_back(
          provider.load_frames(rec,
                               mem::uniform_subsample(rec.total_frames, cfg.segments)),
          rec.class_id);
    }
    std::vector<double> omega_new;
    if (cfg.method == Method::ewc) {
      omega_new = methods::ewc_importance(model, labeled);
    } else {
      std::vector<data::FrameStack> clips;
      clips.reserve(labeled.size());
      for (auto& [clip, cls] : labeled) clips.push_back(std::move(clip));
      omega_new = methods::mas_importance(model, clips);
    }
    // accumulate across tasks by summation
    importance.omega.resize(omega_new.size(), 0.0);
    for (std::size_t i = 0; i < omega_new.size(); ++i)
      importance.omega[i] += omega_new[i];
    importance.anchor = model.parameters();
    importance.lambda_reg = cfg.lambda_reg;
    have_importance = true;
  }
};

}  // namespace

ExperimentResult run_sequence(const RunConfig& config,
                              const data::DatasetManifest& manifest,
                              const data::TaskSequence& tasks,
                              const std::string& checkpoint_dir) {
  config.validate();
  manifest.validate();
  data::validate_task_sequence(manifest, tasks);

  data::FrameProvider provider;
  Trainer trainer(config, manifest, provider);
  ExperimentResult result;
  int classes_seen = 0;

  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    const auto wall_start = std::chrono::steady_clock::now();
    const data::Task& task = tasks.tasks[t];
    if (task.train_ids.empty())
      throw DataError("task " + std::to_string(t) + " has no training videos");

    // every memory method distills against the previous-task snapshot
    if (is_memory_method(config.method) && t > 0)
      trainer.old_model = trainer.model.clone();

    trainer.model.expand_head(task.class_ids);
    classes_seen += static_cast<int>(task.class_ids.size());

    // BiC reserves a slice of the new data for the bias-fit stage
    std::vector<std::string> train_ids = task.train_ids;
    std::vector<std::string> bic_heldout;
    if (uses_bias_correction(config.method) && t > 0) {
      std::map<int, std::vector<std::string>> by_class;
      for (const auto& id : train_ids) by_class[trainer.record(id).class_id].push_back(id);
      train_ids.clear();
      for (auto& [cls, ids] : by_class) {
        Rng rng(mix_seed(config.seed, "bic-heldout", t, static_cast<std::uint64_t>(cls)));
        rng.shuffle(ids);
        const int keep = std::max(1, static_cast<int>(ids.size()) / 10);
        for (std::size_t i = 0; i < ids.size(); ++i)
          (static_cast<int>(i) < keep ? bic_heldout : train_ids).push_back(ids[i]);
      }
    }

    trainer.train_task(static_cast<int>(t), train_ids);

    if (is_memory_method(config.method)) {
      trainer.update_memory(static_cast<int>(t), task, classes_seen);
      if (uses_bias_correction(config.method) && t > 0)
        trainer.fit_bias_layer(task, bic_heldout);
    } else if (is_reg_method(config.method)) {
      trainer.update_importance(task);
    }
    result.memory_trace.push_back(trainer.memory.total_stored_frames());
    {
      int lo = 0, hi = 0;
      bool first = true;
      for (const auto& [cls, count] : trainer.memory.per_class_counts()) {
        lo = first ? count : std::min(lo, count);
        hi = first ? count : std::max(hi, count);
        first = false;
      }
      result.memory_class_spread.push_back(hi - lo);
    }

    // evaluate every seen task
    std::optional<methods::NearestMeanClassifier> nme;
    if (uses_nearest_mean(config.method))
      nme.emplace(trainer.model, trainer.memory);
    const bool final_task = t + 1 == tasks.tasks.size();
    std::vector<std::pair<int, int>> predictions;
    std::vector<double> row;
    for (std::size_t j = 0; j <= t; ++j) {
      row.push_back(eval_videos(trainer.model, config.method, tasks.tasks[j].val_ids,
                                trainer.by_id, provider, config.segments,
                                nme ? &*nme : nullptr,
                                trainer.have_bic ? &trainer.bic_layer : nullptr,
                                final_task ? &predictions : nullptr));
    }
    result.accuracy_matrix.append_row(std::move(row));

    if (final_task) {
      std::vector<int> expected;
      for (std::size_t j = 0; j <= t; ++j)
        expected.insert(expected.end(), tasks.tasks[j].class_ids.begin(),
                        tasks.tasks[j].class_ids.end());
      result.per_class = metrics::per_class_report(predictions, expected);
    }

    if (!checkpoint_dir.empty()) {
      const std::string base = checkpoint_dir + "/task_" + std::to_string(t);
      trainer.model.save(base + "_model.bin");
      if (is_memory_method(config.method))
        mem::save_memory_snapshot(trainer.memory, base + "_memory");
      if (trainer.have_importance)
        methods::save_importance_state(trainer.importance, base + "_importance.bin");
      if (trainer.have_bic) {
        nlohmann::json j{{"alpha", trainer.bic_layer.alpha},
                         {"beta", trainer.bic_layer.beta},
                         {"new_class_ids", trainer.bic_layer.new_class_ids}};
        std::ofstream out(base + "_bias.json", std::ios::binary);
        out << j.dump(2) << "\n";
      }
    }

    result.wall_clock_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count());
  }
  return result;
}

}  // namespace vidcl::harness
