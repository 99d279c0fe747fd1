#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vidcl/frames.hpp"

namespace vidcl::model {

// Training-model contract: logits over the classes seen so far, a
// fixed-dimension video embedding, flat parameter access, a vector-Jacobian
// product for gradients, and a head that grows at task boundaries without
// touching old-class rows.
class Model {
 public:
  virtual ~Model() = default;

  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  // class id of each logit row, in the order classes were added
  virtual const std::vector<int>& head_classes() const = 0;

  virtual std::vector<double> forward(const data::FrameStack& clip) const = 0;
  virtual std::vector<double> features(const data::FrameStack& clip) const = 0;

  virtual std::size_t parameter_count() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(const std::vector<double>& params) = 0;

  // Accumulates d(sum_r dlogits[r] * logits[r]) / dtheta into grad, which
  // must have parameter_count() entries.
  virtual void accumulate_vjp(const data::FrameStack& clip,
                              const std::vector<double>& dlogits,
                              std::vector<double>& grad) const = 0;

  virtual void expand_head(const std::vector<int>& new_class_ids) = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  int logit_index_of(int class_id) const {
    const auto& ids = head_classes();
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == class_id) return static_cast<int>(i);
    return -1;
  }
};

// Desk-scale segment-consensus network: a shared 2-layer convolutional
// encoder runs on every frame, per-frame embeddings are averaged over time,
// and a linear head maps the pooled embedding to class logits. Double
// precision throughout so analytic gradients can be checked against central
// differences.
class ReferenceModel final : public Model {
 public:
  struct Config {
    int height = 16;
    int width = 16;
    int conv1_channels = 16;
    int conv2_channels = 32;
    std::uint64_t init_seed = 0;
  };

  explicit ReferenceModel(const Config& cfg);

  int feature_dim() const override { return cfg_.conv2_channels; }
  int num_classes() const override { return static_cast<int>(head_classes_.size()); }
  const std::vector<int>& head_classes() const override { return head_classes_; }

  std::vector<double> forward(const data::FrameStack& clip) const override;
  std::vector<double> features(const data::FrameStack& clip) const override;

  std::size_t parameter_count() const override { return params_.size(); }
  std::vector<double> parameters() const override { return params_; }
  void set_parameters(const std::vector<double>& params) override;

  void accumulate_vjp(const data::FrameStack& clip, const std::vector<double>& dlogits,
                      std::vector<double>& grad) const override;

  void expand_head(const std::vector<int>& new_class_ids) override;
  std::unique_ptr<Model> clone() const override;

  const Config& config() const { return cfg_; }

  void save(const std::string& path) const;
  static ReferenceModel load(const std::string& path);

 private:
  struct Activations;
  void frame_forward(const std::uint8_t* frame, Activations& act) const;

  Config cfg_;
  int h1_, w1_, h2_, w2_;
  std::size_t backbone_size_;
  std::vector<int> head_classes_;
  std::vector<double> params_;
};

// Adam with bias correction; moment vectors zero-extend when the head grows.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace vidcl::model
