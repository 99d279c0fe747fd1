#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vidcl/frames.hpp"
#include "vidcl/memory.hpp"
#include "vidcl/model.hpp"

namespace vidcl::methods {

// Scalar loss plus its gradient with respect to the logits.
struct LossGrad {
  double value = 0.0;
  std::vector<double> dlogits;
};

// Numerically stable softmax cross-entropy against a target row.
LossGrad cross_entropy(const std::vector<double>& logits, int target_index);

// Per-class binary cross-entropy with logits, summed over classes.
LossGrad bce_with_logits(const std::vector<double>& logits,
                         const std::vector<double>& targets);

std::vector<double> softmax(const std::vector<double>& logits);

// ---------------------------------------------------------------------------
// Parameter-importance regularization (EWC / MAS)

struct ImportanceState {
  std::vector<double> omega;   // per-parameter importance, >= 0
  std::vector<double> anchor;  // parameters at the last task boundary
  double lambda_reg = 0.0;

  bool operator==(const ImportanceState&) const = default;
};

// Diagonal empirical Fisher: mean over samples of the squared gradient of
// the ground-truth log-likelihood.
std::vector<double> ewc_importance(
    const model::Model& model,
    const std::vector<std::pair<data::FrameStack, int>>& labeled_clips);

// Mean over samples of |d ||logits||^2 / dtheta|; labels unused.
std::vector<double> mas_importance(const model::Model& model,
                                   const std::vector<data::FrameStack>& clips);

// lambda_reg * sum_i omega_i * (theta_i - anchor_i)^2. The state may cover a
// prefix of `params` (head rows added after the snapshot are unpenalized).
double regularization_penalty(const ImportanceState& state,
                              const std::vector<double>& params);
void add_regularization_gradient(const ImportanceState& state,
                                 const std::vector<double>& params,
                                 std::vector<double>& grad);

void save_importance_state(const ImportanceState& state, const std::string& path);
ImportanceState load_importance_state(const std::string& path);

// ---------------------------------------------------------------------------
// Temporal consistency loss (convex combination of the classification loss
// on a clip and on its temporally down-sampled version, same weights)

double tc_loss(const model::Model& model, const data::FrameStack& clip_full,
               const data::FrameStack& clip_down, int label_class_id, double lambda);

// Value plus accumulated parameter gradient. lambda = 0 and lambda = 1 skip
// the unused branch entirely, so those cases are exact.
double tc_loss_with_grad(const model::Model& model, const data::FrameStack& clip_full,
                         const data::FrameStack& clip_down, int label_class_id,
                         double lambda, std::vector<double>& grad);

// ---------------------------------------------------------------------------
// iCaRL pieces

// Sigmoid-activated old-model outputs, used as BCE targets for the old-class
// rows of the current model.
std::vector<double> icarl_distillation_targets(const std::vector<double>& old_model_logits);

// Full target vector over `total_rows` head rows: the first
// old_model_logits.size() rows take distillation targets, the rest are
// one-hot against label_row. With no old model, the whole vector is one-hot.
std::vector<double> icarl_targets(const std::vector<double>& old_model_logits,
                                  int total_rows, int label_row);

// Nearest-mean-of-exemplars inference. Prototypes are means of per-exemplar
// L2-normalized embeddings, re-normalized; queries are normalized the same
// way; ties break toward the lowest class id.
class NearestMeanClassifier {
 public:
  NearestMeanClassifier(const model::Model& model, const mem::EpisodicMemory& memory);
  int classify(const model::Model& model, const data::FrameStack& clip) const;

 private:
  std::map<int, std::vector<double>> prototypes_;
};

int nearest_mean_classify(const model::Model& model, const mem::EpisodicMemory& memory,
                          const data::FrameStack& clip);

// ---------------------------------------------------------------------------
// BiC bias correction

struct BiasCorrectionLayer {
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<int> new_class_ids;

  bool operator==(const BiasCorrectionLayer&) const = default;
};

// alpha * z + beta on new-class rows, identity elsewhere. head_classes maps
// each logit row to its class id.
std::vector<double> apply_bias_correction(const BiasCorrectionLayer& layer,
                                          const std::vector<double>& logits,
                                          const std::vector<int>& head_classes);

// Fits (alpha, beta) by minimizing cross-entropy of corrected logits over a
// held-out set; the backbone is frozen, so callers pass cached logits.
// new_row[r] marks the current task's rows.
BiasCorrectionLayer bic_fit_logits(const std::vector<std::vector<double>>& heldout_logits,
                                   const std::vector<int>& target_rows,
                                   const std::vector<bool>& new_row,
                                   const std::vector<int>& head_classes);

}  // namespace vidcl::methods
