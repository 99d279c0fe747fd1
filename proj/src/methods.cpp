#include "vidcl/methods.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vidcl/errors.hpp"

namespace vidcl::methods {

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossGrad cross_entropy(const std::vector<double>& logits, int target_index) {
  if (target_index < 0 || target_index >= static_cast<int>(logits.size()))
    throw DataError("cross-entropy target outside the current head");
  LossGrad out;
  out.dlogits = softmax(logits);
  out.value = -std::log(std::max(out.dlogits[target_index], 1e-300));
  out.dlogits[target_index] -= 1.0;
  return out;
}

namespace {
double softplus(double z) {
  // log(1 + e^z) without overflow
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

LossGrad bce_with_logits(const std::vector<double>& logits,
                         const std::vector<double>& targets) {
  if (logits.size() != targets.size())
    throw DataError("BCE target size does not match the logits");
  LossGrad out;
  out.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.value += softplus(logits[i]) - targets[i] * logits[i];
    out.dlogits[i] = sigmoid(logits[i]) - targets[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> ewc_importance(
    const model::Model& model,
    const std::vector<std::pair<data::FrameStack, int>>& labeled_clips) {
  if (labeled_clips.empty()) throw DataError("ewc_importance: empty data stream");
  std::vector<double> omega(model.parameter_count(), 0.0);
  std::vector<double> grad(model.parameter_count());
  for (const auto& [clip, class_id] : labeled_clips) {
    const int row = model.logit_index_of(class_id);
    if (row < 0)
      throw DataError("ewc_importance: label " + std::to_string(class_id) +
                      " outside the current head");
    const auto logits = model.forward(clip);
    // d(-log p)/dz = softmax - onehot; squared, the sign is irrelevant
    auto lg = cross_entropy(logits, row);
    std::fill(grad.begin(), grad.end(), 0.0);
    model.accumulate_vjp(clip, lg.dlogits, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) omega[i] += grad[i] * grad[i];
  }
  for (auto& v : omega) v /= static_cast<double>(labeled_clips.size());
  return omega;
}

std::vector<double> mas_importance(const model::Model& model,
                                   const std::vector<data::FrameStack>& clips) {
  if (clips.empty()) throw DataError("mas_importance: empty data stream");
  std::vector<double> omega(model.parameter_count(), 0.0);
  std::vector<double> grad(model.parameter_count());
  for (const auto& clip : clips) {
    auto logits = model.forward(clip);
    for (auto& z : logits) z *= 2.0;  // d ||z||^2 / dz
    std::fill(grad.begin(), grad.end(), 0.0);
    model.accumulate_vjp(clip, logits, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) omega[i] += std::fabs(grad[i]);
  }
  for (auto& v : omega) v /= static_cast<double>(clips.size());
  return omega;
}

double regularization_penalty(const ImportanceState& state,
                              const std::vector<double>& params) {
  if (state.omega.size() != state.anchor.size())
    throw DataError("importance state omega/anchor size mismatch");
  if (state.omega.size() > params.size())
    throw DataError("importance state larger than the parameter vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < state.omega.size(); ++i) {
    const double d = params[i] - state.anchor[i];
    sum += state.omega[i] * d * d;
  }
  return state.lambda_reg * sum;
}

void add_regularization_gradient(const ImportanceState& state,
                                 const std::vector<double>& params,
                                 std::vector<double>& grad) {
  if (state.omega.size() > params.size() || grad.size() != params.size())
    throw DataError("importance state larger than the parameter vector");
  for (std::size_t i = 0; i < state.omega.size(); ++i)
    grad[i] += 2.0 * state.lambda_reg * state.omega[i] * (params[i] - state.anchor[i]);
}

void save_importance_state(const ImportanceState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write importance state '" + path + "'");
  const std::uint64_t n = state.omega.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(state.omega.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  out.write(reinterpret_cast<const char*>(state.anchor.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  out.write(reinterpret_cast<const char*>(&state.lambda_reg), sizeof(double));
}

ImportanceState load_importance_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open importance state '" + path + "'");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  ImportanceState state;
  state.omega.resize(n);
  state.anchor.resize(n);
  in.read(reinterpret_cast<char*>(state.omega.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  in.read(reinterpret_cast<char*>(state.anchor.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  in.read(reinterpret_cast<char*>(&state.lambda_reg), sizeof(double));
  if (!in) throw DataError("importance state '" + path + "' is truncated");
  return state;
}

// ---------------------------------------------------------------------------

namespace {
int tc_label_row(const model::Model& model, int label_class_id, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("temporal consistency lambda must be in [0, 1]");
  const int row = model.logit_index_of(label_class_id);
  if (row < 0)
    throw DataError("tc_loss: label " + std::to_string(label_class_id) +
                    " outside the current head");
  return row;
}
}  // namespace

double tc_loss(const model::Model& model, const data::FrameStack& clip_full,
               const data::FrameStack& clip_down, int label_class_id, double lambda) {
  const int row = tc_label_row(model, label_class_id, lambda);
  double value = 0.0;
  if (lambda < 1.0)
    value += (1.0 - lambda) * cross_entropy(model.forward(clip_full), row).value;
  if (lambda > 0.0)
    value += lambda * cross_entropy(model.forward(clip_down), row).value;
  return value;
}

double tc_loss_with_grad(const model::Model& model, const data::FrameStack& clip_full,
                         const data::FrameStack& clip_down, int label_class_id,
                         double lambda, std::vector<double>& grad) {
  const int row = tc_label_row(model, label_class_id, lambda);
  double value = 0.0;
  if (lambda < 1.0) {
    auto lg = cross_entropy(model.forward(clip_full), row);
    value += (1.0 - lambda) * lg.value;
    for (auto& g : lg.dlogits) g *= (1.0 - lambda);
    model.accumulate_vjp(clip_full, lg.dlogits, grad);
  }
  if (lambda > 0.0) {
    auto lg = cross_entropy(model.forward(clip_down), row);
    value += lambda * lg.value;
    for (auto& g : lg.dlogits) g *= lambda;
    model.accumulate_vjp(clip_down, lg.dlogits, grad);
  }
  return value;
}

// ---------------------------------------------------------------------------

std::vector<double> icarl_distillation_targets(
    const std::vector<double>& old_model_logits) {
  std::vector<double> targets(old_model_logits.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    targets[i] = sigmoid(old_model_logits[i]);
  return targets;
}

std::vector<double> icarl_targets(const std::vector<double>& old_model_logits,
                                  int total_rows, int label_row) {
  if (static_cast<int>(old_model_logits.size()) > total_rows)
    throw DataError("old model has more classes than the current head");
  if (label_row < 0 || label_row >= total_rows)
    throw DataError("icarl_targets: label outside the current head");
  std::vector<double> targets(total_rows, 0.0);
  const auto distill = icarl_distillation_targets(old_model_logits);
  std::copy(distill.begin(), distill.end(), targets.begin());
  if (label_row >= static_cast<int>(distill.size())) targets[label_row] = 1.0;
  return targets;
}

namespace {
void l2_normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (auto& x : v) x /= norm;
}
}  // namespace

NearestMeanClassifier::NearestMeanClassifier(const model::Model& model,
                                             const mem::EpisodicMemory& memory) {
  if (memory.empty()) throw DataError("nearest-mean inference needs a non-empty memory");
  for (const auto& [cls, entries] : memory.entries_by_class()) {
    if (entries.empty())
      throw DataError("class " + std::to_string(cls) + " has no exemplars in memory");
    std::vector<double> proto(model.feature_dim(), 0.0);
    for (const auto& e : entries) {
      auto f = model.features(e.stored_frames);
      l2_normalize(f);
      for (std::size_t d = 0; d < proto.size(); ++d) proto[d] += f[d];
    }
    for (auto& v : proto) v /= static_cast<double>(entries.size());
    l2_normalize(proto);
    prototypes_[cls] = std::move(proto);
  }
}

int NearestMeanClassifier::classify(const model::Model& model,
                                    const data::FrameStack& clip) const {
  auto query = model.features(clip);
  l2_normalize(query);
  int best_cls = -1;
  double best_dist = 0.0;
  for (const auto& [cls, proto] : prototypes_) {  // map order: lowest id wins ties
    double dist = 0.0;
    for (std::size_t d = 0; d < proto.size(); ++d) {
      const double delta = query[d] - proto[d];
      dist += delta * delta;
    }
    if (best_cls < 0 || dist < best_dist) {
      best_cls = cls;
      best_dist = dist;
    }
  }
  return best_cls;
}

int nearest_mean_classify(const model::Model& model, const mem::EpisodicMemory& memory,
                          const data::FrameStack& clip) {
  return NearestMeanClassifier(model, memory).classify(model, clip);
}

// ---------------------------------------------------------------------------

std::vector<double> apply_bias_correction(const BiasCorrectionLayer& layer,
                                          const std::vector<double>& logits,
                                          const std::vector<int>& head_classes) {
  if (logits.size() != head_classes.size())
    throw DataError("bias correction: head mapping size mismatch");
  std::vector<double> out = logits;
  for (std::size_t r = 0; r < out.size(); ++r) {
    if (std::find(layer.new_class_ids.begin(), layer.new_class_ids.end(),
                  head_classes[r]) != layer.new_class_ids.end())
      out[r] = layer.alpha * out[r] + layer.beta;
  }
  return out;
}

BiasCorrectionLayer bic_fit_logits(const std::vector<std::vector<double>>& heldout_logits,
                                   const std::vector<int>& target_rows,
                                   const std::vector<bool>& new_row,
                                   const std::vector<int>& head_classes) {
  if (heldout_logits.empty()) throw DataError("bic_fit: empty held-out set");
  if (heldout_logits.size() != target_rows.size())
    throw DataError("bic_fit: logits/targets size mismatch");
  bool has_old = false, has_new = false;
  for (int row : target_rows) {
    if (row < 0 || row >= static_cast<int>(new_row.size()))
      throw DataError("bic_fit: target row out of range");
    (new_row[row] ? has_new : has_old) = true;
  }
  if (!has_old || !has_new)
    throw DataError("bic_fit: held-out set must contain both old and new classes");

  double alpha = 1.0, beta = 0.0;
  // Adam on the two scalars; the inputs are cached logits, so iterations are
  // cheap and the fit is deterministic.
  double m_a = 0, v_a = 0, m_b = 0, v_b = 0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const int iters = 500;
  const double inv_n = 1.0 / static_cast<double>(heldout_logits.size());
  std::vector<double> corrected;
  for (int t = 1; t <= iters; ++t) {
    double ga = 0.0, gb = 0.0;
    for (std::size_t s = 0; s < heldout_logits.size(); ++s) {
      const auto& z = heldout_logits[s];
      corrected = z;
      for (std::size_t r = 0; r < z.size(); ++r)
        if (new_row[r]) corrected[r] = alpha * z[r] + beta;
      auto lg = cross_entropy(corrected, target_rows[s]);
      for (std::size_t r = 0; r < z.size(); ++r) {
        if (!new_row[r]) continue;
        ga += lg.dlogits[r] * z[r] * inv_n;
        gb += lg.dlogits[r] * inv_n;
      }
    }
    m_a = b1 * m_a + (1 - b1) * ga;
    v_a = b2 * v_a + (1 - b2) * ga * ga;
    m_b = b1 * m_b + (1 - b1) * gb;
    v_b = b2 * v_b + (1 - b2) * gb * gb;
    const double bc1 = 1 - std::pow(b1, t), bc2 = 1 - std::pow(b2, t);
    alpha -= lr * (m_a / bc1) / (std::sqrt(v_a / bc2) + eps);
    beta -= lr * (m_b / bc1) / (std::sqrt(v_b / bc2) + eps);
  }

  BiasCorrectionLayer layer;
  layer.alpha = alpha;
  layer.beta = beta;
  for (std::size_t r = 0; r < new_row.size(); ++r)
    if (new_row[r]) layer.new_class_ids.push_back(head_classes[r]);
  return layer;
}

}  // namespace vidcl::methods
