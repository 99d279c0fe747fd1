#include "vidcl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vidcl/errors.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::model {

namespace {
constexpr int kK1 = 5, kS1 = 2, kP1 = 2;
constexpr int kK2 = 3, kS2 = 2, kP2 = 1;

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
}  // namespace

struct ReferenceModel::Activations {
  std::vector<double> in;    // h x w
  std::vector<double> act1;  // c1 x h1 x w1, post-relu
  std::vector<double> act2;  // c2 x h2 x w2, post-relu
};

ReferenceModel::ReferenceModel(const Config& cfg) : cfg_(cfg) {
  if (cfg.height < 8 || cfg.width < 8)
    throw ConfigError("reference model input must be at least 8x8");
  h1_ = conv_out(cfg.height, kK1, kS1, kP1);
  w1_ = conv_out(cfg.width, kK1, kS1, kP1);
  h2_ = conv_out(h1_, kK2, kS2, kP2);
  w2_ = conv_out(w1_, kK2, kS2, kP2);

  const int c1 = cfg.conv1_channels, c2 = cfg.conv2_channels;
  backbone_size_ = static_cast<std::size_t>(c1) * kK1 * kK1 + c1 +
                   static_cast<std::size_t>(c2) * c1 * kK2 * kK2 + c2;
  params_.assign(backbone_size_, 0.0);

  Rng rng(mix_seed(cfg.init_seed, "backbone-init"));
  const double std1 = std::sqrt(2.0 / (kK1 * kK1));
  const double std2 = std::sqrt(2.0 / (c1 * kK2 * kK2));
  std::size_t p = 0;
  for (int i = 0; i < c1 * kK1 * kK1; ++i) params_[p++] = std1 * rng.next_gaussian();
  p += c1;  // conv1 bias stays zero
  for (int i = 0; i < c2 * c1 * kK2 * kK2; ++i) params_[p++] = std2 * rng.next_gaussian();
}

void ReferenceModel::set_parameters(const std::vector<double>& params) {
  if (params.size() != params_.size())
    throw DataError("parameter vector size mismatch: " + std::to_string(params.size()) +
                    " vs " + std::to_string(params_.size()));
  params_ = params;
}

void ReferenceModel::expand_head(const std::vector<int>& new_class_ids) {
  for (int cls : new_class_ids) {
    if (logit_index_of(cls) >= 0)
      throw DataError("class " + std::to_string(cls) + " already in the head");
    Rng rng(mix_seed(cfg_.init_seed, "head-init", static_cast<std::uint64_t>(cls)));
    const double std_head = 1.0 / std::sqrt(static_cast<double>(feature_dim()));
    for (int d = 0; d < feature_dim(); ++d)
      params_.push_back(std_head * rng.next_gaussian());
    params_.push_back(0.0);  // bias
    head_classes_.push_back(cls);
  }
}

std::unique_ptr<Model> ReferenceModel::clone() const {
  return std::make_unique<ReferenceModel>(*this);
}

void ReferenceModel::frame_forward(const std::uint8_t* frame, Activations& act) const {
  const int h = cfg_.height, w = cfg_.width;
  const int c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
  act.in.resize(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h * w; ++i) act.in[i] = frame[i] / 255.0 - 0.5;

  const double* w1 = params_.data();
  const double* b1 = w1 + static_cast<std::size_t>(c1) * kK1 * kK1;
  const double* w2 = b1 + c1;
  const double* b2 = w2 + static_cast<std::size_t>(c2) * c1 * kK2 * kK2;

  act.act1.assign(static_cast<std::size_t>(c1) * h1_ * w1_, 0.0);
  for (int o = 0; o < c1; ++o) {
    const double* kw = w1 + static_cast<std::size_t>(o) * kK1 * kK1;
    double* out = act.act1.data() + static_cast<std::size_t>(o) * h1_ * w1_;
    for (int y = 0; y < h1_; ++y) {
      for (int x = 0; x < w1_; ++x) {
        double sum = b1[o];
        const int base_y = y * kS1 - kP1, base_x = x * kS1 - kP1;
        for (int ky = 0; ky < kK1; ++ky) {
          const int iy = base_y + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kK1; ++kx) {
            const int ix = base_x + kx;
            if (ix < 0 || ix >= w) continue;
            sum += kw[ky * kK1 + kx] * act.in[static_cast<std::size_t>(iy) * w + ix];
          }
        }
        out[y * w1_ + x] = sum > 0.0 ? sum : 0.0;
      }
    }
  }

  act.act2.assign(static_cast<std::size_t>(c2) * h2_ * w2_, 0.0);
  for (int o = 0; o < c2; ++o) {
    double* out = act.act2.data() + static_cast<std::size_t>(o) * h2_ * w2_;
    for (int y = 0; y < h2_; ++y) {
      for (int x = 0; x < w2_; ++x) {
        double sum = b2[o];
        const int base_y = y * kS2 - kP2, base_x = x * kS2 - kP2;
        for (int i = 0; i < c1; ++i) {
          const double* kw =
              w2 + (static_cast<std::size_t>(o) * c1 + i) * kK2 * kK2;
          const double* a1 = act.act1.data() + static_cast<std::size_t>(i) * h1_ * w1_;
          for (int ky = 0; ky < kK2; ++ky) {
            const int iy = base_y + ky;
            if (iy < 0 || iy >= h1_) continue;
            for (int kx = 0; kx < kK2; ++kx) {
              const int ix = base_x + kx;
              if (ix < 0 || ix >= w1_) continue;
              sum += kw[ky * kK2 + kx] * a1[iy * w1_ + ix];
            }
          }
        }
        out[y * w2_ + x] = sum > 0.0 ? sum : 0.0;
      }
    }
  }
}

std::vector<double> ReferenceModel::features(const data::FrameStack& clip) const {
  if (clip.height != cfg_.height || clip.width != cfg_.width)
    throw DataError("clip size does not match the model input size");
  if (clip.frames < 1) throw DataError("clip has no frames");
  const int c2 = cfg_.conv2_channels;
  std::vector<double> feat(c2, 0.0);
  Activations act;
  const double inv_area = 1.0 / (h2_ * w2_);
  for (int f = 0; f < clip.frames; ++f) {
    frame_forward(clip.data.data() + static_cast<std::size_t>(f) * clip.frame_bytes(),
                  act);
    for (int c = 0; c < c2; ++c) {
      double sum = 0.0;
      const double* a = act.act2.data() + static_cast<std::size_t>(c) * h2_ * w2_;
      for (int i = 0; i < h2_ * w2_; ++i) sum += a[i];
      feat[c] += sum * inv_area;
    }
  }
  for (auto& v : feat) v /= clip.frames;
  return feat;
}

std::vector<double> ReferenceModel::forward(const data::FrameStack& clip) const {
  const auto feat = features(clip);
  const int nc = num_classes();
  const double* head = params_.data() + backbone_size_;
  std::vector<double> logits(nc, 0.0);
  for (int r = 0; r < nc; ++r) {
    const double* row = head + static_cast<std::size_t>(r) * (feature_dim() + 1);
    double sum = row[feature_dim()];
    for (int d = 0; d < feature_dim(); ++d) sum += row[d] * feat[d];
    logits[r] = sum;
  }
  return logits;
}

void ReferenceModel::accumulate_vjp(const data::FrameStack& clip,
                                    const std::vector<double>& dlogits,
                                    std::vector<double>& grad) const {
  if (clip.height != cfg_.height || clip.width != cfg_.width)
    throw DataError("clip size does not match the model input size");
  if (static_cast<int>(dlogits.size()) != num_classes())
    throw DataError("dlogits size does not match the head");
  if (grad.size() != params_.size())
    throw DataError("gradient buffer size mismatch");

  const int c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
  const int h = cfg_.height, w = cfg_.width;
  const int fd = feature_dim(), nc = num_classes();
  const double inv_area = 1.0 / (h2_ * w2_);

  // pass 1: per-frame activations and the pooled video feature
  std::vector<Activations> acts(clip.frames);
  std::vector<double> feat(fd, 0.0);
  for (int f = 0; f < clip.frames; ++f) {
    frame_forward(clip.data.data() + static_cast<std::size_t>(f) * clip.frame_bytes(),
                  acts[f]);
    for (int c = 0; c < c2; ++c) {
      double sum = 0.0;
      const double* a = acts[f].act2.data() + static_cast<std::size_t>(c) * h2_ * w2_;
      for (int i = 0; i < h2_ * w2_; ++i) sum += a[i];
      feat[c] += sum * inv_area;
    }
  }
  for (auto& v : feat) v /= clip.frames;

  // head gradients and the pooled-feature cotangent
  const double* head = params_.data() + backbone_size_;
  double* ghead = grad.data() + backbone_size_;
  std::vector<double> dfeat(fd, 0.0);
  for (int r = 0; r < nc; ++r) {
    const double g = dlogits[r];
    if (g == 0.0) continue;
    const double* row = head + static_cast<std::size_t>(r) * (fd + 1);
    double* grow = ghead + static_cast<std::size_t>(r) * (fd + 1);
    for (int d = 0; d < fd; ++d) {
      grow[d] += g * feat[d];
      dfeat[d] += g * row[d];
    }
    grow[fd] += g;
  }

  const double* w2p = params_.data() + static_cast<std::size_t>(c1) * kK1 * kK1 + c1;
  double* gw1 = grad.data();
  double* gb1 = gw1 + static_cast<std::size_t>(c1) * kK1 * kK1;
  double* gw2 = gb1 + c1;
  double* gb2 = gw2 + static_cast<std::size_t>(c2) * c1 * kK2 * kK2;

  // pass 2: backprop each frame through pooling and both convolutions
  std::vector<double> dact1(static_cast<std::size_t>(c1) * h1_ * w1_);
  for (int f = 0; f < clip.frames; ++f) {
    const Activations& act = acts[f];
    std::fill(dact1.begin(), dact1.end(), 0.0);
    for (int o = 0; o < c2; ++o) {
      const double dpool = dfeat[o] * inv_area / clip.frames;
      if (dpool == 0.0) continue;
      const double* a2 = act.act2.data() + static_cast<std::size_t>(o) * h2_ * w2_;
      for (int y = 0; y < h2_; ++y) {
        for (int x = 0; x < w2_; ++x) {
          if (a2[y * w2_ + x] <= 0.0) continue;  // relu gate
          const double dz = dpool;
          gb2[o] += dz;
          const int base_y = y * kS2 - kP2, base_x = x * kS2 - kP2;
          for (int i = 0; i < c1; ++i) {
            const double* kw = w2p + (static_cast<std::size_t>(o) * c1 + i) * kK2 * kK2;
            double* gkw = gw2 + (static_cast<std::size_t>(o) * c1 + i) * kK2 * kK2;
            const double* a1 = act.act1.data() + static_cast<std::size_t>(i) * h1_ * w1_;
            double* d1 = dact1.data() + static_cast<std::size_t>(i) * h1_ * w1_;
            for (int ky = 0; ky < kK2; ++ky) {
              const int iy = base_y + ky;
              if (iy < 0 || iy >= h1_) continue;
              for (int kx = 0; kx < kK2; ++kx) {
                const int ix = base_x + kx;
                if (ix < 0 || ix >= w1_) continue;
                gkw[ky * kK2 + kx] += dz * a1[iy * w1_ + ix];
                d1[iy * w1_ + ix] += dz * kw[ky * kK2 + kx];
              }
            }
          }
        }
      }
    }

    for (int o = 0; o < c1; ++o) {
      const double* a1 = act.act1.data() + static_cast<std::size_t>(o) * h1_ * w1_;
      const double* d1 = dact1.data() + static_cast<std::size_t>(o) * h1_ * w1_;
      double* gkw = gw1 + static_cast<std::size_t>(o) * kK1 * kK1;
      for (int y = 0; y < h1_; ++y) {
        for (int x = 0; x < w1_; ++x) {
          const double dz = d1[y * w1_ + x];
          if (dz == 0.0 || a1[y * w1_ + x] <= 0.0) continue;
          gb1[o] += dz;
          const int base_y = y * kS1 - kP1, base_x = x * kS1 - kP1;
          for (int ky = 0; ky < kK1; ++ky) {
            const int iy = base_y + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kK1; ++kx) {
              const int ix = base_x + kx;
              if (ix < 0 || ix >= w) continue;
              gkw[ky * kK1 + kx] += dz * act.in[static_cast<std::size_t>(iy) * w + ix];
            }
          }
        }
      }
    }
  }
}

void ReferenceModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model '" + path + "'");
  const char magic[4] = {'V', 'C', 'L', 'M'};
  out.write(magic, 4);
  const std::int32_t dims[4] = {cfg_.height, cfg_.width, cfg_.conv1_channels,
                                cfg_.conv2_channels};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(&cfg_.init_seed), sizeof(cfg_.init_seed));
  const std::uint64_t n_head = head_classes_.size();
  out.write(reinterpret_cast<const char*>(&n_head), sizeof(n_head));
  for (int cls : head_classes_) {
    const std::int32_t c = cls;
    out.write(reinterpret_cast<const char*>(&c), sizeof(c));
  }
  const std::uint64_t n_params = params_.size();
  out.write(reinterpret_cast<const char*>(&n_params), sizeof(n_params));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
}

ReferenceModel ReferenceModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VCLM", 4) != 0)
    throw DataError("'" + path + "' is not a model checkpoint");
  std::int32_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Config cfg;
  cfg.height = dims[0];
  cfg.width = dims[1];
  cfg.conv1_channels = dims[2];
  cfg.conv2_channels = dims[3];
  in.read(reinterpret_cast<char*>(&cfg.init_seed), sizeof(cfg.init_seed));
  ReferenceModel model(cfg);
  std::uint64_t n_head = 0;
  in.read(reinterpret_cast<char*>(&n_head), sizeof(n_head));
  std::vector<int> head(n_head);
  for (auto& cls : head) {
    std::int32_t c = 0;
    in.read(reinterpret_cast<char*>(&c), sizeof(c));
    cls = c;
  }
  model.expand_head(head);
  std::uint64_t n_params = 0;
  in.read(reinterpret_cast<char*>(&n_params), sizeof(n_params));
  if (n_params != model.params_.size())
    throw DataError("model checkpoint parameter count mismatch");
  in.read(reinterpret_cast<char*>(model.params_.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  if (!in) throw DataError("model checkpoint is truncated");
  return model;
}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw DataError("Adam: gradient size mismatch");
  if (m_.size() < params.size()) {
    m_.resize(params.size(), 0.0);
    v_.resize(params.size(), 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

}  // namespace vidcl::model
