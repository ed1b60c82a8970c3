#include "textmania/nets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "textmania/binio.hpp"
#include "textmania/errors.hpp"

namespace textmania {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void init_uniform_fanin(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      p.value(r, c) =
          static_cast<float>((uniform_real(rng) * 2.0 - 1.0) * bound);
    }
  }
}

Eigen::MatrixXf mix_rows(const Eigen::MatrixXf& h, const ManifoldMixHook& mix,
                         int rows_per_sample) {
  const int n = static_cast<int>(h.rows()) / rows_per_sample;
  if (static_cast<int>(mix.partner.size()) != n) {
    throw ShapeError("mix hook covers " + std::to_string(mix.partner.size()) +
                     " samples, batch has " + std::to_string(n));
  }
  Eigen::MatrixXf out(h.rows(), h.cols());
  for (int i = 0; i < n; ++i) {
    const int j = mix.partner[static_cast<std::size_t>(i)];
    if (j < 0 || j >= n) {
      throw ShapeError("mix partner " + std::to_string(j) + " outside batch");
    }
    out.middleRows(i * rows_per_sample, rows_per_sample) =
        mix.lambda * h.middleRows(i * rows_per_sample, rows_per_sample) +
        (1.0f - mix.lambda) *
            h.middleRows(j * rows_per_sample, rows_per_sample);
  }
  return out;
}

Eigen::MatrixXf mix_rows_backward(const Eigen::MatrixXf& dh,
                                  const ManifoldMixHook& mix,
                                  int rows_per_sample) {
  const int n = static_cast<int>(dh.rows()) / rows_per_sample;
  Eigen::MatrixXf out = mix.lambda * dh;
  for (int i = 0; i < n; ++i) {
    const int j = mix.partner[static_cast<std::size_t>(i)];
    out.middleRows(j * rows_per_sample, rows_per_sample) +=
        (1.0f - mix.lambda) * dh.middleRows(i * rows_per_sample,
                                            rows_per_sample);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad,
               std::uint64_t seed)
    : in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad) {
  if (in_c < 1 || out_c < 1 || kernel < 1 || stride < 1 || pad < 0) {
    throw ConfigError("bad conv geometry");
  }
  weight_.setup(out_c, in_c * kernel * kernel);
  Rng rng = derive_rng(seed, fnv1a64("conv-init"));
  init_uniform_fanin(weight_, in_c * kernel * kernel, rng);
}

Eigen::MatrixXf Conv2d::im2col(const Eigen::VectorXf& sample) const {
  const int oh = out_h(h_);
  const int ow = out_w(w_);
  Eigen::MatrixXf col =
      Eigen::MatrixXf::Zero(in_c_ * kernel_ * kernel_, oh * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int p = oy * ow + ox;
      for (int c = 0; c < in_c_; ++c) {
        for (int ky = 0; ky < kernel_; ++ky) {
          const int sy = oy * stride_ - pad_ + ky;
          if (sy < 0 || sy >= h_) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int sx = ox * stride_ - pad_ + kx;
            if (sx < 0 || sx >= w_) continue;
            col((c * kernel_ + ky) * kernel_ + kx, p) =
                sample((c * h_ + sy) * w_ + sx);
          }
        }
      }
    }
  }
  return col;
}

Eigen::MatrixXf Conv2d::forward(const Eigen::MatrixXf& x, int h, int w) {
  if (x.cols() != static_cast<Eigen::Index>(in_c_) * h * w) {
    throw ShapeError("conv input has " + std::to_string(x.cols()) +
                     " values per sample, expected " +
                     std::to_string(in_c_ * h * w));
  }
  h_ = h;
  w_ = w;
  cache_x_ = x;
  const int oh = out_h(h);
  const int ow = out_w(w);
  Eigen::MatrixXf out(x.rows(), static_cast<Eigen::Index>(out_c_) * oh * ow);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::MatrixXf col = im2col(x.row(i).transpose());
    const Eigen::MatrixXf y = weight_.value * col;  // out_c x (oh*ow)
    for (int c = 0; c < out_c_; ++c) {
      out.block(i, static_cast<Eigen::Index>(c) * oh * ow, 1, oh * ow) =
          y.row(c);
    }
  }
  return out;
}

Eigen::MatrixXf Conv2d::backward(const Eigen::MatrixXf& dy) {
  const int oh = out_h(h_);
  const int ow = out_w(w_);
  const int spatial = oh * ow;
  Eigen::MatrixXf dx = Eigen::MatrixXf::Zero(cache_x_.rows(), cache_x_.cols());
  Eigen::MatrixXf dy_s(out_c_, spatial);
  for (Eigen::Index i = 0; i < cache_x_.rows(); ++i) {
    for (int c = 0; c < out_c_; ++c) {
      dy_s.row(c) =
          dy.block(i, static_cast<Eigen::Index>(c) * spatial, 1, spatial);
    }
    const Eigen::MatrixXf col = im2col(cache_x_.row(i).transpose());
    weight_.grad.noalias() += dy_s * col.transpose();
    const Eigen::MatrixXf dcol = weight_.value.transpose() * dy_s;
    // col2im: scatter-add the column gradients back to input pixels.
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const int p = oy * ow + ox;
        for (int c = 0; c < in_c_; ++c) {
          for (int ky = 0; ky < kernel_; ++ky) {
            const int sy = oy * stride_ - pad_ + ky;
            if (sy < 0 || sy >= h_) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int sx = ox * stride_ - pad_ + kx;
              if (sx < 0 || sx >= w_) continue;
              dx(i, (c * h_ + sy) * w_ + sx) +=
                  dcol((c * kernel_ + ky) * kernel_ + kx, p);
            }
          }
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels) : channels_(channels) {
  gamma_.setup(channels, 1);
  gamma_.value.setOnes();
  beta_.setup(channels, 1);
  running_mean_ = Eigen::MatrixXf::Zero(channels, 1);
  running_var_ = Eigen::MatrixXf::Ones(channels, 1);
}

Eigen::MatrixXf BatchNorm2d::forward(const Eigen::MatrixXf& x, int h, int w,
                                     bool train) {
  h_ = h;
  w_ = w;
  const int spatial = h * w;
  const Eigen::Index n = x.rows();
  Eigen::MatrixXf out(n, x.cols());
  if (train) {
    cache_xhat_.resize(n, x.cols());
    cache_inv_std_.resize(channels_);
  }
  for (int c = 0; c < channels_; ++c) {
    const auto block = x.middleCols(static_cast<Eigen::Index>(c) * spatial,
                                    spatial);
    float mean, var;
    if (train) {
      const double m = static_cast<double>(n) * spatial;
      const double mu = block.cast<double>().sum() / m;
      const double sq =
          (block.cast<double>().array() - mu).square().sum() / m;
      mean = static_cast<float>(mu);
      var = static_cast<float>(sq);
      const double unbiased = m > 1 ? sq * m / (m - 1) : sq;
      running_mean_(c, 0) =
          (1.0f - momentum_) * running_mean_(c, 0) + momentum_ * mean;
      running_var_(c, 0) = (1.0f - momentum_) * running_var_(c, 0) +
                           momentum_ * static_cast<float>(unbiased);
    } else {
      mean = running_mean_(c, 0);
      var = running_var_(c, 0);
    }
    const float inv_std = 1.0f / std::sqrt(var + eps_);
    const auto xhat = (block.array() - mean) * inv_std;
    out.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
        (xhat * gamma_.value(c, 0) + beta_.value(c, 0)).matrix();
    if (train) {
      cache_xhat_.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
          xhat.matrix();
      cache_inv_std_(c) = inv_std;
    }
  }
  return out;
}

Eigen::MatrixXf BatchNorm2d::backward(const Eigen::MatrixXf& dy) {
  const int spatial = h_ * w_;
  const Eigen::Index n = dy.rows();
  const double m = static_cast<double>(n) * spatial;
  Eigen::MatrixXf dx(n, dy.cols());
  for (int c = 0; c < channels_; ++c) {
    const auto dy_b =
        dy.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial);
    const auto xhat_b =
        cache_xhat_.middleCols(static_cast<Eigen::Index>(c) * spatial,
                               spatial);
    const double sum_dy = dy_b.cast<double>().sum();
    const double sum_dy_xhat =
        (dy_b.array() * xhat_b.array()).cast<double>().sum();
    gamma_.grad(c, 0) += static_cast<float>(sum_dy_xhat);
    beta_.grad(c, 0) += static_cast<float>(sum_dy);
    const double g = gamma_.value(c, 0);
    const double inv_std = cache_inv_std_(c);
    dx.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
        ((dy_b.array().cast<double>() * m - sum_dy -
          xhat_b.array().cast<double>() * sum_dy_xhat) *
         (g * inv_std / m))
            .cast<float>()
            .matrix();
  }
  return dx;
}

// ------------------------------------------------------------------ ReLU

Eigen::MatrixXf ReLU::forward(const Eigen::MatrixXf& x) {
  cache_mask_ = (x.array() > 0.0f).cast<float>().matrix();
  return x.cwiseMax(0.0f);
}

Eigen::MatrixXf ReLU::backward(const Eigen::MatrixXf& dy) {
  return dy.cwiseProduct(cache_mask_);
}

// --------------------------------------------------------- GlobalAvgPool

Eigen::MatrixXf GlobalAvgPool::forward(const Eigen::MatrixXf& x, int channels,
                                       int h, int w) {
  channels_ = channels;
  h_ = h;
  w_ = w;
  const int spatial = h * w;
  Eigen::MatrixXf out(x.rows(), channels);
  for (int c = 0; c < channels; ++c) {
    out.col(c) = x.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial)
                     .rowwise()
                     .mean();
  }
  return out;
}

Eigen::MatrixXf GlobalAvgPool::backward(const Eigen::MatrixXf& dy) {
  const int spatial = h_ * w_;
  Eigen::MatrixXf dx(dy.rows(),
                     static_cast<Eigen::Index>(channels_) * spatial);
  for (int c = 0; c < channels_; ++c) {
    dx.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
        (dy.col(c) / static_cast<float>(spatial)).replicate(1, spatial);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_dim, int out_dim, std::uint64_t seed)
    : in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim < 1 || out_dim < 1) {
    throw ConfigError("linear dims must be positive");
  }
  weight_.setup(out_dim, in_dim);
  bias_.setup(out_dim, 1);
  Rng rng = derive_rng(seed, fnv1a64("linear-init"));
  init_uniform_fanin(weight_, in_dim, rng);
}

Eigen::MatrixXf Linear::forward(const Eigen::MatrixXf& x) {
  if (x.cols() != in_dim_) {
    throw ShapeError("linear expects dim " + std::to_string(in_dim_) +
                     ", got " + std::to_string(x.cols()));
  }
  cache_x_ = x;
  return (x * weight_.value.transpose()).rowwise() +
         bias_.value.col(0).transpose();
}

Eigen::MatrixXf Linear::backward(const Eigen::MatrixXf& dy) {
  weight_.grad.noalias() += dy.transpose() * cache_x_;
  bias_.grad.col(0) += dy.colwise().sum().transpose();
  return dy * weight_.value;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(int dim) : dim_(dim) {
  gamma_.setup(dim, 1);
  gamma_.value.setOnes();
  beta_.setup(dim, 1);
}

Eigen::MatrixXf LayerNorm::forward(const Eigen::MatrixXf& x) {
  if (x.cols() != dim_) {
    throw ShapeError("layernorm expects dim " + std::to_string(dim_) +
                     ", got " + std::to_string(x.cols()));
  }
  cache_xhat_.resize(x.rows(), x.cols());
  cache_inv_std_.resize(x.rows());
  Eigen::MatrixXf out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).cast<double>().mean();
    const double var =
        (x.row(i).cast<double>().array() - mu).square().mean();
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    cache_inv_std_(i) = inv_std;
    cache_xhat_.row(i) =
        ((x.row(i).array() - static_cast<float>(mu)) * inv_std).matrix();
    out.row(i) =
        (cache_xhat_.row(i).array() * gamma_.value.col(0).transpose().array() +
         beta_.value.col(0).transpose().array())
            .matrix();
  }
  return out;
}

Eigen::MatrixXf LayerNorm::backward(const Eigen::MatrixXf& dy) {
  Eigen::MatrixXf dx(dy.rows(), dy.cols());
  const double d = static_cast<double>(dim_);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Eigen::ArrayXd dxhat =
        dy.row(i).transpose().array().cast<double>() *
        gamma_.value.col(0).array().cast<double>();
    const Eigen::ArrayXd xhat =
        cache_xhat_.row(i).transpose().array().cast<double>();
    const double sum_dxhat = dxhat.sum();
    const double sum_dxhat_xhat = (dxhat * xhat).sum();
    dx.row(i) = ((dxhat * d - sum_dxhat - xhat * sum_dxhat_xhat) *
                 (cache_inv_std_(i) / d))
                    .cast<float>()
                    .matrix()
                    .transpose();
  }
  gamma_.grad.col(0) +=
      (dy.array() * cache_xhat_.array()).colwise().sum().matrix().transpose();
  beta_.grad.col(0) += dy.colwise().sum().transpose();
  return dx;
}

// ------------------------------------------------------------------ Gelu

Eigen::MatrixXf Gelu::forward(const Eigen::MatrixXf& x) {
  cache_x_ = x;
  return x.unaryExpr([](float v) {
    return static_cast<float>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  });
}

Eigen::MatrixXf Gelu::backward(const Eigen::MatrixXf& dy) {
  const Eigen::MatrixXf dgelu = cache_x_.unaryExpr([](float v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return static_cast<float>(cdf + v * pdf);
  });
  return dy.cwiseProduct(dgelu);
}

// --------------------------------------------------- MultiHeadSelfAttention

MultiHeadSelfAttention::MultiHeadSelfAttention(int dim, int heads,
                                               std::uint64_t seed)
    : dim_(dim),
      heads_(heads),
      head_dim_(dim / heads),
      wq_(dim, dim, seed ^ 0x71u),
      wk_(dim, dim, seed ^ 0x72u),
      wv_(dim, dim, seed ^ 0x73u),
      wo_(dim, dim, seed ^ 0x74u) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) +
                      " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

std::vector<Param*> MultiHeadSelfAttention::params() {
  std::vector<Param*> out;
  for (auto* l : {&wq_, &wk_, &wv_, &wo_}) {
    for (auto* p : l->params()) out.push_back(p);
  }
  return out;
}

Eigen::MatrixXf MultiHeadSelfAttention::forward(const Eigen::MatrixXf& tokens,
                                                int n, int t) {
  n_ = n;
  t_ = t;
  cache_q_ = wq_.forward(tokens);
  cache_k_ = wk_.forward(tokens);
  cache_v_ = wv_.forward(tokens);
  cache_attn_.assign(static_cast<std::size_t>(n),
                     Eigen::MatrixXf(heads_ * t, t));
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
  Eigen::MatrixXf concat(tokens.rows(), dim_);
  for (int s = 0; s < n; ++s) {
    for (int h = 0; h < heads_; ++h) {
      const auto q = cache_q_.block(s * t, h * head_dim_, t, head_dim_);
      const auto k = cache_k_.block(s * t, h * head_dim_, t, head_dim_);
      const auto v = cache_v_.block(s * t, h * head_dim_, t, head_dim_);
      Eigen::MatrixXf scores = q * k.transpose() * scale;
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const float mx = scores.row(r).maxCoeff();
        Eigen::ArrayXf e = (scores.row(r).array() - mx).exp();
        scores.row(r) = (e / e.sum()).matrix();
      }
      cache_attn_[static_cast<std::size_t>(s)].middleRows(h * t, t) = scores;
      concat.block(s * t, h * head_dim_, t, head_dim_).noalias() = scores * v;
    }
  }
  return wo_.forward(concat);
}

Eigen::MatrixXf MultiHeadSelfAttention::backward(const Eigen::MatrixXf& dy) {
  const Eigen::MatrixXf dconcat = wo_.backward(dy);
  Eigen::MatrixXf dq = Eigen::MatrixXf::Zero(dy.rows(), dim_);
  Eigen::MatrixXf dk = Eigen::MatrixXf::Zero(dy.rows(), dim_);
  Eigen::MatrixXf dv = Eigen::MatrixXf::Zero(dy.rows(), dim_);
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
  for (int s = 0; s < n_; ++s) {
    for (int h = 0; h < heads_; ++h) {
      const auto attn =
          cache_attn_[static_cast<std::size_t>(s)].middleRows(h * t_, t_);
      const auto q = cache_q_.block(s * t_, h * head_dim_, t_, head_dim_);
      const auto k = cache_k_.block(s * t_, h * head_dim_, t_, head_dim_);
      const auto v = cache_v_.block(s * t_, h * head_dim_, t_, head_dim_);
      const auto dout = dconcat.block(s * t_, h * head_dim_, t_, head_dim_);
      const Eigen::MatrixXf dattn = dout * v.transpose();
      dv.block(s * t_, h * head_dim_, t_, head_dim_).noalias() =
          attn.transpose() * dout;
      Eigen::MatrixXf dscores(t_, t_);
      for (int r = 0; r < t_; ++r) {
        const float dot = dattn.row(r).dot(attn.row(r));
        dscores.row(r) =
            (attn.row(r).array() * (dattn.row(r).array() - dot)).matrix();
      }
      dq.block(s * t_, h * head_dim_, t_, head_dim_).noalias() =
          dscores * k * scale;
      dk.block(s * t_, h * head_dim_, t_, head_dim_).noalias() =
          dscores.transpose() * q * scale;
    }
  }
  Eigen::MatrixXf dtokens = wq_.backward(dq);
  dtokens += wk_.backward(dk);
  dtokens += wv_.backward(dv);
  return dtokens;
}

// ------------------------------------------------------------------ Model

void Model::zero_grads() {
  for (Param* p : params()) p->zero_grad();
}

namespace {

// -------------------------------------------------------------- "linear"

class LinearModel final : public Model {
 public:
  LinearModel(int input_dim, int num_classes, std::uint64_t seed)
      : input_dim_(input_dim),
        num_classes_(num_classes),
        head_(input_dim, num_classes, seed) {}

  std::string id() const override { return "linear"; }
  int input_dim() const override { return input_dim_; }
  int feature_dim() const override { return input_dim_; }
  int num_classes() const override { return num_classes_; }
  int num_mix_layers() const override { return 0; }

  Eigen::MatrixXf features(const Eigen::MatrixXf& x, bool,
                           const ManifoldMixHook* mix) override {
    if (mix != nullptr && mix->active) {
      throw ConfigError("linear model has no hidden layers to mix");
    }
    return x;
  }

  Eigen::MatrixXf logits(const Eigen::MatrixXf& feats) override {
    return head_.forward(feats);
  }

  Eigen::MatrixXf backward_head(const Eigen::MatrixXf& dlogits) override {
    return head_.backward(dlogits);
  }

  void backward_trunk(const Eigen::MatrixXf&) override {}

  std::vector<Param*> params() override { return head_.params(); }

 private:
  int input_dim_, num_classes_;
  Linear head_;
};

// -------------------------------------------------------- "resnet-small"

class BasicBlock {
 public:
  BasicBlock(int in_c, int out_c, int stride, std::uint64_t seed)
      : in_c_(in_c),
        out_c_(out_c),
        stride_(stride),
        conv1_(in_c, out_c, 3, stride, 1, seed ^ 0xa1u),
        bn1_(out_c),
        conv2_(out_c, out_c, 3, 1, 1, seed ^ 0xa2u),
        bn2_(out_c) {
    if (stride != 1 || in_c != out_c) {
      conv_skip_ = std::make_unique<Conv2d>(in_c, out_c, 1, stride, 0,
                                            seed ^ 0xa3u);
      bn_skip_ = std::make_unique<BatchNorm2d>(out_c);
    }
  }

  Eigen::MatrixXf forward(const Eigen::MatrixXf& x, int h, int w, bool train) {
    out_h_ = conv1_.out_h(h);
    out_w_ = conv1_.out_w(w);
    Eigen::MatrixXf main = relu_mid_.forward(
        bn1_.forward(conv1_.forward(x, h, w), out_h_, out_w_, train));
    main = bn2_.forward(conv2_.forward(main, out_h_, out_w_), out_h_, out_w_,
                        train);
    Eigen::MatrixXf skip;
    if (conv_skip_) {
      skip = bn_skip_->forward(conv_skip_->forward(x, h, w), out_h_, out_w_,
                               train);
    } else {
      skip = x;
    }
    return relu_out_.forward(main + skip);
  }

  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy) {
    const Eigen::MatrixXf d = relu_out_.backward(dy);
    Eigen::MatrixXf dx =
        conv1_.backward(bn1_.backward(relu_mid_.backward(
            conv2_.backward(bn2_.backward(d)))));
    if (conv_skip_) {
      dx += conv_skip_->backward(bn_skip_->backward(d));
    } else {
      dx += d;
    }
    return dx;
  }

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_channels() const { return out_c_; }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto* p : conv1_.params()) out.push_back(p);
    for (auto* p : bn1_.params()) out.push_back(p);
    for (auto* p : conv2_.params()) out.push_back(p);
    for (auto* p : bn2_.params()) out.push_back(p);
    if (conv_skip_) {
      for (auto* p : conv_skip_->params()) out.push_back(p);
      for (auto* p : bn_skip_->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<Eigen::MatrixXf*> state() {
    std::vector<Eigen::MatrixXf*> out = bn1_.state();
    for (auto* s : bn2_.state()) out.push_back(s);
    if (bn_skip_) {
      for (auto* s : bn_skip_->state()) out.push_back(s);
    }
    return out;
  }

 private:
  int in_c_, out_c_, stride_;
  int out_h_ = 0, out_w_ = 0;
  Conv2d conv1_;
  BatchNorm2d bn1_;
  ReLU relu_mid_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  std::unique_ptr<Conv2d> conv_skip_;
  std::unique_ptr<BatchNorm2d> bn_skip_;
  ReLU relu_out_;
};

class SmallResNet final : public Model {
 public:
  SmallResNet(int channels, int height, int width, int num_classes,
              std::uint64_t seed)
      : channels_(channels),
        height_(height),
        width_(width),
        num_classes_(num_classes),
        stem_(channels, 16, 3, 1, 1, seed ^ 0x51u),
        stem_bn_(16),
        head_(64, num_classes, seed ^ 0x52u) {
    if (height % 4 != 0 || width % 4 != 0) {
      throw ConfigError("resnet-small needs height/width divisible by 4");
    }
    const int widths[3] = {16, 32, 64};
    int in_c = 16;
    for (int s = 0; s < 3; ++s) {
      const int stride = s == 0 ? 1 : 2;
      blocks_.push_back(std::make_unique<BasicBlock>(
          in_c, widths[s], stride, seed ^ (0x100u * (s + 1))));
      blocks_.push_back(std::make_unique<BasicBlock>(
          widths[s], widths[s], 1, seed ^ (0x100u * (s + 1) + 1)));
      in_c = widths[s];
    }
  }

  std::string id() const override { return "resnet-small"; }
  int input_dim() const override { return channels_ * height_ * width_; }
  int feature_dim() const override { return 64; }
  int num_classes() const override { return num_classes_; }
  int num_mix_layers() const override { return 3; }

  Eigen::MatrixXf features(const Eigen::MatrixXf& x, bool train,
                           const ManifoldMixHook* mix) override {
    mix_ = (mix != nullptr && mix->active) ? *mix : ManifoldMixHook{};
    if (mix_.active && (mix_.layer_id < 1 || mix_.layer_id > 3)) {
      throw ConfigError("resnet-small mix layer must be 1..3, got " +
                        std::to_string(mix_.layer_id));
    }
    int h = height_, w = width_;
    Eigen::MatrixXf a = stem_relu_.forward(
        stem_bn_.forward(stem_.forward(x, h, w), h, w, train));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      a = blocks_[b]->forward(a, h, w, train);
      h = blocks_[b]->out_h();
      w = blocks_[b]->out_w();
      const int stage = static_cast<int>(b / 2) + 1;
      if (b % 2 == 1 && mix_.active && mix_.layer_id == stage) {
        a = mix_rows(a, mix_, 1);
      }
    }
    return gap_.forward(a, 64, h, w);
  }

  Eigen::MatrixXf logits(const Eigen::MatrixXf& feats) override {
    return head_.forward(feats);
  }

  Eigen::MatrixXf backward_head(const Eigen::MatrixXf& dlogits) override {
    return head_.backward(dlogits);
  }

  void backward_trunk(const Eigen::MatrixXf& dfeats) override {
    Eigen::MatrixXf d = gap_.backward(dfeats);
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
      const int stage = b / 2 + 1;
      if (b % 2 == 1 && mix_.active && mix_.layer_id == stage) {
        d = mix_rows_backward(d, mix_, 1);
      }
      d = blocks_[static_cast<std::size_t>(b)]->backward(d);
    }
    stem_.backward(stem_bn_.backward(stem_relu_.backward(d)));
  }

  std::vector<Param*> params() override {
    std::vector<Param*> out;
    for (auto* p : stem_.params()) out.push_back(p);
    for (auto* p : stem_bn_.params()) out.push_back(p);
    for (auto& b : blocks_) {
      for (auto* p : b->params()) out.push_back(p);
    }
    for (auto* p : head_.params()) out.push_back(p);
    return out;
  }

  std::vector<Eigen::MatrixXf*> state() override {
    std::vector<Eigen::MatrixXf*> out = stem_bn_.state();
    for (auto& b : blocks_) {
      for (auto* s : b->state()) out.push_back(s);
    }
    return out;
  }

 private:
  int channels_, height_, width_, num_classes_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  ReLU stem_relu_;
  std::vector<std::unique_ptr<BasicBlock>> blocks_;
  GlobalAvgPool gap_;
  Linear head_;
  ManifoldMixHook mix_;
};

// ----------------------------------------------------------- "attn-tiny"

class TransformerBlock {
 public:
  TransformerBlock(int dim, int heads, std::uint64_t seed)
      : ln1_(dim),
        attn_(dim, heads, seed ^ 0xb1u),
        ln2_(dim),
        fc1_(dim, 2 * dim, seed ^ 0xb2u),
        fc2_(2 * dim, dim, seed ^ 0xb3u) {}

  Eigen::MatrixXf forward(const Eigen::MatrixXf& x, int n, int t) {
    Eigen::MatrixXf a = x + attn_.forward(ln1_.forward(x), n, t);
    return a + fc2_.forward(gelu_.forward(fc1_.forward(ln2_.forward(a))));
  }

  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy) {
    Eigen::MatrixXf da =
        dy + ln2_.backward(fc1_.backward(gelu_.backward(fc2_.backward(dy))));
    return da + ln1_.backward(attn_.backward(da));
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto* p : ln1_.params()) out.push_back(p);
    for (auto* p : attn_.params()) out.push_back(p);
    for (auto* p : ln2_.params()) out.push_back(p);
    for (auto* p : fc1_.params()) out.push_back(p);
    for (auto* p : fc2_.params()) out.push_back(p);
    return out;
  }

 private:
  LayerNorm ln1_;
  MultiHeadSelfAttention attn_;
  LayerNorm ln2_;
  Linear fc1_;
  Gelu gelu_;
  Linear fc2_;
};

class TinyViT final : public Model {
 public:
  TinyViT(int channels, int height, int width, int num_classes,
          std::uint64_t seed)
      : channels_(channels),
        height_(height),
        width_(width),
        num_classes_(num_classes),
        patch_(channels, kDim, kPatch, kPatch, 0, seed ^ 0x61u),
        ln_f_(kDim),
        head_(kDim, num_classes, seed ^ 0x62u) {
    if (height % kPatch != 0 || width % kPatch != 0) {
      throw ConfigError("attn-tiny needs height/width divisible by " +
                        std::to_string(kPatch));
    }
    tokens_ = (height / kPatch) * (width / kPatch);
    pos_.setup(tokens_, kDim);
    Rng rng = derive_rng(seed, fnv1a64("pos-embed"));
    for (int r = 0; r < tokens_; ++r) {
      for (int c = 0; c < kDim; ++c) {
        pos_.value(r, c) = static_cast<float>(draw_normal(rng) * 0.02);
      }
    }
    for (int b = 0; b < 2; ++b) {
      blocks_.push_back(std::make_unique<TransformerBlock>(
          kDim, kHeads, seed ^ (0x1000u * (b + 1))));
    }
  }

  std::string id() const override { return "attn-tiny"; }
  int input_dim() const override { return channels_ * height_ * width_; }
  int feature_dim() const override { return kDim; }
  int num_classes() const override { return num_classes_; }
  int num_mix_layers() const override {
    return static_cast<int>(blocks_.size());
  }

  Eigen::MatrixXf features(const Eigen::MatrixXf& x, bool,
                           const ManifoldMixHook* mix) override {
    mix_ = (mix != nullptr && mix->active) ? *mix : ManifoldMixHook{};
    if (mix_.active &&
        (mix_.layer_id < 1 || mix_.layer_id > num_mix_layers())) {
      throw ConfigError("attn-tiny mix layer must be 1.." +
                        std::to_string(num_mix_layers()) + ", got " +
                        std::to_string(mix_.layer_id));
    }
    n_ = static_cast<int>(x.rows());
    const int ph = height_ / kPatch;
    const int pw = width_ / kPatch;
    const Eigen::MatrixXf conv = patch_.forward(x, height_, width_);
    // (N x C*T) channel-major rows -> (N*T x C) token rows.
    Eigen::MatrixXf tok(static_cast<Eigen::Index>(n_) * tokens_, kDim);
    for (int s = 0; s < n_; ++s) {
      for (int p = 0; p < tokens_; ++p) {
        for (int c = 0; c < kDim; ++c) {
          tok(static_cast<Eigen::Index>(s) * tokens_ + p, c) =
              conv(s, static_cast<Eigen::Index>(c) * ph * pw + p);
        }
      }
    }
    for (int s = 0; s < n_; ++s) {
      tok.middleRows(static_cast<Eigen::Index>(s) * tokens_, tokens_) +=
          pos_.value;
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      tok = blocks_[b]->forward(tok, n_, tokens_);
      if (mix_.active && mix_.layer_id == static_cast<int>(b) + 1) {
        tok = mix_rows(tok, mix_, tokens_);
      }
    }
    tok = ln_f_.forward(tok);
    Eigen::MatrixXf feats(n_, kDim);
    for (int s = 0; s < n_; ++s) {
      feats.row(s) =
          tok.middleRows(static_cast<Eigen::Index>(s) * tokens_, tokens_)
              .colwise()
              .mean();
    }
    return feats;
  }

  Eigen::MatrixXf logits(const Eigen::MatrixXf& feats) override {
    return head_.forward(feats);
  }

  Eigen::MatrixXf backward_head(const Eigen::MatrixXf& dlogits) override {
    return head_.backward(dlogits);
  }

  void backward_trunk(const Eigen::MatrixXf& dfeats) override {
    Eigen::MatrixXf dtok(static_cast<Eigen::Index>(n_) * tokens_, kDim);
    for (int s = 0; s < n_; ++s) {
      dtok.middleRows(static_cast<Eigen::Index>(s) * tokens_, tokens_) =
          (dfeats.row(s) / static_cast<float>(tokens_))
              .replicate(tokens_, 1);
    }
    dtok = ln_f_.backward(dtok);
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
      if (mix_.active && mix_.layer_id == b + 1) {
        dtok = mix_rows_backward(dtok, mix_, tokens_);
      }
      dtok = blocks_[static_cast<std::size_t>(b)]->backward(dtok);
    }
    for (int s = 0; s < n_; ++s) {
      pos_.grad +=
          dtok.middleRows(static_cast<Eigen::Index>(s) * tokens_, tokens_);
    }
    const int ph = height_ / kPatch;
    const int pw = width_ / kPatch;
    Eigen::MatrixXf dconv(n_, static_cast<Eigen::Index>(kDim) * ph * pw);
    for (int s = 0; s < n_; ++s) {
      for (int p = 0; p < tokens_; ++p) {
        for (int c = 0; c < kDim; ++c) {
          dconv(s, static_cast<Eigen::Index>(c) * ph * pw + p) =
              dtok(static_cast<Eigen::Index>(s) * tokens_ + p, c);
        }
      }
    }
    patch_.backward(dconv);
  }

  std::vector<Param*> params() override {
    std::vector<Param*> out;
    for (auto* p : patch_.params()) out.push_back(p);
    out.push_back(&pos_);
    for (auto& b : blocks_) {
      for (auto* p : b->params()) out.push_back(p);
    }
    for (auto* p : ln_f_.params()) out.push_back(p);
    for (auto* p : head_.params()) out.push_back(p);
    return out;
  }

 private:
  static constexpr int kDim = 64;
  static constexpr int kHeads = 4;
  static constexpr int kPatch = 4;

  int channels_, height_, width_, num_classes_;
  int tokens_ = 0;
  int n_ = 0;
  Conv2d patch_;
  Param pos_;
  std::vector<std::unique_ptr<TransformerBlock>> blocks_;
  LayerNorm ln_f_;
  Linear head_;
  ManifoldMixHook mix_;
};

}  // namespace

std::unique_ptr<Model> make_model(const std::string& model_id, int input_dim,
                                  int channels, int height, int width,
                                  int num_classes, std::uint64_t seed) {
  if (num_classes < 2) {
    throw ConfigError("need at least 2 classes, got " +
                      std::to_string(num_classes));
  }
  if (model_id == "linear") {
    if (input_dim < 1) {
      throw ConfigError("linear model needs a positive input dim");
    }
    return std::make_unique<LinearModel>(input_dim, num_classes, seed);
  }
  if (model_id == "resnet-small" || model_id == "attn-tiny") {
    if (channels < 1 || height < 1 || width < 1) {
      throw ConfigError(model_id + " needs image-shaped input");
    }
    if (input_dim != 0 && input_dim != channels * height * width) {
      throw ConfigError("input dim does not match channels*height*width");
    }
    if (model_id == "resnet-small") {
      return std::make_unique<SmallResNet>(channels, height, width,
                                           num_classes, seed);
    }
    return std::make_unique<TinyViT>(channels, height, width, num_classes,
                                     seed);
  }
  throw ConfigError("unknown model '" + model_id +
                    "' (expected linear, resnet-small or attn-tiny)");
}

namespace {

constexpr char kCkptMagic[4] = {'T', 'M', 'C', 'K'};
constexpr std::uint16_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(std::ostream& os, const Model& model,
                     const std::string& model_id, int input_dim, int channels,
                     int height, int width, int num_classes) {
  auto& m = const_cast<Model&>(model);
  const auto params = m.params();
  const auto state = m.state();
  nlohmann::json header = {
      {"model_id", model_id},   {"input_dim", input_dim},
      {"channels", channels},   {"height", height},
      {"width", width},         {"num_classes", num_classes},
      {"num_params", params.size()}, {"num_state", state.size()},
  };
  os.write(kCkptMagic, 4);
  binio::write_le<std::uint16_t>(os, kCkptVersion);
  binio::write_string(os, header.dump());
  const auto write_tensor = [&os](const Eigen::MatrixXf& t) {
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rows()));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.cols()));
    binio::write_matrix_payload(os, t);
  };
  for (const Param* p : params) write_tensor(p->value);
  for (const Eigen::MatrixXf* s : state) write_tensor(*s);
  if (!os) {
    throw FormatError("checkpoint write failed");
  }
}

void save_checkpoint(const std::string& path, const Model& model,
                     const std::string& model_id, int input_dim, int channels,
                     int height, int width, int num_classes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  save_checkpoint(os, model, model_id, input_dim, channels, height, width,
                  num_classes);
}

std::unique_ptr<Model> load_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kCkptMagic, 4)) {
    throw FormatError("bad checkpoint magic number");
  }
  const auto version = binio::read_le<std::uint16_t>(is, "checkpoint version");
  if (version != kCkptVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  nlohmann::json header;
  try {
    header =
        nlohmann::json::parse(binio::read_string(is, "checkpoint header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") +
                      e.what());
  }
  std::unique_ptr<Model> model;
  try {
    model = make_model(header.at("model_id").get<std::string>(),
                       header.at("input_dim").get<int>(),
                       header.at("channels").get<int>(),
                       header.at("height").get<int>(),
                       header.at("width").get<int>(),
                       header.at("num_classes").get<int>(), 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header missing field: ") +
                      e.what());
  }
  const auto params = model->params();
  const auto state = model->state();
  if (header.at("num_params").get<std::size_t>() != params.size() ||
      header.at("num_state").get<std::size_t>() != state.size()) {
    throw FormatError("checkpoint tensor count mismatch");
  }
  const auto read_tensor = [&is](Eigen::MatrixXf& t) {
    const auto rows = binio::read_le<std::uint32_t>(is, "tensor rows");
    const auto cols = binio::read_le<std::uint32_t>(is, "tensor cols");
    if (rows != static_cast<std::uint32_t>(t.rows()) ||
        cols != static_cast<std::uint32_t>(t.cols())) {
      throw FormatError("checkpoint tensor shape mismatch");
    }
    t = binio::read_matrix_payload(is, t.rows(), t.cols(), "tensor payload");
  };
  for (Param* p : params) read_tensor(p->value);
  for (Eigen::MatrixXf* s : state) read_tensor(*s);
  return model;
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open checkpoint '" + path + "'");
  }
  return load_checkpoint(is);
}

}  // namespace textmania
