#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/rng.hpp"

namespace textmania {

// Trainable tensor with its gradient and momentum buffer. Vectors are stored
// as single-column matrices.
struct Param {
  Eigen::MatrixXf value;
  Eigen::MatrixXf grad;
  Eigen::MatrixXf momentum;

  void setup(int rows, int cols) {
    value = Eigen::MatrixXf::Zero(rows, cols);
    grad = Eigen::MatrixXf::Zero(rows, cols);
    momentum = Eigen::MatrixXf::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

// Batch activations are N x (C*H*W) with channel-major rows, matching
// Image::data, so a dataset matrix feeds the stem directly.

class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int kernel, int stride, int pad,
         std::uint64_t seed);

  // x: N x (in_c*h*w). Returns N x (out_c*oh*ow).
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x, int h, int w);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

  int out_h(int h) const { return (h + 2 * pad_ - kernel_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * pad_ - kernel_) / stride_ + 1; }
  int out_channels() const { return out_c_; }
  Param& weight() { return weight_; }
  std::vector<Param*> params() { return {&weight_}; }

 private:
  Eigen::MatrixXf im2col(const Eigen::VectorXf& sample) const;

  int in_c_, out_c_, kernel_, stride_, pad_;
  int h_ = 0, w_ = 0;
  Param weight_;  // out_c x (in_c*kernel*kernel), no bias (BN follows)
  Eigen::MatrixXf cache_x_;
};

class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels);

  Eigen::MatrixXf forward(const Eigen::MatrixXf& x, int h, int w, bool train);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

  std::vector<Param*> params() { return {&gamma_, &beta_}; }
  std::vector<Eigen::MatrixXf*> state() { return {&running_mean_, &running_var_}; }

 private:
  int channels_;
  int h_ = 0, w_ = 0;
  float eps_ = 1e-5f;
  float momentum_ = 0.1f;
  Param gamma_, beta_;  // channels x 1
  Eigen::MatrixXf running_mean_, running_var_;  // channels x 1
  Eigen::MatrixXf cache_xhat_;
  Eigen::VectorXf cache_inv_std_;
};

class ReLU {
 public:
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

 private:
  Eigen::MatrixXf cache_mask_;
};

class GlobalAvgPool {
 public:
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x, int channels, int h, int w);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

 private:
  int channels_ = 0, h_ = 0, w_ = 0;
};

class Linear {
 public:
  Linear(int in_dim, int out_dim, std::uint64_t seed);

  Eigen::MatrixXf forward(const Eigen::MatrixXf& x);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

  std::vector<Param*> params() { return {&weight_, &bias_}; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

 private:
  int in_dim_, out_dim_;
  Param weight_;  // out x in
  Param bias_;    // out x 1
  Eigen::MatrixXf cache_x_;
};

class LayerNorm {
 public:
  explicit LayerNorm(int dim);

  // Normalizes each row of x (rows are tokens).
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

  std::vector<Param*> params() { return {&gamma_, &beta_}; }

 private:
  int dim_;
  float eps_ = 1e-5f;
  Param gamma_, beta_;  // dim x 1
  Eigen::MatrixXf cache_xhat_;
  Eigen::VectorXf cache_inv_std_;
};

class Gelu {
 public:
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

 private:
  Eigen::MatrixXf cache_x_;
};

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(int dim, int heads, std::uint64_t seed);

  // tokens: (N*T) x dim, N samples of T tokens each.
  Eigen::MatrixXf forward(const Eigen::MatrixXf& tokens, int n, int t);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);

  std::vector<Param*> params();

 private:
  int dim_, heads_, head_dim_;
  int n_ = 0, t_ = 0;
  Linear wq_, wk_, wv_, wo_;
  Eigen::MatrixXf cache_q_, cache_k_, cache_v_;
  std::vector<Eigen::MatrixXf> cache_attn_;  // one (heads*t) x t per sample
};

// Mix instruction for hidden activations: row i of the hooked layer output is
// replaced by lambda * h[i] + (1 - lambda) * h[partner[i]].
struct ManifoldMixHook {
  bool active = false;
  int layer_id = 0;  // 1-based index over the model's eligible layers
  std::vector<int> partner;
  float lambda = 1.0f;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string id() const = 0;
  virtual int input_dim() const = 0;
  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  // Hidden layers eligible for manifold mixing (the input is layer 0 and is
  // handled by the caller with plain mixup).
  virtual int num_mix_layers() const = 0;

  // Trunk to the penultimate feature. The caller may augment the result
  // before asking for logits.
  virtual Eigen::MatrixXf features(const Eigen::MatrixXf& x, bool train,
                                   const ManifoldMixHook* mix = nullptr) = 0;
  virtual Eigen::MatrixXf logits(const Eigen::MatrixXf& feats) = 0;

  // Backward through the head only; returns d(loss)/d(features).
  virtual Eigen::MatrixXf backward_head(const Eigen::MatrixXf& dlogits) = 0;
  // Backward through the trunk given d(loss)/d(pre-augmentation features).
  virtual void backward_trunk(const Eigen::MatrixXf& dfeats) = 0;

  virtual std::vector<Param*> params() = 0;
  // Non-trainable buffers (batch-norm running stats) for checkpointing.
  virtual std::vector<Eigen::MatrixXf*> state() { return {}; }

  void zero_grads();
};

// model_id: "linear" (features pass through), "resnet-small", "attn-tiny".
std::unique_ptr<Model> make_model(const std::string& model_id, int input_dim,
                                  int channels, int height, int width,
                                  int num_classes, std::uint64_t seed);

// TMCK checkpoint: model id, shape metadata, every param and state tensor.
void save_checkpoint(std::ostream& os, const Model& model,
                     const std::string& model_id, int input_dim, int channels,
                     int height, int width, int num_classes);
void save_checkpoint(const std::string& path, const Model& model,
                     const std::string& model_id, int input_dim, int channels,
                     int height, int width, int num_classes);
std::unique_ptr<Model> load_checkpoint(std::istream& is);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace textmania
