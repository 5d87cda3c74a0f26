#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "msb/common.hpp"

namespace msb::nn {

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;
using Rng = msb::Rng;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

void xavier_normal(Param& p, Rng& rng);

// Feature maps: one matrix per image, rows = channels, cols = h*w row-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat data;  // channels x (height*width)

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(Mat::Zero(c, h * w)) {}
};

class Dense {
 public:
  Dense(std::string name, int in_dim, int out_dim, Rng& rng);

  // X is (in_dim x batch); returns (out_dim x batch).
  Mat forward(const Mat& x);
  // Accumulates weight grads, returns dX.
  Mat backward(const Mat& dy);

  std::vector<Param*> params() { return {&w_, &b_}; }
  int in_dim() const { return static_cast<int>(w_.value.cols()); }
  int out_dim() const { return static_cast<int>(w_.value.rows()); }

 private:
  Param w_, b_;
  Mat last_x_;
};

class ReLU {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;

 private:
  Mat mask_;
};

// Inverted dropout; identity in eval mode.
class Dropout {
 public:
  explicit Dropout(float rate) : rate_(rate) {}

  Mat forward(const Mat& x, bool training, Rng& rng);
  Mat backward(const Mat& dy) const;
  float rate() const { return rate_; }

 private:
  float rate_;
  Mat mask_;
};

// Row-wise softmax over class axis (rows = classes, cols = batch).
Mat softmax_columns(const Mat& logits);

// Mean cross-entropy over the batch given one-hot targets; the gradient
// w.r.t. the logits is (probs - targets) / batch.
float cross_entropy_loss(const Mat& probs, const Mat& one_hot_targets);
Mat cross_entropy_grad(const Mat& probs, const Mat& one_hot_targets);

// Mean absolute error over a batch of scalars; subgradient 0 at exact ties.
float mae_loss(const Mat& predictions, const Mat& targets);
Mat mae_grad(const Mat& predictions, const Mat& targets);

// Single-layer GRU (reset/update/new gate order, two bias vectors).
// Processes one sequence at a time; returns the hidden state at the final
// real timestep, so padded tails never contribute.
class Gru {
 public:
  Gru(std::string name, int input_dim, int hidden_dim, Rng& rng);

  // seq is (input_dim x T); returns final hidden state (hidden_dim x 1).
  Mat forward(const Mat& seq);
  // Backpropagates d(final hidden); input grads are not produced because
  // chunk embeddings are frozen upstream.
  void backward(const Mat& dh_final);

  std::vector<Param*> params() { return {&w_ih_, &w_hh_, &b_ih_, &b_hh_}; }
  int hidden_dim() const { return hidden_; }
  int input_dim() const { return input_; }

 private:
  int input_, hidden_;
  Param w_ih_, w_hh_, b_ih_, b_hh_;
  // caches from the last forward
  Mat seq_;
  std::vector<Vec> h_, r_, z_, n_, hn_pre_;  // hn_pre = W_hn h + b_hn
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

class Conv2d {
 public:
  Conv2d(std::string name, ConvSpec spec, Rng& rng);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy);

  std::vector<Param*> params() { return {&w_, &b_}; }
  const ConvSpec& spec() const { return spec_; }
  int out_height(int in_h) const { return (in_h + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1; }
  int out_width(int in_w) const { return (in_w + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1; }

 private:
  ConvSpec spec_;
  Param w_;  // out_channels x (in_channels*kernel*kernel)
  Param b_;  // out_channels x 1
  FeatureMap last_x_;
  Mat last_col_;
};

// Non-overlapping average pooling, stride == window.
FeatureMap avg_pool(const FeatureMap& x, int window);

// Mean over all spatial positions per channel.
Vec global_avg_pool(const FeatureMap& x);
// Spreads a channel gradient uniformly over the spatial grid.
FeatureMap global_avg_pool_backward(const Vec& dy, int channels, int height, int width);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, float lr, float beta1 = 0.9f,
                float beta2 = 0.999f, float eps = 1e-8f);

  void set_learning_rate(float lr) { lr_ = lr; }
  float learning_rate() const { return lr_; }
  void zero_grad();
  void step();

 private:
  std::vector<Param*> params_;
  std::vector<Mat> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

long trainable_parameter_count(const std::vector<Param*>& params);

}  // namespace msb::nn
