#include "msb/nn.hpp"

#include <cmath>

namespace msb::nn {

void xavier_normal(Param& p, Rng& rng) {
  // fan_in = cols, fan_out = rows for row-major weight layout W (out x in)
  double fan_in = static_cast<double>(p.value.cols());
  double fan_out = static_cast<double>(p.value.rows());
  double stddev = std::sqrt(2.0 / (fan_in + fan_out));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::string name, int in_dim, int out_dim, Rng& rng)
    : w_(name + ".w", out_dim, in_dim), b_(name + ".b", out_dim, 1) {
  xavier_normal(w_, rng);
}

Mat Dense::forward(const Mat& x) {
  if (x.rows() != w_.value.cols()) {
    throw ShapeError(w_.name + ": expected input width " + std::to_string(w_.value.cols()) +
                     ", got " + std::to_string(x.rows()));
  }
  last_x_ = x;
  return (w_.value * x).colwise() + Vec(b_.value.col(0));
}

Mat Dense::backward(const Mat& dy) {
  w_.grad += dy * last_x_.transpose();
  b_.grad.col(0) += dy.rowwise().sum();
  return w_.value.transpose() * dy;
}

// ---------------------------------------------------------------------------
// Activations and losses

Mat ReLU::forward(const Mat& x) {
  mask_ = (x.array() > 0.0f).cast<float>();
  return x.cwiseMax(0.0f);
}

Mat ReLU::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

Mat Dropout::forward(const Mat& x, bool training, Rng& rng) {
  if (!training || rate_ <= 0.0f) {
    mask_ = Mat::Ones(x.rows(), x.cols());
    return x;
  }
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate_));
  mask_.resize(x.rows(), x.cols());
  float scale = 1.0f / (1.0f - rate_);
  for (Eigen::Index i = 0; i < mask_.size(); ++i) {
    mask_.data()[i] = keep(rng) ? scale : 0.0f;
  }
  return x.cwiseProduct(mask_);
}

Mat Dropout::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

Mat softmax_columns(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Vec col = logits.col(c);
    float m = col.maxCoeff();
    Vec e = (col.array() - m).exp();
    out.col(c) = e / e.sum();
  }
  return out;
}

float cross_entropy_loss(const Mat& probs, const Mat& one_hot_targets) {
  constexpr float kEps = 1e-12f;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      if (one_hot_targets(r, c) > 0.0f) {
        loss -= one_hot_targets(r, c) * std::log(probs(r, c) + kEps);
      }
    }
  }
  return static_cast<float>(loss / static_cast<double>(probs.cols()));
}

Mat cross_entropy_grad(const Mat& probs, const Mat& one_hot_targets) {
  return (probs - one_hot_targets) / static_cast<float>(probs.cols());
}

float mae_loss(const Mat& predictions, const Mat& targets) {
  return (predictions - targets).cwiseAbs().sum() / static_cast<float>(predictions.size());
}

Mat mae_grad(const Mat& predictions, const Mat& targets) {
  Mat diff = predictions - targets;
  Mat g(diff.rows(), diff.cols());
  float inv_n = 1.0f / static_cast<float>(diff.size());
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    float d = diff.data()[i];
    g.data()[i] = d > 0.0f ? inv_n : (d < 0.0f ? -inv_n : 0.0f);
  }
  return g;
}

// ---------------------------------------------------------------------------
// GRU

namespace {
inline Vec sigmoid(const Vec& x) { return 1.0f / (1.0f + (-x.array()).exp()); }
}  // namespace

Gru::Gru(std::string name, int input_dim, int hidden_dim, Rng& rng)
    : input_(input_dim),
      hidden_(hidden_dim),
      w_ih_(name + ".w_ih", 3 * hidden_dim, input_dim),
      w_hh_(name + ".w_hh", 3 * hidden_dim, hidden_dim),
      b_ih_(name + ".b_ih", 3 * hidden_dim, 1),
      b_hh_(name + ".b_hh", 3 * hidden_dim, 1) {
  xavier_normal(w_ih_, rng);
  xavier_normal(w_hh_, rng);
}

Mat Gru::forward(const Mat& seq) {
  if (seq.rows() != input_) {
    throw ShapeError("gru: expected input dim " + std::to_string(input_) + ", got " +
                     std::to_string(seq.rows()));
  }
  if (seq.cols() < 1) throw ShapeError("gru: empty sequence");
  const Eigen::Index t_len = seq.cols();
  seq_ = seq;
  h_.assign(t_len + 1, Vec::Zero(hidden_));
  r_.assign(t_len, Vec());
  z_.assign(t_len, Vec());
  n_.assign(t_len, Vec());
  hn_pre_.assign(t_len, Vec());

  const int h = hidden_;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec gi = w_ih_.value * seq.col(t) + b_ih_.value.col(0);
    Vec gh = w_hh_.value * h_[t] + b_hh_.value.col(0);
    r_[t] = sigmoid(gi.segment(0, h) + gh.segment(0, h));
    z_[t] = sigmoid(gi.segment(h, h) + gh.segment(h, h));
    hn_pre_[t] = gh.segment(2 * h, h);
    n_[t] = (gi.segment(2 * h, h) + r_[t].cwiseProduct(hn_pre_[t])).array().tanh();
    h_[t + 1] = (Vec::Ones(h) - z_[t]).cwiseProduct(n_[t]) + z_[t].cwiseProduct(h_[t]);
  }
  return h_[t_len];
}

void Gru::backward(const Mat& dh_final) {
  const Eigen::Index t_len = seq_.cols();
  const int h = hidden_;
  Vec dh = dh_final.col(0);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const Vec& h_prev = h_[t];
    Vec dz = dh.cwiseProduct(h_prev - n_[t]);
    Vec dn = dh.cwiseProduct(Vec::Ones(h) - z_[t]);
    Vec dh_prev = dh.cwiseProduct(z_[t]);

    Vec da_n = dn.cwiseProduct(Vec::Ones(h) - n_[t].cwiseProduct(n_[t]));
    Vec dr = da_n.cwiseProduct(hn_pre_[t]);
    Vec ds = da_n.cwiseProduct(r_[t]);

    Vec da_r = dr.cwiseProduct(r_[t].cwiseProduct(Vec::Ones(h) - r_[t]));
    Vec da_z = dz.cwiseProduct(z_[t].cwiseProduct(Vec::Ones(h) - z_[t]));

    const Vec& x_t = seq_.col(t);
    w_ih_.grad.middleRows(0, h) += da_r * x_t.transpose();
    w_ih_.grad.middleRows(h, h) += da_z * x_t.transpose();
    w_ih_.grad.middleRows(2 * h, h) += da_n * x_t.transpose();
    b_ih_.grad.col(0).segment(0, h) += da_r;
    b_ih_.grad.col(0).segment(h, h) += da_z;
    b_ih_.grad.col(0).segment(2 * h, h) += da_n;

    w_hh_.grad.middleRows(0, h) += da_r * h_prev.transpose();
    w_hh_.grad.middleRows(h, h) += da_z * h_prev.transpose();
    w_hh_.grad.middleRows(2 * h, h) += ds * h_prev.transpose();
    b_hh_.grad.col(0).segment(0, h) += da_r;
    b_hh_.grad.col(0).segment(h, h) += da_z;
    b_hh_.grad.col(0).segment(2 * h, h) += ds;

    dh_prev += w_hh_.value.middleRows(0, h).transpose() * da_r;
    dh_prev += w_hh_.value.middleRows(h, h).transpose() * da_z;
    dh_prev += w_hh_.value.middleRows(2 * h, h).transpose() * ds;
    dh = std::move(dh_prev);
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, ConvSpec spec, Rng& rng)
    : spec_(spec),
      w_(name + ".w", spec.out_channels, spec.in_channels * spec.kernel * spec.kernel),
      b_(name + ".b", spec.out_channels, 1) {
  xavier_normal(w_, rng);
}

namespace {

Mat im2col(const FeatureMap& x, const ConvSpec& s, int out_h, int out_w) {
  const int k = s.kernel;
  Mat col = Mat::Zero(static_cast<Eigen::Index>(s.in_channels) * k * k,
                      static_cast<Eigen::Index>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const Eigen::Index out_idx = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * s.stride - s.pad + ky;
        if (iy < 0 || iy >= x.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * s.stride - s.pad + kx;
          if (ix < 0 || ix >= x.width) continue;
          const Eigen::Index in_idx = static_cast<Eigen::Index>(iy) * x.width + ix;
          for (int c = 0; c < s.in_channels; ++c) {
            col(static_cast<Eigen::Index>(c) * k * k + ky * k + kx, out_idx) = x.data(c, in_idx);
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Mat& dcol, FeatureMap& dx, const ConvSpec& s, int out_h, int out_w) {
  const int k = s.kernel;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const Eigen::Index out_idx = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * s.stride - s.pad + ky;
        if (iy < 0 || iy >= dx.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * s.stride - s.pad + kx;
          if (ix < 0 || ix >= dx.width) continue;
          const Eigen::Index in_idx = static_cast<Eigen::Index>(iy) * dx.width + ix;
          for (int c = 0; c < s.in_channels; ++c) {
            dx.data(c, in_idx) += dcol(static_cast<Eigen::Index>(c) * k * k + ky * k + kx, out_idx);
          }
        }
      }
    }
  }
}

}  // namespace

FeatureMap Conv2d::forward(const FeatureMap& x) {
  if (x.channels != spec_.in_channels) {
    throw ShapeError(w_.name + ": expected " + std::to_string(spec_.in_channels) +
                     " input channels, got " + std::to_string(x.channels));
  }
  const int oh = out_height(x.height);
  const int ow = out_width(x.width);
  last_x_ = x;
  last_col_ = im2col(x, spec_, oh, ow);
  FeatureMap y(spec_.out_channels, oh, ow);
  y.data = (w_.value * last_col_).colwise() + Vec(b_.value.col(0));
  return y;
}

FeatureMap Conv2d::backward(const FeatureMap& dy) {
  w_.grad += dy.data * last_col_.transpose();
  b_.grad.col(0) += dy.data.rowwise().sum();
  Mat dcol = w_.value.transpose() * dy.data;
  FeatureMap dx(last_x_.channels, last_x_.height, last_x_.width);
  col2im_add(dcol, dx, spec_, dy.height, dy.width);
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling

FeatureMap avg_pool(const FeatureMap& x, int window) {
  const int oh = x.height / window;
  const int ow = x.width / window;
  FeatureMap y(x.channels, oh, ow);
  const float inv = 1.0f / static_cast<float>(window * window);
  for (int c = 0; c < x.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float acc = 0.0f;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            acc += x.data(c, static_cast<Eigen::Index>(oy * window + ky) * x.width +
                              (ox * window + kx));
          }
        }
        y.data(c, static_cast<Eigen::Index>(oy) * ow + ox) = acc * inv;
      }
    }
  }
  return y;
}

Vec global_avg_pool(const FeatureMap& x) {
  return x.data.rowwise().mean();
}

FeatureMap global_avg_pool_backward(const Vec& dy, int channels, int height, int width) {
  FeatureMap dx(channels, height, width);
  const float inv = 1.0f / static_cast<float>(height * width);
  for (int c = 0; c < channels; ++c) {
    dx.data.row(c).setConstant(dy(c) * inv);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, float lr, float beta1, float beta2,
                             float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamOptimizer::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void AdamOptimizer::step() {
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->trainable) continue;
    m_[i] = beta1_ * m_[i] + (1.0f - beta1_) * p->grad;
    v_[i] = beta2_ * v_[i] + (1.0f - beta2_) * p->grad.cwiseProduct(p->grad);
    Mat m_hat = m_[i] / bc1;
    Mat v_hat = v_[i] / bc2;
    p->value -= lr_ * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps_).matrix());
  }
}

long trainable_parameter_count(const std::vector<Param*>& params) {
  long count = 0;
  for (const Param* p : params) {
    if (p->trainable) count += static_cast<long>(p->size());
  }
  return count;
}

}  // namespace msb::nn
