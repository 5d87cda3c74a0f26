#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "msb/nn.hpp"

using namespace msb;
using namespace msb::nn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// central finite difference of sum(f() .* weights) w.r.t. one parameter
template <typename Forward>
void check_param_grad(Param& p, const Mat& weights, Forward forward, float eps = 1e-2f,
                      float tol = 2e-2f) {
  // analytic grads must already be accumulated by the caller's backward
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(p.size(), 24); ++i) {
    const float orig = p.value.data()[i];
    p.value.data()[i] = orig + eps;
    const float up = (forward().cwiseProduct(weights)).sum();
    p.value.data()[i] = orig - eps;
    const float down = (forward().cwiseProduct(weights)).sum();
    p.value.data()[i] = orig;
    const float numeric = (up - down) / (2.0f * eps);
    CHECK(p.grad.data()[i] == doctest::Approx(numeric).epsilon(tol).scale(1.0));
  }
}

}  // namespace

TEST_CASE("dense forward shape and bias") {
  Rng rng(1);
  Dense d("d", 3, 2, rng);
  Mat x = random_mat(3, 5, rng);
  Mat y = d.forward(x);
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 5);
  CHECK_THROWS_AS(d.forward(random_mat(4, 5, rng)), ShapeError);
}

TEST_CASE("dense gradients match finite differences") {
  Rng rng(2);
  Dense d("d", 5, 4, rng);
  Mat x = random_mat(5, 3, rng);
  Mat w = random_mat(4, 3, rng);
  auto forward = [&]() { return d.forward(x); };
  for (Param* p : d.params()) {
    for (Param* q : d.params()) q->zero_grad();
    d.forward(x);
    d.backward(w);
    check_param_grad(*p, w, forward);
  }
  // input gradient
  d.forward(x);
  Mat dx = d.backward(w);
  const float eps = 1e-2f;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const float orig = x.data()[i];
    x.data()[i] = orig + eps;
    const float up = (d.forward(x).cwiseProduct(w)).sum();
    x.data()[i] = orig - eps;
    const float down = (d.forward(x).cwiseProduct(w)).sum();
    x.data()[i] = orig;
    CHECK(dx.data()[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(2e-2).scale(1.0));
  }
}

TEST_CASE("softmax columns sum to one") {
  Rng rng(3);
  Mat logits = random_mat(4, 6, rng) * 3.0f;
  Mat probs = softmax_columns(logits);
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    CHECK(probs.col(c).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(probs.col(c).minCoeff() >= 0.0f);
  }
}

TEST_CASE("cross entropy of a perfect prediction is near zero") {
  Mat probs(2, 1);
  probs << 1.0f, 0.0f;
  Mat target = probs;
  CHECK(cross_entropy_loss(probs, target) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("mae loss and subgradient") {
  Mat pred(1, 3), target(1, 3);
  pred << 1.0f, 2.0f, 5.0f;
  target << 1.0f, 4.0f, 2.0f;
  CHECK(mae_loss(pred, target) == doctest::Approx((0.0 + 2.0 + 3.0) / 3.0));
  Mat g = mae_grad(pred, target);
  CHECK(g(0, 0) == 0.0f);
  CHECK(g(0, 1) == doctest::Approx(-1.0 / 3.0));
  CHECK(g(0, 2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gru output shape and empty-sequence error") {
  Rng rng(4);
  Gru gru("g", 6, 5, rng);
  Mat seq = random_mat(6, 4, rng);
  Mat h = gru.forward(seq);
  CHECK(h.rows() == 5);
  CHECK(h.cols() == 1);
  CHECK_THROWS_AS(gru.forward(Mat(6, 0)), ShapeError);
  CHECK_THROWS_AS(gru.forward(random_mat(7, 3, rng)), ShapeError);
}

TEST_CASE("gru gradients match finite differences") {
  Rng rng(5);
  Gru gru("g", 4, 5, rng);
  Mat seq = random_mat(4, 3, rng);
  Mat w = random_mat(5, 1, rng);
  auto forward = [&]() { return gru.forward(seq); };
  for (Param* p : gru.params()) {
    for (Param* q : gru.params()) q->zero_grad();
    gru.forward(seq);
    gru.backward(w);
    check_param_grad(*p, w, forward, 1e-2f, 3e-2f);
  }
}

TEST_CASE("conv2d geometry") {
  Rng rng(6);
  Conv2d conv("c", {.in_channels = 2, .out_channels = 3, .kernel = 3, .stride = 2, .pad = 1}, rng);
  FeatureMap x(2, 8, 8);
  x.data = random_mat(2, 64, rng);
  FeatureMap y = conv.forward(x);
  CHECK(y.channels == 3);
  CHECK(y.height == 4);
  CHECK(y.width == 4);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  Conv2d conv("c", {.in_channels = 2, .out_channels = 3, .kernel = 3, .stride = 2, .pad = 1}, rng);
  FeatureMap x(2, 5, 5);
  x.data = random_mat(2, 25, rng);
  FeatureMap y0 = conv.forward(x);
  Mat w = random_mat(y0.data.rows(), y0.data.cols(), rng);
  auto forward = [&]() { return conv.forward(x).data; };
  FeatureMap dy(y0.channels, y0.height, y0.width);
  dy.data = w;
  for (Param* p : conv.params()) {
    for (Param* q : conv.params()) q->zero_grad();
    conv.forward(x);
    conv.backward(dy);
    check_param_grad(*p, w, forward);
  }
  // input gradient
  conv.forward(x);
  FeatureMap dx = conv.backward(dy);
  const float eps = 1e-2f;
  for (Eigen::Index i = 0; i < 20; ++i) {
    const float orig = x.data.data()[i];
    x.data.data()[i] = orig + eps;
    const float up = (conv.forward(x).data.cwiseProduct(w)).sum();
    x.data.data()[i] = orig - eps;
    const float down = (conv.forward(x).data.cwiseProduct(w)).sum();
    x.data.data()[i] = orig;
    CHECK(dx.data.data()[i] ==
          doctest::Approx((up - down) / (2 * eps)).epsilon(2e-2).scale(1.0));
  }
}

TEST_CASE("average pooling") {
  FeatureMap x(1, 4, 4);
  for (int i = 0; i < 16; ++i) x.data(0, i) = static_cast<float>(i);
  FeatureMap y = avg_pool(x, 2);
  CHECK(y.height == 2);
  CHECK(y.width == 2);
  CHECK(y.data(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(y.data(0, 3) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("global average pool and its backward") {
  Rng rng(8);
  FeatureMap x(3, 2, 2);
  x.data = random_mat(3, 4, rng);
  Vec pooled = global_avg_pool(x);
  CHECK(pooled(0) == doctest::Approx(x.data.row(0).mean()));
  FeatureMap dx = global_avg_pool_backward(Vec::Ones(3), 3, 2, 2);
  CHECK(dx.data(1, 2) == doctest::Approx(0.25));
}

TEST_CASE("adam only updates trainable parameters") {
  Rng rng(9);
  Dense d("d", 3, 2, rng);
  Mat before_w = d.params()[0]->value;
  Mat before_b = d.params()[1]->value;
  d.params()[0]->trainable = false;
  AdamOptimizer opt(d.params(), 0.01f);
  opt.zero_grad();
  d.forward(random_mat(3, 2, rng));
  d.backward(random_mat(2, 2, rng));
  opt.step();
  CHECK(d.params()[0]->value == before_w);
  CHECK(d.params()[1]->value != before_b);
}

TEST_CASE("dropout is identity in eval mode and masks in train mode") {
  Rng rng(10);
  Dropout drop(0.5f);
  Mat x = random_mat(8, 8, rng);
  CHECK(drop.forward(x, false, rng) == x);
  Mat y = drop.forward(x, true, rng);
  long zeros = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y.data()[i] == 0.0f) ++zeros;
  }
  CHECK(zeros > 0);
  CHECK(zeros < y.size());
}

TEST_CASE("trainable parameter count respects flags") {
  Rng rng(11);
  Dense d("d", 10, 4, rng);
  CHECK(trainable_parameter_count(d.params()) == 44);
  d.params()[0]->trainable = false;
  CHECK(trainable_parameter_count(d.params()) == 4);
}
