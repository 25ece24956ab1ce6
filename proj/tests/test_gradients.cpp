#include <gtest/gtest.h>

#include <functional>
#include <numeric>

#include "ssdr/gradcheck.hpp"
#include "ssdr/init.hpp"
#include "ssdr/kernels/activation.hpp"
#include "ssdr/kernels/batchnorm.hpp"
#include "ssdr/kernels/conv.hpp"
#include "ssdr/kernels/loss.hpp"
#include "ssdr/kernels/pooling.hpp"
#include "support.hpp"

using namespace ssdr;
using ssdr::testing::random_tensor;
using TD = BasicTensor<double>;

namespace {

constexpr double kEps = 1e-3;
constexpr double kTol = 1e-2;

/// Max relative error between analytic and central-difference gradients of
/// the scalar loss f over every element of v.
double fd_error(TD& v, const TD& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + kEps;
    const double plus = f();
    v[i] = saved - kEps;
    const double minus = f();
    v[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (plus - minus) / (2 * kEps)));
  }
  return worst;
}

double dot(const TD& a, const TD& b) { return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0); }

}  // namespace

TEST(Gradients, ConvAllThreeGradients) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor(Shape{2, 3, 5, 6}, rng), w = random_tensor(Shape{4, 3, 3, 3}, rng);
    auto b = random_tensor(Shape{4}, rng);
    const std::size_t stride = 1 + trial % 2;
    auto loss = [&] {
      auto y = conv2d_forward(x, ConvParams<double>{w, b, stride, 1});
      return 0.5 * dot(y, y);
    };
    auto y = conv2d_forward(x, ConvParams<double>{w, b, stride, 1});
    auto g = conv2d_backward(x, ConvParams<double>{w, b, stride, 1}, y);
    EXPECT_LT(fd_error(x, g.grad_x, loss), kTol);
    EXPECT_LT(fd_error(w, g.grad_weight, loss), kTol);
    EXPECT_LT(fd_error(b, g.grad_bias, loss), kTol);
  }
}

TEST(Gradients, MaxPoolAwayFromTies) {
  std::mt19937_64 rng(2);
  TD x(Shape{2, 3, 6, 4});
  std::vector<double> values(x.size());
  std::iota(values.begin(), values.end(), 0.0);
  std::shuffle(values.begin(), values.end(), rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * values[i];  // gaps of 0.01 >> eps
  auto g = random_tensor(Shape{2, 3, 3, 2}, rng);
  auto loss = [&] { return dot(maxpool2d_forward(x).output, g); };
  auto r = maxpool2d_forward(x);
  EXPECT_LT(fd_error(x, maxpool2d_backward(g, r.cache, x.shape()), loss), kTol);
}

TEST(Gradients, ReluAwayFromZero) {
  std::mt19937_64 rng(3);
  auto x = random_tensor(Shape{2, 2, 4, 4}, rng);
  for (auto& v : x.data()) v = v >= 0 ? v + 1e-2 : v - 1e-2;
  auto g = random_tensor(x.shape(), rng);
  auto loss = [&] { return dot(relu_forward(x), g); };
  EXPECT_LT(fd_error(x, relu_backward(x, g), loss), kTol);
}

TEST(Gradients, BatchNormTrainMode) {
  std::mt19937_64 rng(4);
  auto x = random_tensor(Shape{3, 2, 3, 3}, rng, -2.0, 2.0);
  auto gamma = random_tensor(Shape{2}, rng, 0.5, 1.5), beta = random_tensor(Shape{2}, rng);
  TD rm(Shape{2}), rv(Shape{2}, 1.0);
  auto g = random_tensor(x.shape(), rng);
  auto loss = [&] { return dot(batchnorm_forward(x, BatchNormParams<double>{gamma, beta, rm, rv}, Mode::Train), g); };
  auto r = batchnorm_backward(x, BatchNormParams<double>{gamma, beta, rm, rv}, g);
  EXPECT_LT(fd_error(x, r.grad_x, loss), kTol);
  EXPECT_LT(fd_error(gamma, r.grad_gamma, loss), kTol);
  EXPECT_LT(fd_error(beta, r.grad_beta, loss), kTol);
}

TEST(Gradients, DropoutWithFixedMask) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(Shape{2, 3, 4, 4}, rng);
  auto g = random_tensor(x.shape(), rng);
  auto loss = [&] {
    Rng r(77);  // same mask on every evaluation
    return dot(dropout_forward(x, 0.6, Mode::Train, r).output, g);
  };
  Rng r(77);
  auto mask = dropout_forward(x, 0.6, Mode::Train, r).mask;
  EXPECT_LT(fd_error(x, dropout_backward(mask, 0.6, g), loss), 1e-3);
}

TEST(Gradients, GlobalAvgPool) {
  std::mt19937_64 rng(6);
  auto x = random_tensor(Shape{2, 3, 4, 5}, rng);
  auto g = random_tensor(Shape{2, 3}, rng);
  auto loss = [&] { return dot(global_avg_pool_forward(x), g); };
  EXPECT_LT(fd_error(x, global_avg_pool_backward(g, 4, 5), loss), kTol);
}

TEST(Gradients, SoftmaxCrossEntropy) {
  std::mt19937_64 rng(7);
  auto z = random_tensor(Shape{4, 6}, rng, -3.0, 3.0);
  const std::vector<int> labels{0, 5, 2, 2};
  auto loss = [&] { return softmax_cross_entropy(z, std::span<const int>(labels)).loss; };
  EXPECT_LT(fd_error(z, softmax_cross_entropy(z, std::span<const int>(labels)).grad_logits, loss), kTol);
}

TEST(Gradients, ClassifierHeadEndToEnd) {
  const auto cls = build_classifier(4);
  Rng rng(8);
  auto params = init_params<double>(cls, InitMethod::xavier(), rng);
  std::mt19937_64 data(9);
  auto x = random_tensor(Shape{2, 256, 4, 4}, data);
  const std::vector<int> labels{1, 4};
  const NetworkSpec* chain[] = {&cls};
  auto report = gradient_check<double>(chain, params, x, labels, {kEps, 200, 1});
  EXPECT_LT(report.max_rel_error, kTol);
  for (const auto& p : report.params) {
    const std::size_t wanted = std::min<std::size_t>(200, params.at(p.name).value.size());
    EXPECT_GE(p.sampled + p.skipped, wanted) << p.name;  // small tensors: every element is tried
    EXPECT_LE(p.skipped * 10, wanted) << p.name;          // kinks are rare at this eps
  }
  EXPECT_EQ(report.params.size(), 8u);  // bn gamma/beta + 3 convs x (weight, bias)
}

TEST(Gradients, ScratchModeFullNetwork) {
  const auto ext = build_feature_extractor(32);
  const auto cls = build_classifier(4);
  Rng rng(10);
  auto params = init_params<double>(ext, InitMethod::msra(), rng);
  params.merge(init_params<double>(cls, InitMethod::xavier(), rng));
  std::mt19937_64 data(11);
  auto x = random_tensor(Shape{2, 3, 32, 32}, data);
  const std::vector<int> labels{0, 3};
  const NetworkSpec* chain[] = {&ext, &cls};
  // Steps that cross a ReLU or pooling switch are retried with eps / 10.
  GradCheckOptions opt{kEps, 6, 2};
  opt.min_eps = 1e-8;
  auto report = gradient_check<double>(chain, params, x, labels, opt);
  EXPECT_LT(report.max_rel_error, 2e-2);
  ASSERT_EQ(report.params.size(), 22u);
  for (const auto& p : report.params) EXPECT_EQ(p.sampled, 6u) << p.name;
}

TEST(Gradients, ParameterWithoutInfluenceHasZeroError) {
  // A constant input channel normalizes to zero, so its batch-norm gamma
  // cannot influence the loss.
  const auto cls = build_classifier(4);
  Rng rng(12);
  auto params = init_params<double>(cls, InitMethod::xavier(), rng);
  std::mt19937_64 data(13);
  auto x = random_tensor(Shape{2, 256, 4, 4}, data);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) x[n * 256 * 16 + i] = 0.7;
  const std::vector<int> labels{2, 5};
  auto loss = [&] {
    Rng r(5);
    auto out = forward(cls, params, x, Mode::Train, r).output;
    return softmax_cross_entropy(out, std::span<const int>(labels)).loss;
  };
  Rng r(5);
  auto f = forward(cls, params, x, Mode::Train, r);
  params.zero_grad();
  backward(cls, params, f.tape, softmax_cross_entropy(f.output, std::span<const int>(labels)).grad_logits);
  const double analytic = params.at("cls.bn.gamma").grad[0];
  auto& gamma = params.at("cls.bn.gamma").value;
  gamma[0] += kEps;
  const double plus = loss();
  gamma[0] -= 2 * kEps;
  const double minus = loss();
  gamma[0] += kEps;
  const double numeric = (plus - minus) / (2 * kEps);
  EXPECT_NEAR(analytic, 0.0, 1e-12);
  EXPECT_NEAR(numeric, 0.0, 1e-9);
  EXPECT_LT(relative_error(analytic, numeric), 1e-2);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(Gradients, ReportGroupsByLayer) {
  GradCheckReport r;
  r.params = {{"a.weight", 1, 0, 0.1}, {"a.bias", 1, 0, 0.3}, {"b.weight", 1, 0, 0.2}};
  auto layers = r.by_layer();
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(layers[0].first, "a");
  EXPECT_DOUBLE_EQ(layers[0].second, 0.3);
  EXPECT_EQ(layers[1].first, "b");
}
