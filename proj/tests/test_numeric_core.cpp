#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dacnet/autograd.hpp"
#include "dacnet/conv.hpp"
#include "dacnet/errors.hpp"
#include "dacnet/gradcheck.hpp"
#include "dacnet/layers.hpp"
#include "dacnet/mac_counter.hpp"
#include "dacnet/parallel.hpp"
#include "oracles.hpp"

using namespace dacnet;

namespace {

Tensor ones(const Shape& s) { return Tensor(s, 1.0); }

struct WorkerReset {
  ~WorkerReset() { set_worker_count(1); }
};

}  // namespace

TEST_SUITE("numeric_core") {

TEST_CASE("tensor keeps data length equal to the shape product") {
  Tensor t(Shape{2, 3, 4});
  CHECK(t.size() == 24);
  t.reshape(Shape{6, 4});
  CHECK(t.size() == 24);
  CHECK_THROWS_AS(t.reshape(Shape{5, 5}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
}

TEST_CASE("all-ones depthwise 3x3 over a 3x3 map sums nine taps") {
  const ConvSpec s = make_depthwise(3, 1);
  const Tensor y = conv2d_forward(ones({1, 1, 3, 3}), ones(s.kernel_shape()), nullptr, s);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("dilation 2 spans a 5x5 map with a 3x3 kernel") {
  const ConvSpec s = make_standard(3, 1, 1, 1, 0, 2);
  CHECK(s.effective_extent() == 5);
  const Tensor y = conv2d_forward(ones({1, 1, 5, 5}), ones(s.kernel_shape()), nullptr, s);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("random standard d=2 layer matches the nested-loop oracle") {
  std::mt19937_64 rng(11);
  const ConvSpec s = make_standard(3, 2, 3, 1, 1, 2);
  const Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  CHECK(max_abs_diff(conv2d_forward(x, k, nullptr, s), oracle::conv2d(x, k, nullptr, s)) <= 1e-12);
}

TEST_CASE("randomized oracle sweep over mode, dilation, stride, padding and bias") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> small(1, 4);
  int cases = 0;
  for (ConvMode mode : {ConvMode::standard, ConvMode::depthwise, ConvMode::pointwise}) {
    for (std::size_t d : {1, 2, 3}) {
      for (std::size_t st : {1, 2}) {
        for (int rep = 0; rep < 4; ++rep) {
          ConvSpec s;
          s.mode = mode;
          s.in_channels = static_cast<std::size_t>(small(rng));
          s.out_channels = mode == ConvMode::depthwise ? s.in_channels : static_cast<std::size_t>(small(rng));
          s.kernel_size = mode == ConvMode::pointwise ? 1 : (rep % 2 ? 3 : 2);
          s.dilation = mode == ConvMode::pointwise ? 1 : d;
          s.stride = st;
          s.pad_h = mode == ConvMode::pointwise ? 0 : static_cast<std::size_t>(rep % 3);
          s.pad_w = mode == ConvMode::pointwise ? 0 : static_cast<std::size_t>((rep + 1) % 3);
          s.has_bias = rep == 3;
          const std::size_t h = s.effective_extent() + static_cast<std::size_t>(small(rng)) + 2;
          const std::size_t w = s.effective_extent() + static_cast<std::size_t>(small(rng));
          const Tensor x = oracle::random_tensor({2, s.in_channels, h, w}, rng);
          const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
          const Tensor bias = oracle::random_tensor({s.out_channels}, rng);
          const Tensor* bp = s.has_bias ? &bias : nullptr;
          INFO("mode ", to_string(mode), " d ", s.dilation, " s ", st, " rep ", rep);
          CHECK(max_abs_diff(conv2d_forward(x, k, bp, s), oracle::conv2d(x, k, bp, s)) <= 1e-12);
          ++cases;
        }
      }
    }
  }
  CHECK(cases == 72);
}

TEST_CASE("d=1 through the dilated kernel equals the undilated path") {
  std::mt19937_64 rng(3);
  for (ConvMode mode : {ConvMode::standard, ConvMode::depthwise}) {
    ConvSpec s = mode == ConvMode::standard ? make_standard(3, 3, 4, 1, 1) : make_depthwise(3, 3, 2, 1);
    const Tensor x = oracle::random_tensor({2, 3, 7, 9}, rng);
    const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
    CHECK(max_abs_diff(kernels::conv2d_dilated(x, k, nullptr, s), kernels::conv2d_undilated(x, k, nullptr, s)) <=
          1e-12);
    CHECK(max_abs_diff(conv2d_forward(x, k, nullptr, s), kernels::conv2d_undilated(x, k, nullptr, s)) <= 1e-12);
  }
  // A 1x1 standard convolution and the pointwise path agree.
  const Tensor x = oracle::random_tensor({2, 5, 4, 6}, rng);
  const ConvSpec pw = make_pointwise(5, 7);
  ConvSpec st = make_standard(1, 5, 7);
  const Tensor k = oracle::random_tensor(pw.kernel_shape(), rng);
  CHECK(max_abs_diff(conv2d_forward(x, k, nullptr, pw), conv2d_forward(x, k, nullptr, st)) <= 1e-12);
  CHECK_THROWS_AS(kernels::conv2d_undilated(x, oracle::random_tensor({7, 5, 3, 3}, rng), nullptr,
                                            make_standard(3, 5, 7, 1, 2, 2)),
                  ConfigError);
}

TEST_CASE("dilated 3x3 equals a 5x5 kernel with interleaved zeros") {
  std::mt19937_64 rng(5);
  for (std::size_t stride : {1, 2}) {
    const ConvSpec d2 = make_standard(3, 2, 3, stride, 2, 2);
    const ConvSpec k5 = make_standard(5, 2, 3, stride, 2, 1);
    const Tensor x = oracle::random_tensor({1, 2, 9, 8}, rng);
    const Tensor k3 = oracle::random_tensor(d2.kernel_shape(), rng);
    Tensor k5w(k5.kernel_shape());
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t u = 0; u < 3; ++u)
          for (std::size_t v = 0; v < 3; ++v) k5w.at(n, m, 2 * u, 2 * v) = k3.at(n, m, u, v);
    CHECK(max_abs_diff(conv2d_forward(x, k3, nullptr, d2), conv2d_forward(x, k5w, nullptr, k5)) <= 1e-12);
  }
}

TEST_CASE("output-shape law holds across kernel, dilation, stride, padding and extent") {
  int checked = 0;
  for (std::size_t k : {1, 3, 5})
    for (std::size_t d : {1, 2, 3})
      for (std::size_t s : {1, 2})
        for (std::size_t p : {0, 1, 2})
          for (std::size_t h = 5; h <= 16; ++h) {
            const ConvSpec spec = make_standard(k, 1, 1, s, p, d);
            const long eff = static_cast<long>(d * (k - 1) + 1);
            const long padded = static_cast<long>(h + 2 * p);
            if (eff > padded) {
              CHECK_THROWS_AS(spec.output_extent(h, p), ShapeError);
              continue;
            }
            const std::size_t expected = (h + 2 * p - d * (k - 1) - 1) / s + 1;
            CHECK(spec.output_extent(h, p) == expected);
            // The executed convolution produces the same extent.
            const Tensor y = conv2d_forward(Tensor(Shape{1, 1, h, 3 + 2 * d * k}), Tensor(spec.kernel_shape(), 1.0),
                                            nullptr, spec);
            CHECK(y.dim(2) == expected);
            ++checked;
          }
  CHECK(checked == 596);
}

TEST_CASE("depthwise output channel m depends only on input channel m") {
  std::mt19937_64 rng(8);
  const ConvSpec s = make_depthwise(3, 4, 1, 2, 2);
  const Tensor x = oracle::random_tensor({1, 4, 6, 6}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  const Tensor base = conv2d_forward(x, k, nullptr, s);
  for (std::size_t m = 0; m < 4; ++m) {
    Tensor xp = x;
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t w = 0; w < 6; ++w) xp.at(0, m, h, w) += 1.0 + static_cast<double>(h * w);
    const Tensor y = conv2d_forward(xp, k, nullptr, s);
    for (std::size_t n = 0; n < 4; ++n) {
      double diff = 0.0;
      for (std::size_t i = 0; i < y.dim(2); ++i)
        for (std::size_t j = 0; j < y.dim(3); ++j) diff = std::max(diff, std::abs(y.at(0, n, i, j) - base.at(0, n, i, j)));
      if (n == m) CHECK(diff > 0.0);
      else CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("bias-free convolution is linear") {
  std::mt19937_64 rng(9);
  for (ConvMode mode : {ConvMode::standard, ConvMode::depthwise, ConvMode::pointwise}) {
    const ConvSpec s = mode == ConvMode::standard    ? make_standard(3, 3, 2, 2, 1, 3)
                       : mode == ConvMode::depthwise ? make_depthwise(3, 3, 1, 1, 2)
                                                     : make_pointwise(3, 5);
    const Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng);
    const Tensor y = oracle::random_tensor({2, 3, 8, 8}, rng);
    const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
    const double a = 1.7, b = -0.45;
    const Tensor lhs = conv2d_forward(x * a + y * b, k, nullptr, s);
    const Tensor rhs = conv2d_forward(x, k, nullptr, s) * a + conv2d_forward(y, k, nullptr, s) * b;
    CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
  }
}

TEST_CASE("shape errors name the offending dimension") {
  const ConvSpec s = make_standard(3, 2, 4, 1, 0);
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const ShapeError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message([&] { conv2d_forward(Tensor(Shape{1, 3, 5, 5}), Tensor(s.kernel_shape()), nullptr, s); })
            .find("channel") != std::string::npos);
  CHECK(message([&] { conv2d_forward(Tensor(Shape{1, 2, 5, 5}), Tensor(Shape{4, 2, 3, 2}), nullptr, s); })
            .find("kernel_width") != std::string::npos);
  CHECK(message([&] { conv2d_forward(Tensor(Shape{1, 2, 2, 5}), Tensor(s.kernel_shape()), nullptr, s); })
            .find("height") != std::string::npos);
  CHECK(message([&] { conv2d_forward(Tensor(Shape{1, 2, 5, 2}), Tensor(s.kernel_shape()), nullptr, s); })
            .find("width") != std::string::npos);
}

TEST_CASE("spec invariants reject depthwise channel changes and dilated pointwise") {
  ConvSpec dw = make_depthwise(3, 4);
  CHECK_NOTHROW(dw.validate());
  dw.out_channels = 5;
  CHECK_THROWS_AS(dw.validate(), ConfigError);
  ConvSpec pw = make_pointwise(2, 3);
  pw.dilation = 2;
  CHECK_THROWS_AS(pw.validate(), ConfigError);
  pw = make_pointwise(2, 3);
  pw.kernel_size = 3;
  CHECK_THROWS_AS(pw.validate(), ConfigError);
}

TEST_CASE("zero output gradient gives zero gradients; scalar case is the product rule") {
  std::mt19937_64 rng(4);
  ConvSpec s = make_standard(3, 2, 3, 1, 1, 2);
  s.has_bias = true;
  const Tensor x = oracle::random_tensor({2, 2, 6, 6}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  const ConvGradients g = conv2d_backward(Tensor(s.output_shape(x.shape())), x, k, s);
  for (double v : g.input.values()) CHECK(v == 0.0);
  for (double v : g.kernel.values()) CHECK(v == 0.0);
  REQUIRE(g.bias.has_value());
  for (double v : g.bias->values()) CHECK(v == 0.0);

  const ConvSpec one = make_pointwise(1, 1);
  const Tensor xs(Shape{1, 1, 1, 1}, std::vector<double>{1.5});
  const Tensor ws(Shape{1, 1, 1, 1}, std::vector<double>{-0.25});
  const ConvGradients gs = conv2d_backward(Tensor(Shape{1, 1, 1, 1}, 1.0), xs, ws, one);
  CHECK(gs.input[0] == -0.25);
  CHECK(gs.kernel[0] == 1.5);
  CHECK_THROWS_AS(conv2d_backward(Tensor(Shape{1, 1, 2, 1}), xs, ws, one), ShapeError);
}

TEST_CASE("depthwise d=2 backward matches central differences") {
  std::mt19937_64 rng(12);
  const ConvSpec s = make_depthwise(3, 3, 1, 2, 2);
  const Tensor x = oracle::random_tensor({1, 3, 6, 6}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  const Tensor w = oracle::random_tensor(s.output_shape(x.shape()), rng);
  const auto fn = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    return ops::weighted_sum(&tape, ops::conv2d(&tape, v[0], v[1], nullptr, s), w);
  });
  CHECK(finite_difference_check(fn, {x, k}, 1e-4).max_relative_error <= 1e-6);
}

TEST_CASE("every conv mode and stride passes the finite-difference check") {
  std::mt19937_64 rng(13);
  for (ConvMode mode : {ConvMode::standard, ConvMode::depthwise, ConvMode::pointwise}) {
    for (std::size_t st : {1, 2}) {
      ConvSpec s = mode == ConvMode::standard    ? make_standard(3, 2, 3, st, 1, 2)
                   : mode == ConvMode::depthwise ? make_depthwise(3, 2, st, 1, 1)
                                                 : make_pointwise(2, 3);
      s.stride = st;
      s.has_bias = true;
      const Tensor x = oracle::random_tensor({2, 2, 6, 5}, rng);
      const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
      const Tensor b = oracle::random_tensor({s.out_channels}, rng);
      const Tensor w = oracle::random_tensor(s.output_shape(x.shape()), rng);
      const auto fn = tape_function([&](Tape& tape, const std::vector<Var>& v) {
        return ops::weighted_sum(&tape, ops::conv2d(&tape, v[0], v[1], v[2], s), w);
      });
      INFO("mode ", to_string(mode), " stride ", st);
      CHECK(finite_difference_check(fn, {x, k, b}, 1e-4).max_relative_error <= 1e-5);
    }
  }
}

TEST_CASE("batchnorm train mode normalizes each channel") {
  std::mt19937_64 rng(21);
  const Tensor x = oracle::random_tensor({4, 3, 5, 6}, rng, -3.0, 5.0);
  RunningStats stats(3);
  const Tensor y = batchnorm_forward(x, Tensor(Shape{3}, 1.0), Tensor(Shape{3}, 0.0), stats, Mode::train, {});
  for (std::size_t c = 0; c < 3; ++c) {
    auto moments = [&](const Tensor& t) {
      double mean = 0.0, sq = 0.0;
      const double n = 4 * 5 * 6;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t h = 0; h < 5; ++h)
          for (std::size_t w = 0; w < 6; ++w) mean += t.at(b, c, h, w);
      mean /= n;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t h = 0; h < 5; ++h)
          for (std::size_t w = 0; w < 6; ++w) sq += (t.at(b, c, h, w) - mean) * (t.at(b, c, h, w) - mean);
      return std::pair{mean, sq / n};
    };
    const double raw_var = moments(x).second;
    const auto [mean, var] = moments(y);
    CHECK(std::abs(mean) <= 1e-10);
    // Unit variance up to the epsilon in the denominator.
    CHECK(std::abs(var - raw_var / (raw_var + 1e-5)) <= 1e-10);
    CHECK(std::abs(var - 1.0) <= 1e-5);
  }
}

TEST_CASE("batchnorm of a constant channel yields beta") {
  RunningStats stats(2);
  const Tensor beta(Shape{2}, std::vector<double>{0.3, -1.2});
  const Tensor y = batchnorm_forward(Tensor(Shape{2, 2, 3, 3}, 4.0), Tensor(Shape{2}, 2.0), beta, stats,
                                     Mode::train, {});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 2; ++c) CHECK(y.at(b, c, 1, 1) == doctest::Approx(beta[c]).epsilon(1e-12));
}

TEST_CASE("batchnorm eval mode is recomputable from running statistics") {
  std::mt19937_64 rng(22);
  RunningStats stats(3);
  const Tensor gamma = oracle::random_tensor({3}, rng, 0.5, 2.0);
  const Tensor beta = oracle::random_tensor({3}, rng);
  const BatchNormOptions opt{1e-5, 0.1};
  for (int i = 0; i < 3; ++i) {
    batchnorm_forward(oracle::random_tensor({2, 3, 4, 4}, rng, -2.0, 3.0), gamma, beta, stats, Mode::train, opt);
  }
  const Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
  const Tensor y = batchnorm_forward(x, gamma, beta, stats, Mode::eval, opt);
  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) {
          const double expect =
              gamma[c] * (x.at(b, c, h, w) - stats.mean[c]) / std::sqrt(stats.var[c] + opt.epsilon) + beta[c];
          worst = std::max(worst, std::abs(expect - y.at(b, c, h, w)));
        }
  CHECK(worst <= 1e-12);
}

TEST_CASE("batchnorm running statistics use momentum and the unbiased variance") {
  const Tensor x(Shape{2, 1, 1, 2}, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  RunningStats stats(1);
  batchnorm_forward(x, Tensor(Shape{1}, 1.0), Tensor(Shape{1}, 0.0), stats, Mode::train, {1e-5, 0.1});
  // mean 3, unbiased variance 14/3
  CHECK(stats.mean[0] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(stats.var[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("batchnorm rejects mismatched parameters") {
  RunningStats stats(2);
  CHECK_THROWS_AS(batchnorm_forward(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{3}, 1.0), Tensor(Shape{2}), stats,
                                    Mode::train, {}),
                  ShapeError);
}

TEST_CASE("batchnorm backward in both modes matches central differences") {
  std::mt19937_64 rng(23);
  const Tensor x = oracle::random_tensor({3, 2, 3, 4}, rng);
  const Tensor g = oracle::random_tensor({2}, rng, 0.5, 1.5);
  const Tensor b = oracle::random_tensor({2}, rng);
  const Tensor w = oracle::random_tensor({3, 2, 3, 4}, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    RunningStats stats(2);
    stats.mean = oracle::random_tensor({2}, rng);
    stats.var = oracle::random_tensor({2}, rng, 0.5, 2.0);
    const auto fn = tape_function([&](Tape& tape, const std::vector<Var>& v) {
      RunningStats local = stats;
      return ops::weighted_sum(&tape, ops::batchnorm(&tape, v[0], v[1], v[2], local, mode, {}), w);
    });
    CHECK(finite_difference_check(fn, {x, g, b}, 1e-4).max_relative_error <= 1e-5);
  }
}

TEST_CASE("relu, pooling, linear and softmax basics") {
  const Tensor r = relu_forward(Tensor(Shape{4}, std::vector<double>{-1.0, 0.0, 2.0, -0.5}));
  CHECK(r[0] == 0.0);
  CHECK(r[2] == 2.0);
  CHECK(r[3] == 0.0);

  const Tensor pooled = global_avg_pool_forward(Tensor(Shape{2, 3, 4, 5}, 2.5));
  REQUIRE(pooled.shape() == Shape{2, 3});
  for (double v : pooled.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));

  const Tensor x(Shape{1, 2}, std::vector<double>{1.0, 2.0});
  const Tensor w(Shape{3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1});
  const Tensor bias(Shape{3}, std::vector<double>{0.5, 0.0, -1.0});
  const Tensor y = linear_forward(x, w, &bias);
  CHECK(y[0] == 1.5);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == 2.0);

  const std::vector<std::size_t> labels{0, 8};
  const SoftmaxCrossEntropy ce = softmax_cross_entropy(Tensor(Shape{2, 9}, 0.0), labels);
  for (double p : ce.probs.values()) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(ce.loss == doctest::Approx(std::log(9.0)).epsilon(1e-14));
  const std::vector<std::size_t> bad{9, 0};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor(Shape{2, 9}, 0.0), bad), ConfigError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  std::mt19937_64 rng(31);
  Tensor logits = oracle::random_tensor({4, 9}, rng, -50.0, 50.0);
  logits[0] = 1e4;
  const Tensor p = softmax(logits);
  for (std::size_t b = 0; b < 4; ++b) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) sum += p[b * 9 + c];
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  CHECK(all_finite(p));
}

TEST_CASE("auxiliary layer gradients match central differences") {
  std::mt19937_64 rng(32);
  const std::vector<std::size_t> labels{2, 0, 4};
  const auto ce = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    return ops::softmax_cross_entropy(&tape, v[0], labels);
  });
  CHECK(finite_difference_check(ce, {oracle::random_tensor({3, 5}, rng, -2, 2)}, 1e-4).max_relative_error <= 1e-6);

  const Tensor w4 = oracle::random_tensor({2, 3}, rng);
  const auto lin = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    return ops::weighted_sum(&tape, ops::linear(&tape, v[0], v[1], v[2]), w4);
  });
  CHECK(finite_difference_check(lin, {oracle::random_tensor({2, 4}, rng), oracle::random_tensor({3, 4}, rng),
                                      oracle::random_tensor({3}, rng)},
                                1e-4)
            .max_relative_error <= 1e-5);

  // Inputs kept away from the kink so the central difference never straddles it.
  Tensor xr = oracle::random_tensor({2, 2, 3, 3}, rng);
  for (double& v : xr.values()) v += v >= 0 ? 0.1 : -0.1;
  const Tensor wr = oracle::random_tensor({2, 2}, rng);
  const auto pool = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    return ops::weighted_sum(&tape, ops::global_avg_pool(&tape, ops::relu(&tape, v[0])), wr);
  });
  CHECK(finite_difference_check(pool, {xr}, 1e-4).max_relative_error <= 1e-5);

  const Tensor wc = oracle::random_tensor({2, 5}, rng);
  const auto cat = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    const Var sum = ops::add(&tape, v[0], v[1]);
    const std::vector<Var> parts{sum, v[2]};
    return ops::weighted_sum(&tape, ops::concat(&tape, parts), wc);
  });
  CHECK(finite_difference_check(cat, {oracle::random_tensor({2, 2}, rng), oracle::random_tensor({2, 2}, rng),
                                      oracle::random_tensor({2, 3}, rng)},
                                1e-4)
            .max_relative_error <= 1e-5);
}

TEST_CASE("finite-difference harness: identity, mutation and non-finite detection") {
  std::mt19937_64 rng(41);
  const Tensor w = oracle::random_tensor({3, 4}, rng);
  const auto identity = tape_function([&](Tape& tape, const std::vector<Var>& v) {
    return ops::weighted_sum(&tape, v[0], w);
  });
  CHECK(finite_difference_check(identity, {oracle::random_tensor({3, 4}, rng)}, 1e-4).max_relative_error <= 1e-10);

  // Kernel gradient scaled by two: the harness must flag it.
  const ConvSpec s = make_standard(3, 2, 2, 1, 1, 2);
  const Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  const Tensor wy = oracle::random_tensor(s.output_shape(x.shape()), rng);
  const ScalarFunction corrupted = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    const Tensor y = conv2d_forward(in[0], in[1], nullptr, s);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) loss += y[i] * wy[i];
    if (grads) {
      ConvGradients g = conv2d_backward(wy, in[0], in[1], s);
      g.kernel *= 2.0;
      *grads = {g.input, g.kernel};
    }
    return loss;
  };
  CHECK(finite_difference_check(corrupted, {x, k}, 1e-4).max_relative_error >= 0.49);

  const ScalarFunction blows_up = [](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    if (grads) *grads = {Tensor(in[0].shape(), 1.0)};
    return in[0][1] > 0.5 ? std::nan("") : in[0][0];
  };
  try {
    finite_difference_check(blows_up, {Tensor(Shape{3}, std::vector<double>{0.0, 0.5, 0.0})}, 1e-4);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("element 1") != std::string::npos);
  }
}

TEST_CASE("tape populates gradients for participating parameters only") {
  std::mt19937_64 rng(42);
  const Var x = make_var(oracle::random_tensor({2, 3}, rng), true);
  const Var used = make_var(oracle::random_tensor({4, 3}, rng), true);
  const Var unused = make_var(oracle::random_tensor({4, 3}, rng), true);
  const Var frozen = make_var(oracle::random_tensor({4}, rng), false);
  Tape tape;
  const Var y = ops::linear(&tape, x, used, frozen);
  const Var loss = ops::weighted_sum(&tape, y, Tensor(Shape{2, 4}, 1.0));
  tape.backward(loss);
  CHECK(used->has_grad);
  CHECK(x->has_grad);
  CHECK_FALSE(unused->has_grad);
  CHECK_FALSE(frozen->has_grad);
  // Without a tape nothing is recorded.
  const Var y2 = ops::linear(nullptr, x, used, frozen);
  CHECK(y2->value.shape() == Shape{2, 4});
}

TEST_CASE("MAC counter counts only inside a scope and matches the hand count") {
  std::mt19937_64 rng(51);
  const ConvSpec s = make_depthwise(3, 32, 1, 2, 2);
  const Tensor x = oracle::random_tensor({1, 32, 10, 10}, rng);
  const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
  conv2d_forward(x, k, nullptr, s);
  MacCounterScope scope;
  const Tensor y = conv2d_forward(x, k, nullptr, s);
  CHECK(scope.count() == oracle::hand_macs(s, y.dim(2), y.dim(3)));
  CHECK(scope.count() == 28800);
}

TEST_CASE("forward and backward are bit-identical for any worker count") {
  WorkerReset reset;
  std::mt19937_64 rng(61);
  for (ConvMode mode : {ConvMode::standard, ConvMode::depthwise, ConvMode::pointwise}) {
    const ConvSpec s = mode == ConvMode::standard    ? make_standard(3, 5, 6, 2, 1, 2)
                       : mode == ConvMode::depthwise ? make_depthwise(3, 5, 1, 2, 2)
                                                     : make_pointwise(5, 9);
    const Tensor x = oracle::random_tensor({3, 5, 9, 11}, rng);
    const Tensor k = oracle::random_tensor(s.kernel_shape(), rng);
    const Tensor gy = oracle::random_tensor(s.output_shape(x.shape()), rng);
    set_worker_count(1);
    const Tensor y1 = conv2d_forward(x, k, nullptr, s);
    const ConvGradients g1 = conv2d_backward(gy, x, k, s);
    for (std::size_t workers : {2, 3, 7}) {
      set_worker_count(workers);
      CHECK(max_abs_diff(conv2d_forward(x, k, nullptr, s), y1) == 0.0);
      const ConvGradients g = conv2d_backward(gy, x, k, s);
      CHECK(max_abs_diff(g.input, g1.input) == 0.0);
      CHECK(max_abs_diff(g.kernel, g1.kernel) == 0.0);
    }
  }
}

}  // TEST_SUITE
