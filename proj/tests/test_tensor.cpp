#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "resfeat/checkpoint.hpp"
#include "resfeat/layers.hpp"
#include "resfeat/optim.hpp"
#include "resfeat/tensor.hpp"

using namespace resfeat;
using T = Tensor<double>;

namespace {

T random_tensor(Shape shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Direct 7-loop convolution with zero padding.
T naive_conv(const T& in, const T& w, const T& b) {
  const Index co = w.dim(0), ci = in.dim(0), h = in.dim(1), wd = in.dim(2);
  T out({co, h, wd});
  for (Index o = 0; o < co; ++o)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < wd; ++x) {
        double s = b[o];
        for (Index c = 0; c < ci; ++c)
          for (Index ky = 0; ky < 3; ++ky)
            for (Index kx = 0; kx < 3; ++kx) {
              const Index sy = y + ky - 1, sx = x + kx - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              s += w[((o * ci + c) * 3 + ky) * 3 + kx] * in[(c * h + sy) * wd + sx];
            }
        out[(o * h + y) * wd + x] = s;
      }
  return out;
}

}  // namespace

TEST(Tensor, ShapeAndViews) {
  Tensor<float> t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rank(), 2);
  t.matrix(2, 3)(1, 2) = 5.0f;
  EXPECT_EQ(t[5], 5.0f);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), 6);
  EXPECT_TRUE((t.grad() == 0.0f).all());
  EXPECT_THROW(Tensor<float>({2, 3}, Tensor<float>::Array::Zero(5)), DimensionError);
}

TEST(Conv2d, MatchesDirectConvolution) {
  for (unsigned seed = 0; seed < 3; ++seed) {
    const T in = random_tensor({3, 7, 9}, seed);
    const T w = random_tensor({4, 3, 3, 3}, seed + 10);
    const T b = random_tensor({4}, seed + 20);
    const T got = conv2d(in, w, b);
    const T want = naive_conv(in, w, b);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT((got.values() - want.values()).abs().maxCoeff(), 1e-12);
  }
}

TEST(Conv2d, LargeImageMatchesDirectConvolution) {
  // Taller than one internal row chunk.
  const T in = random_tensor({2, 70, 33}, 5);
  const T w = random_tensor({3, 2, 3, 3}, 6);
  const T b = random_tensor({3}, 7);
  EXPECT_LT((conv2d(in, w, b).values() - naive_conv(in, w, b).values()).abs().maxCoeff(), 1e-12);
}

TEST(Conv2d, ZeroInputGivesBias) {
  const T in({1, 3, 3});
  const T w = random_tensor({2, 1, 3, 3}, 1);
  T b({2});
  b[0] = 0.25;
  b[1] = -1.5;
  const T out = conv2d(in, w, b);
  for (Index i = 0; i < 9; ++i) {
    EXPECT_EQ(out[i], 0.25);
    EXPECT_EQ(out[9 + i], -1.5);
  }
}

TEST(Conv2d, IdentityKernel) {
  const T in = random_tensor({1, 4, 5}, 3);
  T w({1, 1, 3, 3});
  w[4] = 1.0;
  const T out = conv2d(in, w, T({1}));
  EXPECT_EQ((out.values() - in.values()).abs().maxCoeff(), 0.0);
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(conv2d(T({2, 4, 4}), T({3, 3, 3, 3}), T({3})), DimensionError);
  EXPECT_THROW(conv2d(T({3, 4, 4}), T({3, 3, 5, 5}), T({3})), DimensionError);
  EXPECT_THROW(conv2d(T({3, 4, 4}), T({3, 3, 3, 3}), T({2})), DimensionError);
}

TEST(Maxpool, Examples) {
  T in({1, 2, 2});
  in.values() << 1, 2, 3, 4;
  EXPECT_EQ(maxpool2x2(in)[0], 4.0);
  const T c = T::constant({2, 4, 6}, 0.7);
  const T out = maxpool2x2(c);
  EXPECT_EQ(out.shape(), (Shape{2, 2, 3}));
  EXPECT_TRUE((out.values() == 0.7).all());
  EXPECT_THROW(maxpool2x2(T({1, 3, 4})), DimensionError);
}

TEST(Maxpool, TieGoesToFirstElement) {
  T in = T::constant({1, 2, 2}, 1.0);
  maxpool2x2_backward(in, T::Array::Ones(1));
  EXPECT_EQ(in.grad()[0], 1.0);
  EXPECT_EQ(in.grad().tail(3).sum(), 0.0);
}

TEST(Linear, IdentityAndBias) {
  const T in = random_tensor({3, 4}, 2);
  T eye({4, 4});
  eye.matrix(4, 4).setIdentity();
  EXPECT_EQ((linear(in, eye, T({4})).values() - in.values()).abs().maxCoeff(), 0.0);
  T b({2});
  b[0] = 3.0;
  b[1] = -2.0;
  const T out = linear(in, T({2, 4}), b);
  for (Index r = 0; r < 3; ++r) {
    EXPECT_EQ(out[r * 2], 3.0);
    EXPECT_EQ(out[r * 2 + 1], -2.0);
  }
}

TEST(Relu, Examples) {
  T in({3});
  in.values() << -1, 0, 2;
  const T out = relu(in);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 2.0);
  relu_backward(in, T::Array::Ones(3));
  EXPECT_EQ(in.grad()[1], 0.0);  // subgradient at 0
  EXPECT_EQ(in.grad()[2], 1.0);
}

TEST(L2Normalize, Examples) {
  T v({2});
  v.values() << 3, 4;
  const T n = l2_normalize(v);
  EXPECT_NEAR(n[0], 0.6, 1e-15);
  EXPECT_NEAR(n[1], 0.8, 1e-15);
  EXPECT_EQ((l2_normalize(n).values() - n.values()).abs().maxCoeff(), 0.0);
  const T zero({4});
  EXPECT_TRUE((l2_normalize(zero).values() == 0.0).all());
}

TEST(L2Normalize, RowNormsAreOne) {
  const T in = random_tensor({50, 16}, 9);
  const T out = l2_normalize(in);
  const auto m = out.matrix(50, 16);
  for (Index r = 0; r < 50; ++r) EXPECT_NEAR(m.row(r).norm(), 1.0, 1e-6);
}

TEST(BilinearSample, Examples) {
  T dense({1, 2, 2});
  dense.values() << 1, 2, 3, 4;
  std::vector<Eigen::Vector2d> pts{{1.0, 0.0}, {0.5, 0.5}};
  const T out = bilinear_sample(dense, pts);
  EXPECT_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 2.5);
}

TEST(Adam, ZeroGradientLeavesValue) {
  Parameter<double> p("w", T::constant({3}, 1.5));
  p.adam_m.values().setConstant(0.2);
  p.value.zero_grad();
  adam_step(p, AdamOptions{});
  EXPECT_TRUE((p.value.values() == 1.5).all());
  EXPECT_NEAR(p.adam_m[0], 0.18, 1e-15);
  EXPECT_EQ(p.step_count, 1u);
}

TEST(Adam, SingleScalarHandComputed) {
  // m = 0.1 g, v = 0.001 g^2; m_hat = g, v_hat = g^2; step = lr g / (|g| + eps).
  Parameter<double> p("w", T::constant({1}, 2.0));
  p.value.grad()[0] = 0.5;
  AdamOptions opt;
  adam_step(p, opt);
  const double expected = 2.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.value[0], expected, 1e-13);
  EXPECT_EQ(p.value.grad()[0], 0.0);
}

TEST(Adam, DescendsQuadratic) {
  Parameter<double> p("w", T::constant({1}, 1.0));
  AdamOptions opt;
  opt.learning_rate = 0.1;
  double f = 1.0;
  for (int i = 0; i < 2; ++i) {
    p.value.grad()[0] = 2.0 * p.value[0];
    adam_step(p, opt);
    const double next = p.value[0] * p.value[0];
    EXPECT_LT(next, f);
    f = next;
  }
}

TEST(Adam, MissingGradientThrows) {
  Parameter<double> p("w", T::constant({1}, 1.0));
  EXPECT_THROW(adam_step(p, AdamOptions{}), Error);
}

TEST(GradCheck, AffineIsExact) {
  const T w = random_tensor({3, 4}, 4);
  const T b = random_tensor({3}, 5);
  const T in = random_tensor({2, 4}, 6);
  const auto r = grad_check_op(
      [&](const T& x) { return linear(x, w, b); },
      [&](T& x, const T::Array& g) {
        T wc = w, bc = b;
        linear_backward(x, wc, bc, g);
      },
      in, 1e-6);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradCheck, ConvPasses) {
  const T w = random_tensor({2, 2, 3, 3}, 7);
  const T b = random_tensor({2}, 8);
  const auto r = grad_check_op(
      [&](const T& x) { return conv2d(x, w, b); },
      [&](T& x, const T::Array& g) {
        T wc = w, bc = b;
        conv2d_backward(x, wc, bc, g);
      },
      random_tensor({2, 4, 5}, 9), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(GradCheck, DetectsCorruptedBackward) {
  const T w = random_tensor({3, 4}, 4);
  const T b = random_tensor({3}, 5);
  const auto r = grad_check_op(
      [&](const T& x) { return linear(x, w, b); },
      [&](T& x, const T::Array& g) {
        T wc = w, bc = b;
        linear_backward(x, wc, bc, T::Array(2.0 * g));
      },
      random_tensor({2, 4}, 6), 1e-4);
  EXPECT_FALSE(r.passed);
  // |2n - n| / max(1, 3|n|) peaks at 1/3 for |n| >= 1/3.
  EXPECT_LE(r.max_relative_error, 1.0 / 3.0 + 1e-9);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(Checkpoint, RoundTripInferenceAndTraining) {
  for (bool training : {false, true}) {
    Checkpoint c;
    c.training = training;
    c.config_json = R"({"variant":"fused"})";
    Parameter<float> p("layer.weight", Tensor<float>({2, 3}));
    p.value.values() << 1, 2, 3, 4, 5, 6;
    p.adam_m.values().setConstant(0.5f);
    p.adam_v.values().setConstant(0.25f);
    p.step_count = 7;
    c.parameters.push_back(p);
    const std::string bytes = serialize_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 4), "RFT1");
    const Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.training, training);
    EXPECT_EQ(back.config_json, c.config_json);
    ASSERT_EQ(back.parameters.size(), 1u);
    EXPECT_EQ(back.parameters[0].name, "layer.weight");
    EXPECT_EQ(back.parameters[0].value.shape(), (Shape{2, 3}));
    EXPECT_TRUE((back.parameters[0].value.values() == p.value.values()).all());
    if (training) {
      EXPECT_EQ(back.parameters[0].step_count, 7u);
      EXPECT_TRUE((back.parameters[0].adam_v.values() == 0.25f).all());
    }
    EXPECT_EQ(serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, RejectsCorruption) {
  Checkpoint c;
  c.parameters.emplace_back("w", Tensor<float>({4}));
  std::string bytes = serialize_checkpoint(c);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
}
