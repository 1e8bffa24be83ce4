#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "smap/tensor.hpp"

using namespace smap;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
std::vector<T> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::vector<T> v(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (T& x : v) x = static_cast<T>(u(rng));
  return v;
}

}  // namespace

TEST(Tensor, RowMajorIndexing) {
  Tensor<float> t({2, 3, 4, 5});
  std::iota(t.storage().begin(), t.storage().end(), 0.0f);
  EXPECT_EQ(t.at(1, 2, 3, 4), static_cast<float>(((1 * 3 + 2) * 4 + 3) * 5 + 4));
  EXPECT_EQ(t.at(0, 1, 0, 2), 22.0f);
}

TEST(Tensor, RejectsZeroExtentAndWrongLength) {
  EXPECT_THROW(Tensor<float>({2, 0, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor<float>({2, 3}, std::vector<float>(6)));
}

TEST(Conv3d, PaperShapes) {
  const Tensor<float> x({1, 32, 16, 32});
  const Tensor<float> k1({32, 1, 5, 3, 5});
  const std::vector<float> b1(32, 0.0f);
  const Tensor<float> y1 = conv3d(x, k1, b1, {2, 1, 2});
  EXPECT_EQ(y1.shape(), (Shape{32, 14, 14, 14}));

  const Tensor<float> k2({32, 32, 3, 3, 3});
  const Tensor<float> y2 = conv3d(y1, k2, b1, {1, 1, 1});
  EXPECT_EQ(y2.shape(), (Shape{32, 12, 12, 12}));
}

TEST(Conv3d, ZeroInputZeroBiasGivesZeros) {
  std::mt19937_64 rng(3);
  const Tensor<float> x({1, 32, 16, 32});
  const Tensor<float> k = random_tensor<float>({4, 1, 5, 3, 5}, rng);
  const Tensor<float> y = conv3d(x, k, std::vector<float>(4, 0.0f), {2, 1, 2});
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv3d, HandEvaluatedShape) {
  std::mt19937_64 rng(5);
  const Tensor<float> x = random_tensor<float>({1, 6, 4, 6}, rng);
  const Tensor<float> k = random_tensor<float>({1, 1, 5, 3, 5}, rng);
  EXPECT_EQ(conv3d(x, k, std::vector<float>{0.0f}, {2, 1, 2}).shape(), (Shape{1, 1, 2, 1}));
}

TEST(Conv3d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(9);
  const Tensor<float> x = random_tensor<float>({1, 5, 4, 3}, rng);
  const Tensor<float> k({1, 1, 1, 1, 1}, 1.0f);
  const Tensor<float> y = conv3d(x, k, std::vector<float>{0.0f}, {1, 1, 1});
  EXPECT_EQ(y.storage(), x.storage());
}

TEST(Conv3d, HandComputedElement) {
  // 1 channel, 2x2x2 input, 2x2x2 kernel of ones: output is the sum plus bias.
  const Tensor<float> x({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor<float> k({1, 1, 2, 2, 2}, 1.0f);
  const Tensor<float> y = conv3d(x, k, std::vector<float>{0.5f}, {1, 1, 1});
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 36.5f);
}

TEST(Conv3d, ErrorsOnMismatchedChannelsAndOversizedKernel) {
  const Tensor<float> x({2, 4, 4, 4});
  EXPECT_THROW(conv3d(x, Tensor<float>({1, 3, 2, 2, 2}), std::vector<float>{0}, {1, 1, 1}), ShapeError);
  EXPECT_THROW(conv3d(x, Tensor<float>({1, 2, 5, 2, 2}), std::vector<float>{0}, {1, 1, 1}), ShapeError);
  EXPECT_THROW(conv3d(x, Tensor<float>({1, 2, 2, 2, 2}), std::vector<float>{0, 0}, {1, 1, 1}), ShapeError);
  EXPECT_THROW(conv3d(x, Tensor<float>({1, 2, 2, 2, 2}), std::vector<float>{0}, {0, 1, 1}), ShapeError);
}

// Random valid configurations with extents <= 8; double precision so the only
// difference between the two formulations is summation order.
TEST(Conv3d, MatchesDirectLoopOracle) {
  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ci = pick(1, 3), co = pick(1, 4);
    const Shape in{ci, pick(1, 8), pick(1, 8), pick(1, 8)};
    const Shape ks{co, ci, pick(1, in[1]), pick(1, in[2]), pick(1, in[3])};
    const Extent3 s{pick(1, 3), pick(1, 3), pick(1, 3)};
    const Tensor<double> x = random_tensor<double>(in, rng);
    const Tensor<double> k = random_tensor<double>(ks, rng);
    const std::vector<double> b = random_vector<double>(co, rng);
    const Tensor<double> got = conv3d(x, k, b, s);
    const Tensor<double> want = oracle::conv3d(x, k, b, s);
    ASSERT_EQ(got.shape(), want.shape());
    ASSERT_EQ(got.shape(), conv3d_output_shape(in, ks, s));
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial;
  }
}

TEST(Conv3d, FloatPathMatchesOracleOnContinuousValues) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor<float> x = random_tensor<float>({2, 7, 6, 8}, rng, 0.0, 1.0);
    const Tensor<float> k = random_tensor<float>({3, 2, 3, 3, 3}, rng);
    const std::vector<float> b = random_vector<float>(3, rng);
    const Tensor<float> got = conv3d(x, k, b, {1, 2, 1});
    const Tensor<float> want = oracle::conv3d(x, k, b, {1, 2, 1});
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-5);
  }
}

TEST(Conv3d, OutputShapeFormulaProperty) {
  std::mt19937_64 rng(11);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int trial = 0; trial < 500; ++trial) {
    const Shape in{pick(1, 4), pick(1, 40), pick(1, 40), pick(1, 40)};
    const Shape ks{pick(1, 4), in[0], pick(1, in[1]), pick(1, in[2]), pick(1, in[3])};
    const Extent3 s{pick(1, 5), pick(1, 5), pick(1, 5)};
    const Shape out = conv3d_output_shape(in, ks, s);
    EXPECT_EQ(out[0], ks[0]);
    EXPECT_EQ(out[1], (in[1] - ks[2]) / s.d + 1);
    EXPECT_EQ(out[2], (in[2] - ks[3]) / s.h + 1);
    EXPECT_EQ(out[3], (in[3] - ks[4]) / s.w + 1);
  }
}

TEST(Conv3dBackward, AccumulatingFormAddsToExistingBuffers) {
  std::mt19937_64 rng(21);
  const Tensor<double> x = random_tensor<double>({2, 5, 4, 5}, rng);
  const Tensor<double> k = random_tensor<double>({3, 2, 2, 2, 3}, rng);
  const Tensor<double> dy = random_tensor<double>(conv3d_output_shape(x.shape(), k.shape(), {1, 1, 2}), rng);
  const Conv3dGrads<double> g = conv3d_backward(x, k, dy, {1, 1, 2}, true);

  std::vector<double> dk(k.size(), 1.0), db(3, 1.0);
  Tensor<double> dx;
  conv3d_backward_accumulate(x, k, dy, {1, 1, 2}, std::span<double>(dk), std::span<double>(db), &dx);
  for (std::size_t i = 0; i < dk.size(); ++i) EXPECT_NEAR(dk[i], g.kernels[i] + 1.0, 1e-12);
  for (std::size_t i = 0; i < db.size(); ++i) EXPECT_NEAR(db[i], g.bias[i] + 1.0, 1e-12);
  EXPECT_EQ(dx.storage(), g.input.storage());
}

// The input gradient of a convolution is the adjoint: <conv(x), dy> is linear
// in x, so its derivative along any direction v equals <v, dx>.
TEST(Conv3dBackward, InputGradientIsAdjoint) {
  std::mt19937_64 rng(31);
  const Extent3 s{2, 1, 2};
  const Tensor<double> x = random_tensor<double>({2, 7, 5, 7}, rng);
  const Tensor<double> k = random_tensor<double>({3, 2, 3, 2, 3}, rng);
  const std::vector<double> zero(3, 0.0);
  const Tensor<double> dy = random_tensor<double>(conv3d_output_shape(x.shape(), k.shape(), s), rng);
  const Tensor<double> v = random_tensor<double>(x.shape(), rng);
  const Conv3dGrads<double> g = conv3d_backward(x, k, dy, s, true);
  const Tensor<double> cv = oracle::conv3d(v, k, zero, s);
  const double lhs = std::inner_product(cv.storage().begin(), cv.storage().end(), dy.storage().begin(), 0.0);
  const double rhs = std::inner_product(v.storage().begin(), v.storage().end(), g.input.storage().begin(), 0.0);
  EXPECT_NEAR(lhs, rhs, 1e-9);
}

TEST(MaxPool3d, PaperShapes) {
  EXPECT_EQ(maxpool3d(Tensor<float>({1, 32, 16, 32})).output.size(), 2048u);
  EXPECT_EQ(maxpool3d(Tensor<float>({32, 12, 12, 12})).output.size(), 6912u);
  EXPECT_EQ(maxpool3d(Tensor<float>({1, 14, 14, 14})).output.size(), 343u);
  EXPECT_EQ(maxpool3d(Tensor<float>({1, 5, 3, 7})).output.shape(), (Shape{1, 2, 1, 3}));
}

TEST(MaxPool3d, RejectsExtentBelowTwo) {
  EXPECT_THROW(maxpool3d(Tensor<float>({1, 1, 4, 4})), ShapeError);
  EXPECT_THROW(maxpool3d(Tensor<float>({1, 4, 4, 1})), ShapeError);
}

TEST(MaxPool3d, TiesPickLowestFlatIndex) {
  const Tensor<float> x({1, 2, 2, 2}, 7.0f);
  const PoolResult<float> r = maxpool3d(x);
  EXPECT_EQ(r.output[0], 7.0f);
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(MaxPool3d, ArgmaxReconstructsOutputAndDominatesWindow) {
  std::mt19937_64 rng(8);
  const Tensor<float> x = random_tensor<float>({3, 7, 6, 9}, rng);
  const PoolResult<float> r = maxpool3d(x);
  const std::size_t od = 3, oh = 3, ow = 4;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t w = 0; w < ow; ++w) {
          const std::size_t o = ((c * od + z) * oh + y) * ow + w;
          EXPECT_EQ(r.output[o], x[r.argmax[o]]);
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t e = 0; e < 2; ++e) {
                EXPECT_GE(r.output[o], x.at(c, 2 * z + a, 2 * y + b, 2 * w + e));
              }
        }
}

TEST(MaxPool3dBackward, RoutesGradientToArgmax) {
  const Tensor<float> x({1, 2, 2, 4}, std::vector<float>{0, 1, 9, 2, 3, 4, 5, 6, 7, 8, 1, 1, 2, 2, 3, 3});
  const PoolResult<float> r = maxpool3d(x);
  const Tensor<float> g = maxpool3d_backward(Tensor<float>({1, 1, 1, 2}, std::vector<float>{10, 20}),
                                             r.argmax, x.shape());
  float total = 0;
  for (float v : g.data()) total += v;
  EXPECT_EQ(total, 30.0f);
  EXPECT_EQ(g[9], 10.0f);  // value 8 wins the first window
  EXPECT_EQ(g[2], 20.0f);  // value 9 wins the second window
}

TEST(Linear, HandArithmetic) {
  const Tensor<float> w({2, 2}, std::vector<float>{1, 2, 3, 4});
  const std::vector<float> y = linear<float>(std::vector<float>{1, 1}, w, std::vector<float>{0, 1});
  EXPECT_EQ(y, (std::vector<float>{3, 8}));
}

TEST(Linear, ZeroWeightGivesBiasAndIdentityGivesInput) {
  const std::vector<float> b{0.5f, -2.0f, 3.0f};
  EXPECT_EQ(linear<float>(std::vector<float>{4, 5, 6}, Tensor<float>({3, 3}), b), b);
  Tensor<float> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
  const std::vector<float> x{4, -5, 6};
  EXPECT_EQ(linear<float>(x, eye, std::vector<float>(3, 0.0f)), x);
}

TEST(Linear, DimensionMismatchRejected) {
  EXPECT_THROW(linear<float>(std::vector<float>{1, 2, 3}, Tensor<float>({2, 2}), std::vector<float>{0, 0}),
               ShapeError);
  EXPECT_THROW(linear<float>(std::vector<float>{1, 2}, Tensor<float>({2, 2}), std::vector<float>{0}),
               ShapeError);
}

TEST(Linear, BackwardMatchesClosedForm) {
  const Tensor<double> w({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<double> x{1, -1, 2}, dy{0.5, -1};
  const LinearGrads<double> g = linear_backward<double>(x, w, dy);
  EXPECT_EQ(g.weight.storage(), (std::vector<double>{0.5, -0.5, 1, -1, 1, -2}));
  EXPECT_EQ(g.bias, dy);
  EXPECT_EQ(g.input, (std::vector<double>{0.5 - 4, 1 - 5, 1.5 - 6}));
}

TEST(Activations, Relu) {
  EXPECT_EQ(relu(std::vector<float>{-1, 0, 2}), (std::vector<float>{0, 0, 2}));
  EXPECT_THROW(relu(std::vector<float>{1, NAN}), NumericError);
}

TEST(Activations, SoftmaxExamples) {
  const std::vector<double> u = softmax(std::vector<double>{0, 0, 0, 0});
  for (double p : u) EXPECT_DOUBLE_EQ(p, 0.25);
  const std::vector<double> p = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  EXPECT_THROW(softmax(std::vector<float>{0, NAN}), NumericError);
}

TEST(Activations, SoftmaxSumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-30.0f, 30.0f);
  for (int t = 0; t < 200; ++t) {
    std::vector<float> x(4);
    for (float& v : x) v = u(rng);
    const std::vector<float> p = softmax(x);
    float sum = 0;
    for (float v : p) {
      EXPECT_GT(v, 0.0f);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0f, 1e-6f);
    std::vector<float> shifted = x;
    for (float& v : shifted) v += 7.25f;
    const std::vector<float> q = softmax(shifted);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], q[i], 1e-6f);
  }
}

TEST(Activations, SoftmaxSurvivesLargeLogits) {
  const std::vector<float> p = softmax(std::vector<float>{1000.0f, 1000.0f});
  EXPECT_FLOAT_EQ(p[0], 0.5f);
  const std::vector<double> lp = log_softmax(std::vector<double>{-1000.0, 0.0});
  EXPECT_NEAR(lp[0], -1000.0, 1e-9);
  EXPECT_NEAR(lp[1], 0.0, 1e-12);
}
