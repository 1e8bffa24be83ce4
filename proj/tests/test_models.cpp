#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "smap/models.hpp"
#include "smap/preprocess.hpp"

using namespace smap;

namespace {

Tensor<float> random_input(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> x({1, kEnergyBins, kPolarBins, kAzimuthBins});
  for (float& v : x.data()) v = u(rng);
  return x;
}

}  // namespace

TEST(Architecture, LayerChains) {
  const ArchitectureSpec b = ArchitectureSpec::make(ArchKind::Baseline);
  ASSERT_EQ(b.layers.size(), 6u);
  EXPECT_EQ(b.layers[0].type, LayerType::Conv3D);
  EXPECT_EQ(b.layers[0].kernel, (Extent3{5, 3, 5}));
  EXPECT_EQ(b.layers[0].stride, (Extent3{2, 1, 2}));
  EXPECT_EQ(b.layers[0].out_channels, 32u);
  EXPECT_EQ(b.layers[0].activation, Activation::None);
  EXPECT_EQ(b.layers[1].kernel, (Extent3{3, 3, 3}));
  EXPECT_EQ(b.layers[1].in_channels, 32u);
  EXPECT_EQ(b.layers[2].type, LayerType::MaxPool3D);
  EXPECT_EQ(b.layers[3].type, LayerType::Flatten);
  EXPECT_EQ(b.layers[4].in_features, 6912u);
  EXPECT_EQ(b.layers[4].activation, Activation::ReLU);
  EXPECT_EQ(b.layers[5].out_features, 4u);
  EXPECT_EQ(b.layers[5].activation, Activation::SoftMax);

  const ArchitectureSpec r = ArchitectureSpec::make(ArchKind::Reduced);
  ASSERT_EQ(r.layers.size(), 5u);
  EXPECT_EQ(r.layers[0].out_channels, 1u);
  EXPECT_EQ(r.layers[3].in_features, 343u);

  const ArchitectureSpec l = ArchitectureSpec::make(ArchKind::Logistic);
  ASSERT_EQ(l.layers.size(), 3u);
  EXPECT_EQ(l.layers[0].type, LayerType::MaxPool3D);
  EXPECT_EQ(l.layers[2].in_features, 2048u);
}

TEST(Architecture, FlattenSizes) {
  EXPECT_EQ(ArchitectureSpec::make(ArchKind::Baseline).flatten_size(), 6912u);
  EXPECT_EQ(ArchitectureSpec::make(ArchKind::Reduced).flatten_size(), 343u);
  EXPECT_EQ(ArchitectureSpec::make(ArchKind::Logistic).flatten_size(), 2048u);
}

TEST(Architecture, NamesRoundTrip) {
  for (ArchKind k : kAllArchs) EXPECT_EQ(parse_arch(arch_name(k)), k);
  EXPECT_THROW(parse_arch("resnet"), std::invalid_argument);
}

TEST(ParamCount, HandCounts) {
  const ParamCount b = param_count(ArchitectureSpec::make(ArchKind::Baseline));
  EXPECT_EQ(b.per_layer, (std::vector<std::size_t>{2432, 27680, 884864, 516}));
  EXPECT_EQ(b.total, 915492u);
  const ParamCount r = param_count(ArchitectureSpec::make(ArchKind::Reduced));
  EXPECT_EQ(r.per_layer, (std::vector<std::size_t>{76, 44032, 516}));
  EXPECT_EQ(r.total, 44624u);
  EXPECT_EQ(param_count(ArchitectureSpec::make(ArchKind::Logistic)).total, 8196u);
}

TEST(ParamCount, ReducedLinearWeightReduction) {
  const auto b = ArchitectureSpec::make(ArchKind::Baseline).parametric_layers();
  const auto r = ArchitectureSpec::make(ArchKind::Reduced).parametric_layers();
  const double ratio = static_cast<double>(r[1]->weight_count()) / static_cast<double>(b[2]->weight_count());
  EXPECT_EQ(r[1]->weight_count(), 43904u);
  EXPECT_EQ(b[2]->weight_count(), 884736u);
  EXPECT_NEAR(ratio, 0.0496, 5e-5);
  EXPECT_NEAR(100.0 * (1.0 - ratio), 95.0, 0.05);
}

TEST(Build, DeterministicAndSeedSensitive) {
  const ModelParams a = build(ArchKind::Baseline, 42);
  const ModelParams b = build(ArchKind::Baseline, 42);
  const ModelParams c = build(ArchKind::Baseline, 84);
  EXPECT_TRUE(a.same_parameters(b));
  EXPECT_FALSE(a.same_parameters(c));
}

TEST(Build, ShapesAndInitRange) {
  for (ArchKind k : kAllArchs) {
    const ModelParams m = build(k, 7);
    const auto specs = m.arch.parametric_layers();
    ASSERT_EQ(specs.size(), m.layers.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      EXPECT_EQ(m.layers[i].weight.shape(), specs[i]->weight_shape());
      EXPECT_EQ(m.layers[i].bias.shape(), specs[i]->bias_shape());
      const float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(specs[i]->fan_in())));
      for (float w : m.layers[i].weight.data()) {
        EXPECT_LE(std::abs(w), bound);
      }
      for (float b : m.layers[i].bias.data()) EXPECT_EQ(b, 0.0f);
      total += m.layers[i].weight.size() + m.layers[i].bias.size();
    }
    EXPECT_EQ(total, param_count(m.arch).total);
  }
  EXPECT_EQ(build(ArchKind::Logistic, 1).layers[0].weight.shape(), (Shape{4, 2048}));
}

TEST(Forward, ProbabilitiesArePositiveAndSumToOne) {
  for (ArchKind k : kAllArchs) {
    const ModelParams m = build(k, 3);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const std::vector<float> p = forward(m, random_input(s));
      ASSERT_EQ(p.size(), 4u);
      float sum = 0;
      for (float v : p) {
        EXPECT_GT(v, 0.0f);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0f, 1e-6f);
    }
  }
}

TEST(Forward, StaticShapesMatchRuntimeActivations) {
  for (ArchKind k : kAllArchs) {
    const ModelParams m = build(k, 5);
    const ForwardTrace<float> t = forward_trace(m, random_input(1));
    ASSERT_EQ(t.activations.size(), m.arch.layers.size() + 1);
    EXPECT_EQ(t.activations[0].shape(), m.arch.input_shape);
    for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
      EXPECT_EQ(t.activations[i + 1].shape(), m.arch.layers[i].out_shape) << arch_name(k) << " layer " << i;
    }
  }
}

TEST(Forward, ZeroLogisticGivesUniform) {
  const std::vector<float> p = forward(zero_params(ArchKind::Logistic), random_input(9));
  for (float v : p) EXPECT_FLOAT_EQ(v, 0.25f);
  EXPECT_EQ(classify(zero_params(ArchKind::Logistic), random_input(9)), 0);
}

TEST(Forward, DeterministicOutputs) {
  const ModelParams m = build(ArchKind::Reduced, 42);
  const Tensor<float> x = random_input(4);
  EXPECT_EQ(forward(m, x), forward(m, x));
}

TEST(Forward, WrongInputShapeRejected) {
  const ModelParams m = build(ArchKind::Logistic, 42);
  EXPECT_THROW(forward(m, Tensor<float>({32, 16, 32})), ShapeError);
  EXPECT_THROW(forward(m, Tensor<float>({1, 32, 16, 31})), ShapeError);
}

TEST(Classify, ArgmaxAndTieBreak) {
  EXPECT_EQ(argmax(std::span<const float>(std::vector<float>{0.1f, 0.7f, 0.1f, 0.1f})), 1);
  EXPECT_EQ(argmax(std::span<const float>(std::vector<float>{0.25f, 0.25f, 0.25f, 0.25f})), 0);
  EXPECT_EQ(argmax(std::span<const float>(std::vector<float>{0.1f, 0.3f, 0.3f, 0.3f})), 1);
}

TEST(Classify, InvariantUnderMonotoneTransformOfOutputs) {
  const ModelParams m = build(ArchKind::Baseline, 42);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Tensor<float> x = random_input(s);
    const std::vector<float> logits = forward_logits(m, x);
    std::vector<float> transformed = logits;
    for (float& v : transformed) v = 3.0f * std::tanh(v) + 1.0f;
    const std::vector<float> p = forward(m, x);
    std::vector<float> scaled = p;
    for (float& v : scaled) v *= 17.0f;
    const int c = classify(m, x);
    EXPECT_EQ(c, argmax(std::span<const float>(transformed)));
    EXPECT_EQ(c, argmax(std::span<const float>(scaled)));
    EXPECT_EQ(c, argmax(std::span<const float>(p)));
  }
}
