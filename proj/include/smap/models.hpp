#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smap/tensor.hpp"

namespace smap {

inline constexpr std::size_t kNumClasses = 4;

enum class ArchKind : std::uint8_t { Baseline = 0, Reduced = 1, Logistic = 2 };
enum class LayerType : std::uint8_t { Conv3D = 0, MaxPool3D = 1, Flatten = 2, Linear = 3 };
enum class Activation : std::uint8_t { None = 0, ReLU = 1, SoftMax = 2 };

inline constexpr ArchKind kAllArchs[] = {ArchKind::Baseline, ArchKind::Reduced,
                                         ArchKind::Logistic};

std::string_view arch_name(ArchKind kind);
ArchKind parse_arch(std::string_view name);  // throws std::invalid_argument

struct LayerSpec {
  LayerType type = LayerType::Flatten;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Extent3 kernel{};
  Extent3 stride{};
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Activation activation = Activation::None;
  Shape in_shape;
  Shape out_shape;

  bool parametric() const { return type == LayerType::Conv3D || type == LayerType::Linear; }
  Shape weight_shape() const;
  Shape bias_shape() const;
  std::size_t weight_count() const { return parametric() ? element_count(weight_shape()) : 0; }
  std::size_t bias_count() const { return parametric() ? element_count(bias_shape()) : 0; }
  std::size_t fan_in() const;
};

// Layer chain with statically propagated shapes.
struct ArchitectureSpec {
  ArchKind kind = ArchKind::Baseline;
  Shape input_shape;
  std::vector<LayerSpec> layers;

  static ArchitectureSpec make(ArchKind kind);

  std::size_t flatten_size() const;
  std::vector<const LayerSpec*> parametric_layers() const;
};

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  bool operator==(const LayerParams&) const = default;
};

// Weights and biases of every parametric layer, in chain order.
template <typename T>
struct BasicModelParams {
  ArchitectureSpec arch;
  std::vector<LayerParams<T>> layers;
  std::uint64_t seed = 0;

  template <typename U>
  BasicModelParams<U> cast() const {
    BasicModelParams<U> out{arch, {}, seed};
    for (const auto& l : layers) out.layers.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    return out;
  }

  // Bitwise parameter equality; ignores seed.
  bool same_parameters(const BasicModelParams& other) const {
    return arch.kind == other.arch.kind && layers == other.layers;
  }
};

using ModelParams = BasicModelParams<float>;

struct ParamCount {
  std::vector<std::size_t> per_layer;  // parametric layers, weights + biases
  std::size_t total = 0;
};

ParamCount param_count(const ArchitectureSpec& arch);

// Weights uniform in +-sqrt(1/fan_in), biases zero; deterministic in (arch, seed).
ModelParams build(ArchKind kind, std::uint64_t seed);

// All parameters zero.
template <typename T = float>
BasicModelParams<T> zero_params(ArchKind kind);

template <typename T>
struct ForwardTrace {
  // activations[0] is the input; activations[i + 1] is the output of layer i
  // (after ReLU where configured, before the final SoftMax).
  std::vector<Tensor<T>> activations;
  std::vector<std::vector<std::size_t>> argmax;  // per layer, pool layers only
};

template <typename T>
ForwardTrace<T> forward_trace(const BasicModelParams<T>& model, const Tensor<T>& sample);

template <typename T>
std::vector<T> forward_logits(const BasicModelParams<T>& model, const Tensor<T>& sample);

// Class probabilities over (SW, IF, MSH, MSP).
std::vector<float> forward(const ModelParams& model, const Tensor<float>& sample);

// Index of the largest value; ties resolve to the lowest index.
template <typename T>
int argmax(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int classify(const ModelParams& model, const Tensor<float>& sample);

}  // namespace smap
