#include "smap/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace smap {

namespace {

const Shape kSampleShape{1, 32, 16, 32};

LayerSpec conv(std::size_t in_ch, std::size_t out_ch, Extent3 kernel, Extent3 stride) {
  LayerSpec l;
  l.type = LayerType::Conv3D;
  l.in_channels = in_ch;
  l.out_channels = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec pool() {
  LayerSpec l;
  l.type = LayerType::MaxPool3D;
  l.kernel = {2, 2, 2};
  l.stride = {2, 2, 2};
  return l;
}

LayerSpec flatten() { return LayerSpec{}; }

LayerSpec dense(std::size_t in, std::size_t out, Activation act) {
  LayerSpec l;
  l.type = LayerType::Linear;
  l.in_features = in;
  l.out_features = out;
  l.activation = act;
  return l;
}

void propagate_shapes(ArchitectureSpec& arch) {
  Shape cur = arch.input_shape;
  for (LayerSpec& l : arch.layers) {
    l.in_shape = cur;
    switch (l.type) {
      case LayerType::Conv3D:
        if (cur.size() != 4 || cur[0] != l.in_channels) {
          throw ShapeError("conv layer expects " + std::to_string(l.in_channels) +
                           " channels, got " + to_string(cur));
        }
        cur = conv3d_output_shape(cur, l.weight_shape(), l.stride);
        break;
      case LayerType::MaxPool3D:
        if (cur.size() != 4) throw ShapeError("pool layer expects rank 4");
        cur = {cur[0], cur[1] / 2, cur[2] / 2, cur[3] / 2};
        break;
      case LayerType::Flatten:
        cur = {element_count(cur)};
        break;
      case LayerType::Linear:
        if (cur.size() != 1 || cur[0] != l.in_features) {
          throw ShapeError("linear layer expects " + std::to_string(l.in_features) +
                           " inputs, got " + to_string(cur));
        }
        cur = {l.out_features};
        break;
    }
    l.out_shape = cur;
  }
}

}  // namespace

std::string_view arch_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::Baseline: return "baseline";
    case ArchKind::Reduced: return "reduced";
    case ArchKind::Logistic: return "logistic";
  }
  return "unknown";
}

ArchKind parse_arch(std::string_view name) {
  for (ArchKind k : kAllArchs) {
    if (arch_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

Shape LayerSpec::weight_shape() const {
  switch (type) {
    case LayerType::Conv3D: return {out_channels, in_channels, kernel.d, kernel.h, kernel.w};
    case LayerType::Linear: return {out_features, in_features};
    default: return {};
  }
}

Shape LayerSpec::bias_shape() const {
  switch (type) {
    case LayerType::Conv3D: return {out_channels};
    case LayerType::Linear: return {out_features};
    default: return {};
  }
}

std::size_t LayerSpec::fan_in() const {
  switch (type) {
    case LayerType::Conv3D: return in_channels * kernel.d * kernel.h * kernel.w;
    case LayerType::Linear: return in_features;
    default: return 0;
  }
}

ArchitectureSpec ArchitectureSpec::make(ArchKind kind) {
  ArchitectureSpec a;
  a.kind = kind;
  a.input_shape = kSampleShape;
  switch (kind) {
    case ArchKind::Baseline:
      a.layers = {conv(1, 32, {5, 3, 5}, {2, 1, 2}), conv(32, 32, {3, 3, 3}, {1, 1, 1}), pool(),
                  flatten(), dense(6912, 128, Activation::ReLU),
                  dense(128, kNumClasses, Activation::SoftMax)};
      break;
    case ArchKind::Reduced:
      a.layers = {conv(1, 1, {5, 3, 5}, {2, 1, 2}), pool(), flatten(),
                  dense(343, 128, Activation::ReLU), dense(128, kNumClasses, Activation::SoftMax)};
      break;
    case ArchKind::Logistic:
      a.layers = {pool(), flatten(), dense(2048, kNumClasses, Activation::SoftMax)};
      break;
  }
  propagate_shapes(a);
  return a;
}

std::size_t ArchitectureSpec::flatten_size() const {
  for (const LayerSpec& l : layers) {
    if (l.type == LayerType::Flatten) return l.out_shape.at(0);
  }
  throw ShapeError("architecture has no flatten layer");
}

std::vector<const LayerSpec*> ArchitectureSpec::parametric_layers() const {
  std::vector<const LayerSpec*> out;
  for (const LayerSpec& l : layers) {
    if (l.parametric()) out.push_back(&l);
  }
  return out;
}

ParamCount param_count(const ArchitectureSpec& arch) {
  ParamCount c;
  for (const LayerSpec* l : arch.parametric_layers()) {
    c.per_layer.push_back(l->weight_count() + l->bias_count());
    c.total += c.per_layer.back();
  }
  return c;
}

ModelParams build(ArchKind kind, std::uint64_t seed) {
  ModelParams m{ArchitectureSpec::make(kind), {}, seed};
  std::mt19937_64 rng(seed);
  for (const LayerSpec* l : m.arch.parametric_layers()) {
    const float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(l->fan_in())));
    std::uniform_real_distribution<float> dist(-bound, bound);
    LayerParams<float> p{Tensor<float>(l->weight_shape()), Tensor<float>(l->bias_shape())};
    for (float& w : p.weight.data()) w = dist(rng);
    m.layers.push_back(std::move(p));
  }
  return m;
}

template <typename T>
BasicModelParams<T> zero_params(ArchKind kind) {
  BasicModelParams<T> m{ArchitectureSpec::make(kind), {}, 0};
  for (const LayerSpec* l : m.arch.parametric_layers()) {
    m.layers.push_back({Tensor<T>(l->weight_shape()), Tensor<T>(l->bias_shape())});
  }
  return m;
}

template <typename T>
ForwardTrace<T> forward_trace(const BasicModelParams<T>& model, const Tensor<T>& sample) {
  const ArchitectureSpec& arch = model.arch;
  if (sample.shape() != arch.input_shape) {
    throw ShapeError("model input must be " + to_string(arch.input_shape) + ", got " +
                     to_string(sample.shape()));
  }
  ForwardTrace<T> trace;
  trace.activations.reserve(arch.layers.size() + 1);
  trace.argmax.resize(arch.layers.size());
  trace.activations.push_back(sample);
  std::size_t p = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const Tensor<T>& x = trace.activations.back();
    switch (l.type) {
      case LayerType::Conv3D: {
        const LayerParams<T>& lp = model.layers.at(p++);
        trace.activations.push_back(conv3d(x, lp.weight, lp.bias.data(), l.stride));
        break;
      }
      case LayerType::MaxPool3D: {
        PoolResult<T> r = maxpool3d(x);
        trace.argmax[i] = std::move(r.argmax);
        trace.activations.push_back(std::move(r.output));
        break;
      }
      case LayerType::Flatten:
        trace.activations.push_back(x.reshaped({x.size()}));
        break;
      case LayerType::Linear: {
        const LayerParams<T>& lp = model.layers.at(p++);
        std::vector<T> y = linear(x.data(), lp.weight, lp.bias.data());
        if (l.activation == Activation::ReLU) y = relu(std::span<const T>(y));
        trace.activations.emplace_back(Shape{y.size()}, std::move(y));
        break;
      }
    }
  }
  return trace;
}

template <typename T>
std::vector<T> forward_logits(const BasicModelParams<T>& model, const Tensor<T>& sample) {
  return forward_trace(model, sample).activations.back().storage();
}

std::vector<float> forward(const ModelParams& model, const Tensor<float>& sample) {
  const std::vector<float> logits = forward_logits(model, sample);
  return softmax(std::span<const float>(logits));
}

int classify(const ModelParams& model, const Tensor<float>& sample) {
  // argmax of the logits equals argmax of the softmax output.
  const std::vector<float> logits = forward_logits(model, sample);
  return argmax(std::span<const float>(logits));
}

template BasicModelParams<float> zero_params<float>(ArchKind);
template BasicModelParams<double> zero_params<double>(ArchKind);
template ForwardTrace<float> forward_trace(const BasicModelParams<float>&, const Tensor<float>&);
template ForwardTrace<double> forward_trace(const BasicModelParams<double>&, const Tensor<double>&);
template std::vector<float> forward_logits(const BasicModelParams<float>&, const Tensor<float>&);
template std::vector<double> forward_logits(const BasicModelParams<double>&, const Tensor<double>&);

}  // namespace smap
