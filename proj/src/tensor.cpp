#include "smap/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smap {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

struct ConvGeometry {
  std::size_t c_in, d, h, w;
  std::size_t c_out, kd, kh, kw;
  std::size_t od, oh, ow;
  Extent3 stride;

  std::size_t rows() const { return c_in * kd * kh * kw; }
  std::size_t cols() const { return od * oh * ow; }
  std::size_t taps() const { return kd * kh * kw; }
  bool unit_stride() const { return stride.d == 1 && stride.h == 1 && stride.w == 1; }
  // Unit-stride outputs indexed on the input grid: output (z, y, x) sits at
  // flat input position z*h*w + y*w + x, and this is one past the last one.
  std::size_t grid_span() const { return (od - 1) * h * w + (oh - 1) * w + ow; }
  std::size_t tap_offset(std::size_t a, std::size_t b, std::size_t e) const { return (a * h + b) * w + e; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, Extent3 stride) {
  if (input.size() != 4) throw ShapeError("conv3d input must be rank 4, got " + to_string(input));
  if (kernels.size() != 5) {
    throw ShapeError("conv3d kernels must be rank 5, got " + to_string(kernels));
  }
  if (kernels[1] != input[0]) {
    throw ShapeError("conv3d kernel input channels " + std::to_string(kernels[1]) +
                     " != input channels " + std::to_string(input[0]));
  }
  if (kernels[2] > input[1] || kernels[3] > input[2] || kernels[4] > input[3]) {
    throw ShapeError("conv3d kernel " + to_string(kernels) + " larger than input " +
                     to_string(input));
  }
  if (stride.d == 0 || stride.h == 0 || stride.w == 0) {
    throw ShapeError("conv3d strides must be >= 1");
  }
  ConvGeometry g{};
  g.c_in = input[0];
  g.d = input[1];
  g.h = input[2];
  g.w = input[3];
  g.c_out = kernels[0];
  g.kd = kernels[2];
  g.kh = kernels[3];
  g.kw = kernels[4];
  g.od = window_out(g.d, g.kd, stride.d);
  g.oh = window_out(g.h, g.kh, stride.h);
  g.ow = window_out(g.w, g.kw, stride.w);
  g.stride = stride;
  return g;
}

// Per-thread scratch for the unrolled matrices; reusing it avoids mapping and
// faulting in several megabytes on every call.
template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[4];
  return buffers[slot];
}

// Unrolls every receptive field into a column: (C_in*kD*kH*kW) x (D'*H'*W').
template <typename T>
const std::vector<T>& im2col(const Tensor<T>& input, const ConvGeometry& g) {
  std::vector<T>& col = scratch<T>(0);
  col.resize(g.rows() * g.cols());
  const T* src = input.data().data();
  T* dst = col.data();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t a = 0; a < g.kd; ++a) {
      for (std::size_t b = 0; b < g.kh; ++b) {
        for (std::size_t e = 0; e < g.kw; ++e) {
          for (std::size_t z = 0; z < g.od; ++z) {
            const std::size_t iz = z * g.stride.d + a;
            for (std::size_t y = 0; y < g.oh; ++y) {
              const std::size_t iy = y * g.stride.h + b;
              const T* row = src + ((c * g.d + iz) * g.h + iy) * g.w + e;
              for (std::size_t x = 0; x < g.ow; ++x) *dst++ = row[x * g.stride.w];
            }
          }
        }
      }
    }
  }
  return col;
}

template <typename T>
void col2im_accumulate(const std::vector<T>& col, const ConvGeometry& g, Tensor<T>& out) {
  T* dst = out.data().data();
  const T* src = col.data();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t a = 0; a < g.kd; ++a) {
      for (std::size_t b = 0; b < g.kh; ++b) {
        for (std::size_t e = 0; e < g.kw; ++e) {
          for (std::size_t z = 0; z < g.od; ++z) {
            const std::size_t iz = z * g.stride.d + a;
            for (std::size_t y = 0; y < g.oh; ++y) {
              const std::size_t iy = y * g.stride.h + b;
              T* row = dst + ((c * g.d + iz) * g.h + iy) * g.w + e;
              for (std::size_t x = 0; x < g.ow; ++x) row[x * g.stride.w] += *src++;
            }
          }
        }
      }
    }
  }
}

// Unit-stride convolution laid out on the input grid: output (z, y, x) sits
// at flat input position z*h*w + y*w + x, so kernel tap (a, b, e) reads a
// contiguous run of every input channel shifted by tap_offset and no unrolled
// copy of the input is needed. Grid positions that are not valid outputs are
// computed and then dropped.

// Kernels regrouped tap-major: taps x (C_out x C_in).
template <typename T>
const std::vector<T>& pack_taps(const Tensor<T>& kernels, const ConvGeometry& g) {
  std::vector<T>& packed = scratch<T>(2);
  packed.resize(g.taps() * g.c_out * g.c_in);
  const T* k = kernels.data().data();
  for (std::size_t o = 0; o < g.c_out; ++o)
    for (std::size_t i = 0; i < g.c_in; ++i)
      for (std::size_t t = 0; t < g.taps(); ++t)
        packed[(t * g.c_out + o) * g.c_in + i] = k[(o * g.c_in + i) * g.taps() + t];
  return packed;
}

std::vector<std::size_t> tap_offsets(const ConvGeometry& g) {
  std::vector<std::size_t> offs;
  for (std::size_t a = 0; a < g.kd; ++a)
    for (std::size_t b = 0; b < g.kh; ++b)
      for (std::size_t e = 0; e < g.kw; ++e) offs.push_back(g.tap_offset(a, b, e));
  return offs;
}

template <typename T>
void slab_forward(const Tensor<T>& input, const Tensor<T>& kernels, ConstView<T> bias,
                  const ConvGeometry& g, Tensor<T>& out) {
  const std::size_t plane = g.d * g.h * g.w, span = g.grid_span();
  const std::vector<T>& packed = pack_taps(kernels, g);
  const std::vector<std::size_t> offs = tap_offsets(g);
  std::vector<T>& grid = scratch<T>(3);
  grid.resize(g.c_out * span);
  MatrixMap<T> y(grid.data(), g.c_out, span);
  const T* x = input.data().data();
  for (std::size_t t = 0; t < offs.size(); ++t) {
    ConstMatrixMap<T> k(packed.data() + t * g.c_out * g.c_in, g.c_out, g.c_in);
    ConstStridedMap<T> xs(x + offs[t], g.c_in, span, Eigen::OuterStride<>(plane));
    if (t == 0) {
      y.noalias() = k * xs;
    } else {
      y.noalias() += k * xs;
    }
  }

  T* dst = out.data().data();
  for (std::size_t c = 0; c < g.c_out; ++c)
    for (std::size_t z = 0; z < g.od; ++z)
      for (std::size_t r = 0; r < g.oh; ++r) {
        const T* src = grid.data() + c * span + (z * g.h + r) * g.w;
        for (std::size_t q = 0; q < g.ow; ++q) *dst++ = src[q] + bias[c];
      }
}

template <typename T>
void slab_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& grad_output,
                   const ConvGeometry& g, std::span<T> dkernels, std::span<T> dbias,
                   Tensor<T>* dinput) {
  const std::size_t plane = g.d * g.h * g.w, span = g.grid_span();
  const std::vector<std::size_t> offs = tap_offsets(g);
  const T* gy = grad_output.data().data();
  const T* x = input.data().data();
  const std::size_t n_out = g.od * g.oh * g.ow;
  for (std::size_t o = 0; o < g.c_out; ++o) {
    T sum{0};
    for (std::size_t q = 0; q < n_out; ++q) sum += gy[o * n_out + q];
    dbias[o] += sum;
  }

  // The output gradient scattered onto the grid layout, zero elsewhere.
  std::vector<T>& grid = scratch<T>(3);
  grid.assign(g.c_out * span, T{0});
  for (std::size_t o = 0; o < g.c_out; ++o)
    for (std::size_t z = 0; z < g.od; ++z)
      for (std::size_t r = 0; r < g.oh; ++r)
        std::copy_n(gy + ((o * g.od + z) * g.oh + r) * g.ow, g.ow, grid.data() + o * span + (z * g.h + r) * g.w);
  ConstMatrixMap<T> dy(grid.data(), g.c_out, span);

  RowMatrix<T> dk(g.c_out, g.c_in);
  for (std::size_t t = 0; t < offs.size(); ++t) {
    dk.noalias() = dy * ConstStridedMap<T>(x + offs[t], g.c_in, span, Eigen::OuterStride<>(plane)).transpose();
    for (std::size_t o = 0; o < g.c_out; ++o)
      for (std::size_t i = 0; i < g.c_in; ++i) dkernels[(o * g.c_in + i) * g.taps() + t] += dk(o, i);
  }

  if (dinput != nullptr) {
    const std::vector<T>& packed = pack_taps(kernels, g);
    *dinput = Tensor<T>(input.shape());
    T* dx = dinput->data().data();
    for (std::size_t t = 0; t < offs.size(); ++t) {
      ConstMatrixMap<T> k(packed.data() + t * g.c_out * g.c_in, g.c_out, g.c_in);
      StridedMap<T>(dx + offs[t], g.c_in, span, Eigen::OuterStride<>(plane)).noalias() += k.transpose() * dy;
    }
  }
}

template <typename T>
void require_finite(std::span<const T> x, const char* op) {
  for (T v : x) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Shape conv3d_output_shape(const Shape& input, const Shape& kernels, Extent3 stride) {
  const ConvGeometry g = conv_geometry(input, kernels, stride);
  return {g.c_out, g.od, g.oh, g.ow};
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernels, ConstView<T> bias,
                 Extent3 stride) {
  const ConvGeometry g = conv_geometry(input.shape(), kernels.shape(), stride);
  if (bias.size() != g.c_out) {
    throw ShapeError("conv3d bias length " + std::to_string(bias.size()) + " != " +
                     std::to_string(g.c_out) + " output channels");
  }
  Tensor<T> out({g.c_out, g.od, g.oh, g.ow});
  if (g.unit_stride()) {
    slab_forward(input, kernels, bias, g, out);
    return out;
  }
  const std::vector<T>& col = im2col(input, g);
  MatrixMap<T> y(out.data().data(), g.c_out, g.cols());
  ConstMatrixMap<T> k(kernels.data().data(), g.c_out, g.rows());
  ConstMatrixMap<T> x(col.data(), g.rows(), g.cols());
  y.noalias() = k * x;
  y.colwise() += ConstVectorMap<T>(bias.data(), g.c_out);
  return out;
}

template <typename T>
void conv3d_backward_accumulate(const Tensor<T>& input, const Tensor<T>& kernels,
                                const Tensor<T>& grad_output, Extent3 stride,
                                std::span<T> dkernels, std::span<T> dbias, Tensor<T>* dinput) {
  const ConvGeometry g = conv_geometry(input.shape(), kernels.shape(), stride);
  const Shape expected{g.c_out, g.od, g.oh, g.ow};
  if (grad_output.shape() != expected) {
    throw ShapeError("conv3d_backward grad shape " + to_string(grad_output.shape()) +
                     " != output shape " + to_string(expected));
  }
  if (dkernels.size() != kernels.size() || dbias.size() != g.c_out) {
    throw ShapeError("conv3d_backward: gradient buffer sizes do not match kernels");
  }
  if (g.unit_stride()) {
    slab_backward(input, kernels, grad_output, g, dkernels, dbias, dinput);
    return;
  }
  const std::vector<T>& col = im2col(input, g);
  ConstMatrixMap<T> dy(grad_output.data().data(), g.c_out, g.cols());
  ConstMatrixMap<T> x(col.data(), g.rows(), g.cols());
  ConstMatrixMap<T> k(kernels.data().data(), g.c_out, g.rows());

  MatrixMap<T>(dkernels.data(), g.c_out, g.rows()).noalias() += dy * x.transpose();
  VectorMap<T>(dbias.data(), g.c_out) += dy.rowwise().sum();

  if (dinput != nullptr) {
    std::vector<T>& dcol = scratch<T>(1);
    dcol.resize(g.rows() * g.cols());
    MatrixMap<T> dx(dcol.data(), g.rows(), g.cols());
    dx.noalias() = k.transpose() * dy;
    *dinput = Tensor<T>(input.shape());
    col2im_accumulate(dcol, g, *dinput);
  }
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                               const Tensor<T>& grad_output, Extent3 stride,
                               bool need_input_grad) {
  Conv3dGrads<T> grads;
  grads.kernels = Tensor<T>(kernels.shape());
  grads.bias.assign(kernels.shape().empty() ? 0 : kernels.extent(0), T{0});
  conv3d_backward_accumulate(input, kernels, grad_output, stride, grads.kernels.data(),
                             std::span<T>(grads.bias), need_input_grad ? &grads.input : nullptr);
  return grads;
}

template <typename T>
PoolResult<T> maxpool3d(const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw ShapeError("maxpool3d input must be rank 4, got " + to_string(s));
  if (s[1] < 2 || s[2] < 2 || s[3] < 2) {
    throw ShapeError("maxpool3d pooled extents must be >= 2, got " + to_string(s));
  }
  const std::size_t c_n = s[0], d_n = s[1], h_n = s[2], w_n = s[3];
  const std::size_t od = d_n / 2, oh = h_n / 2, ow = w_n / 2;
  PoolResult<T> r{Tensor<T>({c_n, od, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  const T* src = input.data().data();
  std::size_t o = 0;
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t z = 0; z < od; ++z) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = ((c * d_n + 2 * z) * h_n + 2 * y) * w_n + 2 * x;
          // Window visited in increasing flat index; strict '>' keeps the lowest index on ties.
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t b = 0; b < 2; ++b) {
              const std::size_t base = ((c * d_n + 2 * z + a) * h_n + 2 * y + b) * w_n + 2 * x;
              for (std::size_t e = 0; e < 2; ++e) {
                if (src[base + e] > src[best]) best = base + e;
              }
            }
          }
          r.output[o] = src[best];
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_output,
                             std::span<const std::size_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw ShapeError("maxpool3d_backward: argmax map length does not match gradient");
  }
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad.size()) throw ShapeError("maxpool3d_backward: argmax out of range");
    grad[argmax[i]] += grad_output[i];
  }
  return grad;
}

template <typename T>
std::vector<T> linear(ConstView<T> input, const Tensor<T>& weight, ConstView<T> bias) {
  if (weight.rank() != 2) throw ShapeError("linear weight must be rank 2");
  const std::size_t m = weight.extent(0), n = weight.extent(1);
  if (input.size() != n || bias.size() != m) {
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " vs input " +
                     std::to_string(input.size()) + ", bias " + std::to_string(bias.size()));
  }
  std::vector<T> out(m);
  VectorMap<T> y(out.data(), m);
  y.noalias() = ConstMatrixMap<T>(weight.data().data(), m, n) * ConstVectorMap<T>(input.data(), n);
  y += ConstVectorMap<T>(bias.data(), m);
  return out;
}

template <typename T>
void linear_backward_accumulate(ConstView<T> input, const Tensor<T>& weight,
                                ConstView<T> grad_output, std::span<T> dweight,
                                std::span<T> dbias, std::span<T> dinput) {
  if (weight.rank() != 2) throw ShapeError("linear weight must be rank 2");
  const std::size_t m = weight.extent(0), n = weight.extent(1);
  if (input.size() != n || grad_output.size() != m) {
    throw ShapeError("linear_backward: dimension mismatch");
  }
  if (dweight.size() != m * n || dbias.size() != m || (!dinput.empty() && dinput.size() != n)) {
    throw ShapeError("linear_backward: gradient buffer sizes do not match weight");
  }
  ConstVectorMap<T> dy(grad_output.data(), m);
  ConstVectorMap<T> x(input.data(), n);
  MatrixMap<T>(dweight.data(), m, n).noalias() += dy * x.transpose();
  VectorMap<T>(dbias.data(), m) += dy;
  if (!dinput.empty()) {
    VectorMap<T>(dinput.data(), n).noalias() =
        ConstMatrixMap<T>(weight.data().data(), m, n).transpose() * dy;
  }
}

template <typename T>
LinearGrads<T> linear_backward(ConstView<T> input, const Tensor<T>& weight,
                               ConstView<T> grad_output) {
  if (weight.rank() != 2) throw ShapeError("linear weight must be rank 2");
  LinearGrads<T> g;
  g.weight = Tensor<T>(weight.shape());
  g.bias.assign(weight.extent(0), T{0});
  g.input.assign(weight.extent(1), T{0});
  linear_backward_accumulate(input, weight, grad_output, g.weight.data(), std::span<T>(g.bias),
                             std::span<T>(g.input));
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  require_finite(x.data(), "relu");
  Tensor<T> out = x;
  for (T& v : out.data()) v = std::max(v, T{0});
  return out;
}

template <typename T>
std::vector<T> relu(std::span<const T> x) {
  require_finite(x, "relu");
  std::vector<T> out(x.begin(), x.end());
  for (T& v : out) v = std::max(v, T{0});
  return out;
}

template <typename T>
void relu_backward_inplace(std::span<T> grad, ConstView<T> activation) {
  if (grad.size() != activation.size()) throw ShapeError("relu_backward: length mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{0})) grad[i] = T{0};
  }
}

template <typename T>
std::vector<T> log_softmax(std::span<const T> x) {
  if (x.empty()) throw ShapeError("softmax of empty vector");
  require_finite(x, "softmax");
  const T mx = *std::max_element(x.begin(), x.end());
  T sum{0};
  for (T v : x) sum += std::exp(v - mx);
  const T log_sum = std::log(sum);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mx - log_sum;
  return out;
}

template <typename T>
std::vector<T> softmax(std::span<const T> x) {
  if (x.empty()) throw ShapeError("softmax of empty vector");
  require_finite(x, "softmax");
  const T mx = *std::max_element(x.begin(), x.end());
  std::vector<T> out(x.size());
  T sum{0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

#define SMAP_INSTANTIATE_TENSOR_OPS(T)                                                        \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, ConstView<T>, Extent3);       \
  template void conv3d_backward_accumulate(const Tensor<T>&, const Tensor<T>&,               \
                                           const Tensor<T>&, Extent3, std::span<T>,           \
                                           std::span<T>, Tensor<T>*);                         \
  template void linear_backward_accumulate(ConstView<T>, const Tensor<T>&, ConstView<T>,      \
                                           std::span<T>, std::span<T>, std::span<T>);         \
  template Conv3dGrads<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                          const Tensor<T>&, Extent3, bool);                   \
  template PoolResult<T> maxpool3d(const Tensor<T>&);                                         \
  template Tensor<T> maxpool3d_backward(const Tensor<T>&, std::span<const std::size_t>,       \
                                        const Shape&);                                        \
  template std::vector<T> linear(ConstView<T>, const Tensor<T>&, ConstView<T>);               \
  template LinearGrads<T> linear_backward(ConstView<T>, const Tensor<T>&, ConstView<T>);      \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template std::vector<T> relu(std::span<const T>);                                           \
  template void relu_backward_inplace(std::span<T>, ConstView<T>);                            \
  template std::vector<T> softmax(std::span<const T>);                                        \
  template std::vector<T> log_softmax(std::span<const T>);

SMAP_INSTANTIATE_TENSOR_OPS(float)
SMAP_INSTANTIATE_TENSOR_OPS(double)

#undef SMAP_INSTANTIATE_TENSOR_OPS

}  // namespace smap
