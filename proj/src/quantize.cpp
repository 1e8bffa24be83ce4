#include "smap/quantize.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smap {

namespace {

void reject_nan(float x, const char* op) {
  if (std::isnan(x)) throw NumericError(std::string(op) + ": NaN input");
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::size_t bits_per_scalar(PrecisionFormat fmt) {
  switch (fmt) {
    case PrecisionFormat::F32: return 32;
    case PrecisionFormat::F16: return 16;
    case PrecisionFormat::BF16: return 16;
    case PrecisionFormat::I8: return 8;
  }
  throw std::invalid_argument("unknown precision format");
}

std::string_view format_name(PrecisionFormat fmt) {
  switch (fmt) {
    case PrecisionFormat::F32: return "f32";
    case PrecisionFormat::F16: return "f16";
    case PrecisionFormat::BF16: return "bf16";
    case PrecisionFormat::I8: return "i8";
  }
  return "unknown";
}

PrecisionFormat parse_format(std::string_view name) {
  for (PrecisionFormat f : kAllFormats) {
    if (format_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown precision format '" + std::string(name) + "'");
}

std::int8_t int8_encode(float x) {
  reject_nan(x, "int8_encode");
  // Exact in double: a float times 100 needs at most 31 significant bits.
  const double y = static_cast<double>(x) * 100.0;
  if (y > 127.0) return 127;
  if (y < -127.0) return -127;
  return static_cast<std::int8_t>(std::round(y));
}

float int8_decode(std::int8_t q, float scale) {
  return static_cast<float>(q) * scale;
}

std::uint16_t f16_encode(float x, std::size_t* saturated) {
  reject_nan(x, "f16_encode");
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t mag = bits & 0x7FFFFFFFu;

  if (mag > 0x477FE000u) {  // |x| > 65504
    if (saturated) ++*saturated;
    return static_cast<std::uint16_t>(sign | 0x7BFFu);
  }
  if (mag < 0x38800000u) {  // below 2^-14: half subnormal range
    if (mag <= 0x33000000u) return sign;  // <= 2^-25 ties to even zero
    const std::uint32_t exp = mag >> 23;
    const std::uint32_t mant = (mag & 0x7FFFFFu) | 0x800000u;
    const std::uint32_t shift = 126 - exp;  // value in units of 2^-24 is mant >> shift
    std::uint32_t q = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    const std::uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (q & 1u))) ++q;
    return static_cast<std::uint16_t>(sign | q);
  }
  std::uint32_t h = (((mag >> 23) - 112) << 10) | ((mag >> 13) & 0x3FFu);
  const std::uint32_t rem = mag & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // carry may bump the exponent
  return static_cast<std::uint16_t>(sign | h);
}

float f16_decode(std::uint16_t h) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(h) & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  if (exp == 0) {
    const float v = std::ldexp(static_cast<float>(mant), -24);
    return sign ? -v : v;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp + 112) << 23) | (mant << 13));
}

std::uint16_t bf16_encode(float x, std::size_t* saturated) {
  reject_nan(x, "bf16_encode");
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t rounded = bits + 0x7FFFu + ((bits >> 16) & 1u);
  auto b = static_cast<std::uint16_t>(rounded >> 16);
  if ((b & 0x7F80u) == 0x7F80u) {
    if (saturated) ++*saturated;
    b = static_cast<std::uint16_t>((b & 0x8000u) | 0x7F7Fu);
  }
  return b;
}

float bf16_decode(std::uint16_t b) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16);
}

std::vector<std::uint8_t> encode_values(std::span<const float> values, PrecisionFormat fmt,
                                        float scale, std::size_t* saturated) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * bytes_per_scalar(fmt));
  switch (fmt) {
    case PrecisionFormat::F32:
      for (float v : values) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
      }
      break;
    case PrecisionFormat::F16:
      for (float v : values) put_u16(out, f16_encode(v, saturated));
      break;
    case PrecisionFormat::BF16:
      for (float v : values) put_u16(out, bf16_encode(v, saturated));
      break;
    case PrecisionFormat::I8: {
      if (scale != kInt8Scale) {
        throw std::invalid_argument("only the 0.01 Int8 scale is supported for encoding");
      }
      for (float v : values) out.push_back(static_cast<std::uint8_t>(int8_encode(v)));
      break;
    }
  }
  return out;
}

std::vector<float> decode_values(std::span<const std::uint8_t> blob, std::size_t count,
                                 PrecisionFormat fmt, float scale) {
  const std::size_t width = bytes_per_scalar(fmt);
  if (blob.size() != count * width) {
    throw ShapeError("blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                     std::to_string(count * width) + " for " + std::to_string(count) + " " +
                     std::string(format_name(fmt)) + " values");
  }
  std::vector<float> out(count);
  const std::uint8_t* p = blob.data();
  for (std::size_t i = 0; i < count; ++i, p += width) {
    switch (fmt) {
      case PrecisionFormat::F32:
        out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                      (static_cast<std::uint32_t>(p[2]) << 16) |
                                      (static_cast<std::uint32_t>(p[3]) << 24));
        break;
      case PrecisionFormat::F16: out[i] = f16_decode(get_u16(p)); break;
      case PrecisionFormat::BF16: out[i] = bf16_decode(get_u16(p)); break;
      case PrecisionFormat::I8: {
        const auto q = static_cast<std::int8_t>(p[0]);
        if (q == -128) throw NumericError("Int8 code -128 is outside the encoder range");
        out[i] = int8_decode(q, scale);
        break;
      }
    }
  }
  return out;
}

std::size_t QuantizedModel::blob_bytes() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

QuantizedModel quantize_model(const ModelParams& model, PrecisionFormat fmt) {
  QuantizedModel qm;
  qm.arch = model.arch;
  qm.format = fmt;
  for (const auto& l : model.layers) {
    EncodedLayer e;
    e.weight_shape = l.weight.shape();
    e.bias_shape = l.bias.shape();
    e.weight = encode_values(l.weight.data(), fmt, qm.scale, &qm.saturated);
    e.bias = encode_values(l.bias.data(), fmt, qm.scale, &qm.saturated);
    qm.layers.push_back(std::move(e));
  }
  qm.roundoff = roundoff_norm(model, dequantize_for_inference(qm));
  return qm;
}

ModelParams dequantize_for_inference(const QuantizedModel& qm) {
  ModelParams m{qm.arch, {}, 0};
  const auto specs = qm.arch.parametric_layers();
  if (specs.size() != qm.layers.size()) {
    throw ShapeError("quantized model has " + std::to_string(qm.layers.size()) +
                     " layers, architecture expects " + std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const EncodedLayer& e = qm.layers[i];
    if (e.weight_shape != specs[i]->weight_shape() || e.bias_shape != specs[i]->bias_shape()) {
      throw ShapeError("quantized layer " + std::to_string(i) + " shape does not match architecture");
    }
    m.layers.push_back(
        {Tensor<float>(e.weight_shape, decode_values(e.weight, element_count(e.weight_shape), qm.format, qm.scale)),
         Tensor<float>(e.bias_shape, decode_values(e.bias, element_count(e.bias_shape), qm.format, qm.scale))});
  }
  return m;
}

double roundoff_norm(const ModelParams& a, const ModelParams& b) {
  if (a.arch.kind != b.arch.kind || a.layers.size() != b.layers.size()) {
    throw ShapeError("roundoff_norm: models do not share an architecture");
  }
  double sum = 0.0;
  auto acc = [&](const Tensor<float>& x, const Tensor<float>& y) {
    if (x.shape() != y.shape()) throw ShapeError("roundoff_norm: parameter shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(y[i]) - static_cast<double>(x[i]);
      sum += d * d;
    }
  };
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    acc(a.layers[l].weight, b.layers[l].weight);
    acc(a.layers[l].bias, b.layers[l].bias);
  }
  return std::sqrt(sum);
}

}  // namespace smap
