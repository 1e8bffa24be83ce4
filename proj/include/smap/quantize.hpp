#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "smap/models.hpp"

namespace smap {

enum class PrecisionFormat : std::uint8_t { F32 = 0, F16 = 1, BF16 = 2, I8 = 3 };

inline constexpr PrecisionFormat kAllFormats[] = {PrecisionFormat::F32, PrecisionFormat::F16,
                                                  PrecisionFormat::BF16, PrecisionFormat::I8};

std::size_t bits_per_scalar(PrecisionFormat fmt);
inline std::size_t bytes_per_scalar(PrecisionFormat fmt) { return bits_per_scalar(fmt) / 8; }
std::string_view format_name(PrecisionFormat fmt);
PrecisionFormat parse_format(std::string_view name);  // throws std::invalid_argument

// Fixed-point Int8 scheme: q = clamp(round(100 x), -127, 127), decoded as q * 0.01.
inline constexpr float kInt8Scale = 0.01f;

// Rounds half away from zero; never yields -128. NaN raises NumericError.
std::int8_t int8_encode(float x);
float int8_decode(std::int8_t q, float scale = kInt8Scale);

// IEEE binary16, round to nearest even. Magnitudes above 65504 saturate to
// +-65504 and bump *saturated when given. NaN raises NumericError.
std::uint16_t f16_encode(float x, std::size_t* saturated = nullptr);
float f16_decode(std::uint16_t h);

// Upper half of binary32 after round-to-nearest-even on bit 16. Values that
// would round to infinity saturate to the largest finite bfloat16.
std::uint16_t bf16_encode(float x, std::size_t* saturated = nullptr);
float bf16_decode(std::uint16_t b);

// Little-endian packed encoding of a run of values.
std::vector<std::uint8_t> encode_values(std::span<const float> values, PrecisionFormat fmt,
                                        float scale = kInt8Scale,
                                        std::size_t* saturated = nullptr);
// Throws ShapeError when the blob length is not count * bytes_per_scalar.
std::vector<float> decode_values(std::span<const std::uint8_t> blob, std::size_t count,
                                 PrecisionFormat fmt, float scale = kInt8Scale);

struct EncodedLayer {
  Shape weight_shape;
  Shape bias_shape;
  std::vector<std::uint8_t> weight;
  std::vector<std::uint8_t> bias;

  bool operator==(const EncodedLayer&) const = default;
};

struct QuantizedModel {
  ArchitectureSpec arch;
  PrecisionFormat format = PrecisionFormat::F32;
  float scale = kInt8Scale;  // meaningful for I8 only
  std::vector<EncodedLayer> layers;
  double roundoff = 0.0;        // Euclidean norm of (decoded - original) over all parameters
  std::size_t saturated = 0;    // values clipped by the 16-bit encoders

  std::size_t blob_bytes() const;
};

QuantizedModel quantize_model(const ModelParams& model, PrecisionFormat fmt);

// Decoded 32-bit parameters for the standard forward path.
ModelParams dequantize_for_inference(const QuantizedModel& qm);

// Euclidean norm of (b - a) over all parameters; models must share an architecture.
double roundoff_norm(const ModelParams& a, const ModelParams& b);

}  // namespace smap
