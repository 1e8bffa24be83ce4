#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "smap/tensor.hpp"

namespace smap {

// Ground-truth plasma region. Classifiers only ever emit 0..3.
enum class Region : std::int8_t { Undefined = -1, SW = 0, IF = 1, MSH = 2, MSP = 3 };

inline constexpr int kUndefinedLabel = static_cast<int>(Region::Undefined);

std::string_view region_name(int label);

struct LabeledSample {
  Tensor<float> raw;  // (32, 16, 32) phase-space density
  int label = 0;
};

struct LabeledDataset {
  std::vector<LabeledSample> samples;
  std::uint64_t seed = 0;

  std::array<std::size_t, 4> class_counts() const;
};

struct Segment {
  int region = 0;
  std::size_t length = 0;
};

struct LabeledStream {
  std::vector<LabeledSample> samples;  // labels may be -1 inside transitions
  std::vector<std::uint64_t> timestamps;
  std::vector<Segment> plan;
};

// splitmix64 of (seed, index); used to give every sample its own generator.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// One synthetic skymap for region 0..3, values in [1e-28, 1e-17].
Tensor<float> gen_sample(int region, std::uint64_t seed);

// 4 * n_per_class samples, balanced, deterministically shuffled.
LabeledDataset gen_dataset(std::size_t n_per_class, std::uint64_t seed);

// Concatenated region segments; adjacent differing regions are joined by
// transition_len samples labelled -1 that blend the neighbours in log space.
LabeledStream gen_orbit_stream(std::span<const Segment> plan, std::size_t transition_len,
                               std::uint64_t seed);

// "LDS1" file: u32 count, then per sample a u8 label (0xFF for -1) and
// 16384 little-endian f32 values.
std::vector<std::uint8_t> encode_lds(std::span<const LabeledSample> samples);
std::vector<LabeledSample> decode_lds(std::span<const std::uint8_t> bytes);
void write_lds(const std::filesystem::path& path, std::span<const LabeledSample> samples);
std::vector<LabeledSample> read_lds(const std::filesystem::path& path);

}  // namespace smap
