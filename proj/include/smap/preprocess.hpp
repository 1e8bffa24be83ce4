#pragma once

#include "smap/tensor.hpp"

namespace smap {

// Skymap extents: energy x polar x azimuth.
inline constexpr std::size_t kEnergyBins = 32;
inline constexpr std::size_t kPolarBins = 16;
inline constexpr std::size_t kAzimuthBins = 32;
inline constexpr std::size_t kSkymapSize = kEnergyBins * kPolarBins * kAzimuthBins;

struct PreprocessConfig {
  double lo = 1e-28;  // s^3/cm^6
  double hi = 1e-17;
  int roll_offset = 16;  // azimuth bins

  void validate() const;
};

// clamp -> log10 -> (v - log10(lo)) / (log10(hi) - log10(lo)) -> azimuth roll,
// with a leading channel axis of extent 1. Output is (1, 32, 16, 32) in [0, 1].
Tensor<float> preprocess(const Tensor<float>& raw, const PreprocessConfig& cfg = {});

// Circular shift along the last axis: index j moves to (j + offset) mod W.
Tensor<float> roll_phi(const Tensor<float>& t, long offset);

}  // namespace smap
