#include "smap/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace smap {

void PreprocessConfig::validate() const {
  if (!(lo > 0.0) || !(lo < hi)) {
    throw std::invalid_argument("preprocess range requires 0 < lo < hi");
  }
  if (roll_offset < 0 || roll_offset >= static_cast<int>(kAzimuthBins)) {
    throw std::invalid_argument("roll offset must be in [0, 32)");
  }
}

Tensor<float> roll_phi(const Tensor<float>& t, long offset) {
  if (t.rank() == 0) throw ShapeError("roll_phi of rank-0 tensor");
  const std::size_t w = t.shape().back();
  const long wl = static_cast<long>(w);
  const std::size_t shift = static_cast<std::size_t>(((offset % wl) + wl) % wl);
  Tensor<float> out(t.shape());
  const std::size_t rows = t.size() / w;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = t.data().data() + r * w;
    float* dst = out.data().data() + r * w;
    for (std::size_t j = 0; j < w; ++j) dst[(j + shift) % w] = src[j];
  }
  return out;
}

Tensor<float> preprocess(const Tensor<float>& raw, const PreprocessConfig& cfg) {
  cfg.validate();
  const Shape expected{kEnergyBins, kPolarBins, kAzimuthBins};
  if (raw.shape() != expected) {
    throw ShapeError("raw skymap must be " + to_string(expected) + ", got " +
                     to_string(raw.shape()));
  }
  const double log_lo = std::log10(cfg.lo);
  const double span = std::log10(cfg.hi) - log_lo;
  Tensor<float> norm({1, kEnergyBins, kPolarBins, kAzimuthBins});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (std::isnan(v) || v < 0.0) {
      throw NumericError("raw phase-space density must be finite and >= 0 (index " +
                         std::to_string(i) + ")");
    }
    const double clamped = std::clamp(v, cfg.lo, cfg.hi);
    const double scaled = (std::log10(clamped) - log_lo) / span;
    norm[i] = static_cast<float>(std::clamp(scaled, 0.0, 1.0));
  }
  return roll_phi(norm, cfg.roll_offset);
}

}  // namespace smap
