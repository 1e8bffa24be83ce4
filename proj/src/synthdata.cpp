#include "smap/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "smap/bytes.hpp"
#include "smap/preprocess.hpp"

namespace smap {

namespace {

constexpr double kLogMin = -28.0;
constexpr double kLogMax = -17.0;
constexpr double kNoiseSigma = 0.25;  // log10 units, i.e. log-normal multiplicative noise
constexpr double kIsotropic = std::numeric_limits<double>::infinity();

// Gaussian bump in log10 density over (energy, polar, azimuth).
struct Component {
  double amp;
  double e0, p0, phi0;
  double se, sp, sphi;
};

struct Signature {
  double floor;
  std::vector<Component> parts;
};

double azimuth_distance(double a, double b) {
  const double w = static_cast<double>(kAzimuthBins);
  double d = std::fmod(std::abs(a - b), w);
  return std::min(d, w - d);
}

Signature draw_signature(int region, std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto nrm = [&](double mu, double sd) { return std::normal_distribution<double>(mu, sd)(rng); };
  Signature s{};
  switch (static_cast<Region>(region)) {
    case Region::SW: {
      // Cold narrow beam at low energy plus a faint halo.
      const double w = uni(0.85, 1.15);
      const Component beam{uni(7.5, 9.5), nrm(9.0, 1.2), nrm(7.5, 0.7), nrm(0.0, 0.8),
                           1.3 * w, 1.2 * w, 1.5 * w};
      s.floor = -27.0;
      s.parts = {beam, {uni(2.0, 3.0), beam.e0, beam.p0, beam.phi0, 3.0, 2.5, 4.0}};
      break;
    }
    case Region::IF: {
      // Slightly heated beam plus a diffuse backstreaming population at higher energy.
      const double w = uni(0.9, 1.3);
      const Component beam{uni(6.5, 8.5), nrm(9.5, 1.2), nrm(7.5, 0.7), nrm(0.0, 0.8),
                           1.5 * w, 1.4 * w, 1.9 * w};
      s.floor = -27.0;
      s.parts = {beam,
                 {uni(2.0, 3.0), beam.e0, beam.p0, beam.phi0, 3.0, 2.5, 4.0},
                 {uni(1.5, 3.5), nrm(17.0, 2.0), nrm(7.5, 1.5), nrm(16.0, 2.0), 4.0, 3.5, 6.0}};
      break;
    }
    case Region::MSH: {
      const double w = uni(0.85, 1.15);
      s.floor = -27.0;
      s.parts = {{uni(4.5, 7.0), nrm(17.0, 2.0), nrm(7.5, 0.8), nrm(0.0, 3.0), 4.5 * w, 4.0 * w,
                  9.0 * w}};
      break;
    }
    case Region::MSP: {
      s.floor = -27.8;
      s.parts = {{uni(1.0, 2.5), nrm(22.0, 2.0), nrm(7.5, 1.0), 0.0, 5.0, 6.0, kIsotropic}};
      break;
    }
    default:
      throw std::invalid_argument("gen_sample: region must be 0..3, got " + std::to_string(region));
  }
  return s;
}

std::vector<double> log_skymap(int region, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Signature sig = draw_signature(region, rng);
  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  std::vector<double> out(kSkymapSize);
  std::size_t i = 0;
  for (std::size_t e = 0; e < kEnergyBins; ++e) {
    for (std::size_t p = 0; p < kPolarBins; ++p) {
      for (std::size_t a = 0; a < kAzimuthBins; ++a, ++i) {
        double v = sig.floor;
        for (const Component& c : sig.parts) {
          const double de = (static_cast<double>(e) - c.e0) / c.se;
          const double dp = (static_cast<double>(p) - c.p0) / c.sp;
          const double da = azimuth_distance(static_cast<double>(a), c.phi0) / c.sphi;
          v += c.amp * std::exp(-0.5 * (de * de + dp * dp + da * da));
        }
        out[i] = std::clamp(v + noise(rng), kLogMin, kLogMax);
      }
    }
  }
  return out;
}

Tensor<float> from_log(const std::vector<double>& logv) {
  Tensor<float> t({kEnergyBins, kPolarBins, kAzimuthBins});
  for (std::size_t i = 0; i < logv.size(); ++i) {
    // Clamp again after the float cast so the stored value stays in range.
    const float v = static_cast<float>(std::pow(10.0, logv[i]));
    t[i] = std::clamp(v, static_cast<float>(1e-28), static_cast<float>(1e-17));
  }
  return t;
}

}  // namespace

std::string_view region_name(int label) {
  switch (label) {
    case -1: return "Undefined";
    case 0: return "SW";
    case 1: return "IF";
    case 2: return "MSH";
    case 3: return "MSP";
    default: return "?";
  }
}

std::array<std::size_t, 4> LabeledDataset::class_counts() const {
  std::array<std::size_t, 4> c{};
  for (const auto& s : samples) {
    if (s.label >= 0 && s.label < 4) ++c[static_cast<std::size_t>(s.label)];
  }
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor<float> gen_sample(int region, std::uint64_t seed) {
  return from_log(log_skymap(region, seed));
}

LabeledDataset gen_dataset(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class == 0) throw std::invalid_argument("gen_dataset: n_per_class must be >= 1");
  LabeledDataset ds;
  ds.seed = seed;
  ds.samples.reserve(4 * n_per_class);
  for (std::size_t i = 0; i < 4 * n_per_class; ++i) {
    const int label = static_cast<int>(i % 4);
    ds.samples.push_back({gen_sample(label, derive_seed(seed, i)), label});
  }
  std::mt19937_64 rng(derive_seed(seed, ~std::uint64_t{0}));
  std::shuffle(ds.samples.begin(), ds.samples.end(), rng);
  return ds;
}

LabeledStream gen_orbit_stream(std::span<const Segment> plan, std::size_t transition_len,
                               std::uint64_t seed) {
  if (plan.empty()) throw std::invalid_argument("gen_orbit_stream: empty plan");
  for (const Segment& s : plan) {
    if (s.length == 0) throw std::invalid_argument("gen_orbit_stream: segment length must be >= 1");
    if (s.region < 0 || s.region > 3) throw std::invalid_argument("gen_orbit_stream: region must be 0..3");
  }
  LabeledStream st;
  st.plan.assign(plan.begin(), plan.end());
  std::uint64_t index = 0;
  auto push = [&](Tensor<float> raw, int label) {
    st.samples.push_back({std::move(raw), label});
    st.timestamps.push_back(index++);
  };
  for (std::size_t k = 0; k < plan.size(); ++k) {
    if (k > 0 && plan[k].region != plan[k - 1].region) {
      for (std::size_t j = 0; j < transition_len; ++j) {
        const double t = static_cast<double>(j + 1) / static_cast<double>(transition_len + 1);
        const auto a = log_skymap(plan[k - 1].region, derive_seed(seed, 2 * index));
        const auto b = log_skymap(plan[k].region, derive_seed(seed, 2 * index + 1));
        std::vector<double> mix(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) mix[i] = (1.0 - t) * a[i] + t * b[i];
        push(from_log(mix), kUndefinedLabel);
      }
    }
    for (std::size_t j = 0; j < plan[k].length; ++j) {
      push(gen_sample(plan[k].region, derive_seed(seed, 2 * index)), plan[k].region);
    }
  }
  return st;
}

std::vector<std::uint8_t> encode_lds(std::span<const LabeledSample> samples) {
  ByteWriter w;
  w.tag("LDS1");
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.raw.size() != kSkymapSize) throw ShapeError("LDS sample must hold 16384 values");
    if (s.label < -1 || s.label > 3) throw std::invalid_argument("LDS label must be -1..3");
    w.u8(s.label < 0 ? 0xFF : static_cast<std::uint8_t>(s.label));
    for (float v : s.raw.data()) w.f32(v);
  }
  return std::move(w).take();
}

std::vector<LabeledSample> decode_lds(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag("LDS1", "dataset magic");
  const std::uint32_t n = r.u32();
  const std::size_t per_sample = 1 + 4 * kSkymapSize;
  if (r.remaining() != static_cast<std::size_t>(n) * per_sample) {
    throw ParseError("dataset declares " + std::to_string(n) + " samples but holds " +
                         std::to_string(r.remaining()) + " payload bytes",
                     r.offset());
  }
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const std::uint8_t tag = r.u8();
    if (tag != 0xFF && tag > 3) throw ParseError("invalid label byte " + std::to_string(tag), at);
    std::vector<float> vals(kSkymapSize);
    for (float& v : vals) v = r.f32();
    out.push_back({Tensor<float>({kEnergyBins, kPolarBins, kAzimuthBins}, std::move(vals)),
                   tag == 0xFF ? kUndefinedLabel : static_cast<int>(tag)});
  }
  return out;
}

void write_lds(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
  write_file(path, encode_lds(samples));
}

std::vector<LabeledSample> read_lds(const std::filesystem::path& path) {
  return decode_lds(read_file(path));
}

}  // namespace smap
