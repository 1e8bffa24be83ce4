#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <string>

#include "smap/errors.hpp"
#include "smap/preprocess.hpp"
#include "smap/synthdata.hpp"

using namespace smap;

namespace {

double mean_log10(const Tensor<float>& t) {
  double s = 0;
  for (float v : t.data()) s += std::log10(static_cast<double>(v));
  return s / static_cast<double>(t.size());
}

}  // namespace

TEST(GenSample, DeterministicPerSeed) {
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(gen_sample(r, 11), gen_sample(r, 11));
    EXPECT_NE(gen_sample(r, 11), gen_sample(r, 12));
  }
}

TEST(GenSample, ShapeAndRange) {
  for (int r = 0; r < 4; ++r) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor<float> t = gen_sample(r, s);
      ASSERT_EQ(t.shape(), (Shape{32, 16, 32}));
      for (float v : t.data()) {
        ASSERT_GE(v, 1e-28f);
        ASSERT_LE(v, 1e-17f);
      }
    }
  }
}

TEST(GenSample, SolarWindDenserThanMagnetosphereOnAverage) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    EXPECT_GT(mean_log10(gen_sample(0, s)), mean_log10(gen_sample(3, s))) << "seed " << s;
  }
}

TEST(GenSample, ClassesDifferInMeanSignature) {
  std::array<std::vector<double>, 4> mean;
  for (int r = 0; r < 4; ++r) {
    mean[r].assign(kSkymapSize, 0.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Tensor<float> t = gen_sample(r, 1000 + s);
      for (std::size_t i = 0; i < t.size(); ++i) mean[r][i] += std::log10(t[i]) / 20.0;
    }
  }
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      double d = 0;
      for (std::size_t i = 0; i < kSkymapSize; ++i) d = std::max(d, std::abs(mean[a][i] - mean[b][i]));
      EXPECT_GT(d, 0.5) << a << " vs " << b;
    }
}

TEST(GenSample, RejectsUnknownRegion) {
  EXPECT_THROW(gen_sample(-1, 0), std::invalid_argument);
  EXPECT_THROW(gen_sample(4, 0), std::invalid_argument);
}

TEST(GenDataset, BalancedAndShuffled) {
  const LabeledDataset ds = gen_dataset(50, 3);
  ASSERT_EQ(ds.samples.size(), 200u);
  EXPECT_EQ(ds.class_counts(), (std::array<std::size_t, 4>{50, 50, 50, 50}));
  bool cyclic = true;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) cyclic = cyclic && ds.samples[i].label == static_cast<int>(i % 4);
  EXPECT_FALSE(cyclic);
  for (const auto& s : ds.samples) EXPECT_GE(s.label, 0);
}

TEST(GenDataset, FiveHundredPerClass) {
  const LabeledDataset ds = gen_dataset(500, 1);
  EXPECT_EQ(ds.samples.size(), 2000u);
  EXPECT_EQ(ds.class_counts(), (std::array<std::size_t, 4>{500, 500, 500, 500}));
}

TEST(GenDataset, SeedControlsOrderAndNoise) {
  const LabeledDataset a = gen_dataset(10, 1), b = gen_dataset(10, 1), c = gen_dataset(10, 2);
  ASSERT_EQ(a.samples.size(), c.samples.size());
  bool all_equal = true, any_equal_raw = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].raw, b.samples[i].raw);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
    all_equal = all_equal && a.samples[i].label == c.samples[i].label;
    for (const auto& other : c.samples) any_equal_raw = any_equal_raw || other.raw == a.samples[i].raw;
  }
  EXPECT_FALSE(all_equal);
  EXPECT_FALSE(any_equal_raw);
  EXPECT_THROW(gen_dataset(0, 1), std::invalid_argument);
}

TEST(GenOrbitStream, SegmentLayoutWithTransition) {
  const std::vector<Segment> plan{{3, 100}, {2, 100}};
  const LabeledStream st = gen_orbit_stream(plan, 10, 5);
  ASSERT_EQ(st.samples.size(), 210u);
  for (std::size_t i = 0; i < 210; ++i) {
    const int expected = i < 100 ? 3 : (i < 110 ? -1 : 2);
    EXPECT_EQ(st.samples[i].label, expected) << i;
  }
  ASSERT_EQ(st.timestamps.size(), 210u);
  for (std::size_t i = 1; i < st.timestamps.size(); ++i) EXPECT_GT(st.timestamps[i], st.timestamps[i - 1]);
  EXPECT_EQ(st.plan.size(), 2u);
}

TEST(GenOrbitStream, TransitionsBlendNeighboursInLogSpace) {
  const std::vector<Segment> plan{{3, 4}, {0, 4}};
  const std::uint64_t seed = 9;
  const LabeledStream st = gen_orbit_stream(plan, 3, seed);
  for (std::size_t j = 0; j < 3; ++j) {
    const std::size_t idx = 4 + j;
    const double t = static_cast<double>(j + 1) / 4.0;
    const Tensor<float> a = gen_sample(3, derive_seed(seed, 2 * idx));
    const Tensor<float> b = gen_sample(0, derive_seed(seed, 2 * idx + 1));
    const Tensor<float>& m = st.samples[idx].raw;
    for (std::size_t i = 0; i < m.size(); i += 97) {
      const double expect = (1 - t) * std::log10(a[i]) + t * std::log10(b[i]);
      ASSERT_NEAR(std::log10(m[i]), expect, 1e-5) << "sample " << idx << " bin " << i;
    }
  }
}

TEST(GenOrbitStream, NoTransitionWithoutUndefined) {
  const std::vector<Segment> plan{{3, 20}, {2, 20}, {1, 5}, {0, 20}};
  const LabeledStream st = gen_orbit_stream(plan, 0, 1);
  EXPECT_EQ(st.samples.size(), 65u);
  for (const auto& s : st.samples) EXPECT_NE(s.label, -1);
}

TEST(GenOrbitStream, SameRegionNeighboursAreNotBlended) {
  const std::vector<Segment> plan{{2, 5}, {2, 5}};
  EXPECT_EQ(gen_orbit_stream(plan, 4, 1).samples.size(), 10u);
}

TEST(GenOrbitStream, DeterministicAndValidated) {
  const std::vector<Segment> plan{{3, 10}, {2, 10}};
  const LabeledStream a = gen_orbit_stream(plan, 3, 4), b = gen_orbit_stream(plan, 3, 4);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].raw, b.samples[i].raw);
  EXPECT_THROW(gen_orbit_stream(std::vector<Segment>{}, 3, 1), std::invalid_argument);
  EXPECT_THROW(gen_orbit_stream(std::vector<Segment>{{3, 0}}, 3, 1), std::invalid_argument);
  EXPECT_THROW(gen_orbit_stream(std::vector<Segment>{{5, 2}}, 3, 1), std::invalid_argument);
}

TEST(Lds, RoundTripBitwiseIncludingUndefined) {
  const LabeledStream st = gen_orbit_stream(std::vector<Segment>{{1, 2}, {0, 2}}, 2, 3);
  const std::vector<std::uint8_t> bytes = encode_lds(st.samples);
  EXPECT_EQ(bytes.size(), 8u + st.samples.size() * (1 + 4 * kSkymapSize));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "LDS1");
  EXPECT_EQ(bytes[4], st.samples.size());
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[8 + 2 * (1 + 4 * kSkymapSize)], 0xFF);
  const std::vector<LabeledSample> back = decode_lds(bytes);
  ASSERT_EQ(back.size(), st.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, st.samples[i].label);
    EXPECT_EQ(back[i].raw.shape(), (Shape{32, 16, 32}));
    EXPECT_EQ(std::memcmp(back[i].raw.data().data(), st.samples[i].raw.data().data(), 4 * kSkymapSize), 0);
  }
}

TEST(Lds, FileRoundTrip) {
  const LabeledDataset ds = gen_dataset(2, 8);
  const auto path = std::filesystem::temp_directory_path() / "smap_test_roundtrip.lds";
  write_lds(path, ds.samples);
  const auto back = read_lds(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), ds.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].raw, ds.samples[i].raw);
  EXPECT_THROW(read_lds(path), IoError);
}

TEST(Lds, MalformedInputsReportOffsets) {
  const LabeledDataset ds = gen_dataset(1, 8);
  std::vector<std::uint8_t> bytes = encode_lds(ds.samples);

  std::vector<std::uint8_t> bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_lds(bad_magic), ParseError);

  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 5);
  try {
    decode_lds(truncated);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }

  std::vector<std::uint8_t> bad_label = bytes;
  bad_label[8] = 7;
  try {
    decode_lds(bad_label);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }

  EXPECT_THROW(decode_lds(std::vector<std::uint8_t>{'L', 'D'}), ParseError);
}
