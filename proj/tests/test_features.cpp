#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_util.hpp"

using namespace necpd;

namespace {

EventRecord sinusoid_event(std::size_t n, std::size_t sensors, double bin, double amp = 1.0) {
  EventRecord e;
  e.id = "s";
  e.signals.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sensors));
  for (Eigen::Index c = 0; c < e.signals.cols(); ++c) {
    for (Eigen::Index t = 0; t < e.signals.rows(); ++t) {
      e.signals(t, c) = amp * std::sin(2.0 * std::numbers::pi * bin * static_cast<double>(t) /
                                            static_cast<double>(n) + 0.3 * static_cast<double>(c));
    }
  }
  return e;
}

EventRecord noise_event(std::size_t n, std::size_t sensors, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z;
  EventRecord e;
  e.signals.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sensors));
  for (Eigen::Index c = 0; c < e.signals.cols(); ++c)
    for (Eigen::Index t = 0; t < e.signals.rows(); ++t) e.signals(t, c) = z(g);
  return e;
}

}  // namespace

TEST(ExtractFeatures, SinusoidConcentratesInItsBin) {
  const std::size_t n = 256, bin = 17;
  const Features f = extract_features(sinusoid_event(n, 3, bin), {64, false});
  ASSERT_EQ(f.values.rows(), 64);
  ASSERT_EQ(f.values.cols(), 3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    // Unit-variance sinusoid has amplitude sqrt(2).
    EXPECT_NEAR(f.values(bin - 1, c), std::sqrt(2.0), 1e-9);
    for (Eigen::Index b = 0; b < 64; ++b) {
      if (b != static_cast<Eigen::Index>(bin - 1)) EXPECT_LE(10.0 * f.values(b, c), f.values(bin - 1, c));
    }
  }
  EXPECT_FALSE(f.constant_signal);
}

TEST(ExtractFeatures, InvariantUnderAffineMaps) {
  const EventRecord e = noise_event(300, 4, 1);
  EventRecord g = e;
  g.signals = (3.7 * e.signals.array() - 12.0).matrix();
  const Features a = extract_features(e, {100, false});
  const Features b = extract_features(g, {100, false});
  EXPECT_LE((a.values - b.values).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ExtractFeatures, ShapeIndependentOfLength) {
  for (std::size_t n : {40u, 41u, 97u, 1200u}) {
    const Features f = extract_features(noise_event(n, 5, n), {20, false});
    EXPECT_EQ(f.values.rows(), 20);
    EXPECT_EQ(f.values.cols(), 5);
    EXPECT_TRUE(f.values.allFinite());
  }
}

TEST(ExtractFeatures, ConstantChannelIsFlagged) {
  EventRecord e = noise_event(64, 2, 3);
  e.signals.col(1).setConstant(4.0);
  const Features f = extract_features(e, {10, false});
  EXPECT_TRUE(f.constant_signal);
  EXPECT_EQ(f.values.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExtractFeatures, RejectsBadInput) {
  EXPECT_THROW(extract_features(noise_event(39, 2, 1), {20, false}), InvalidInput);
  EXPECT_THROW(extract_features(noise_event(40, 2, 1), {0, false}), InvalidInput);
  EventRecord e = noise_event(40, 2, 1);
  e.signals(3, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(extract_features(e, {20, false}), InvalidInput);
  EXPECT_THROW(extract_features(noise_event(40, 3, 1), {20, true}), InvalidInput);
}

TEST(AdjacentDifferences, PairsColumns) {
  Matrix s(2, 4);
  s << 1, 2, 5, 3, 4, 4, 0, 1;
  Matrix expect(2, 2);
  expect << -1, 2, 0, -1;
  EXPECT_EQ(adjacent_differences(s), expect);
  EXPECT_THROW(adjacent_differences(Matrix::Zero(3, 1)), InvalidInput);
  EXPECT_THROW(adjacent_differences(Matrix::Zero(3, 0)), InvalidInput);
}

TEST(ExtractFeatures, DifferencedLongRecord) {
  EventRecord e = noise_event(8192, 24, 4);
  e.sample_rate_hz = 1600.0;
  const Features f = extract_features(e, {150, true});
  EXPECT_EQ(f.values.rows(), 150);
  EXPECT_EQ(f.values.cols(), 12);
}

TEST(ExtractFeatures, DefaultScaleSlice) {
  const Features f = extract_features(noise_event(1200, 24, 5), {600, false});
  EXPECT_EQ(f.values.rows(), 600);
  EXPECT_EQ(f.values.cols(), 24);
}
