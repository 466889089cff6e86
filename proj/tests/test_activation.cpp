#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ahue/activation.hpp"
#include "ahue/rng.hpp"
#include "oracles.hpp"

using namespace ahue;

namespace {

ActivationImage random_image(int w, int h, int n, std::uint64_t seed, bool post_relu = false) {
  ActivationImage img = ActivationImage::zeros(w, h, n, post_relu);
  Rng rng(seed);
  for (float& v : img.data) {
    double x = rng.normal();
    v = static_cast<float>(post_relu ? std::abs(x) : x);
  }
  return img;
}

}  // namespace

TEST(Normalize, ThreeFourFive) {
  PixelVector v;
  v.values = {3.0, 4.0};
  auto u = normalize(v);
  EXPECT_DOUBLE_EQ(u.values[0], 0.6);
  EXPECT_DOUBLE_EQ(u.values[1], 0.8);
}

TEST(Normalize, AlreadyUnit) {
  PixelVector v;
  v.values = {1.0, 0.0, 0.0, 0.0, 0.0};
  auto u = normalize(v);
  EXPECT_EQ(u.values, v.values);
}

TEST(Normalize, AllOnes) {
  PixelVector v;
  v.values = {1.0, 1.0, 1.0, 1.0};
  auto u = normalize(v);
  for (double x : u.values) EXPECT_NEAR(x, 0.5, 1e-15);
}

TEST(Normalize, ZeroVectorRaises) {
  PixelVector v;
  v.values = {0.0, 0.0, 1e-13};
  try {
    normalize(v);
    FAIL() << "expected ZeroVector";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::zero_vector);
  }
}

TEST(Normalize, PreservesPositionAndLabels) {
  PixelVector v;
  v.values = {2.0, 0.0};
  v.x = -1.5;
  v.y = 2.5;
  v.source_image = 7;
  v.class_id = 3;
  auto u = normalize(v);
  EXPECT_EQ(u.x, -1.5);
  EXPECT_EQ(u.y, 2.5);
  EXPECT_EQ(u.source_image, 7u);
  EXPECT_EQ(u.class_id, std::optional<std::uint32_t>(3));
}

TEST(Normalize, Idempotent) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    PixelVector v;
    const int n = 2 + static_cast<int>(rng.uniform_index(14));
    v.values.resize(n);
    for (double& x : v.values) x = rng.normal();
    if (l2_norm(v.values) < 1e-9) continue;
    auto once = normalize(v);
    auto twice = normalize(once);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(twice.values[i], once.values[i], 1e-12);
  }
}

TEST(EnergyMap, SmallSquares) {
  ActivationImage img = ActivationImage::zeros(2, 2, 1);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 1, 0) = 2.0f;
  img.at(1, 0, 0) = 3.0f;
  img.at(1, 1, 0) = 0.0f;
  EnergyMap e = energy_map(img);
  EXPECT_DOUBLE_EQ(e.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(e.at(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(e.at(1, 0), 9.0);
  EXPECT_DOUBLE_EQ(e.at(1, 1), 0.0);
}

TEST(EnergyMap, ConstantImage) {
  const int n = 6;
  const float c = 1.25f;
  ActivationImage img = ActivationImage::zeros(3, 4, n);
  for (float& v : img.data) v = c;
  EnergyMap e = energy_map(img);
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, n * static_cast<double>(c) * c);
}

TEST(EnergyMap, MatchesBruteForceOracleOnBottleneckShape) {
  ActivationImage img = random_image(7, 7, 1920, 42, true);
  EnergyMap e = energy_map(img);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double expected = 0.0;
      for (int ch = 0; ch < img.channels; ++ch) {
        const double v = img.at(r, c, ch);
        expected += v * v;
      }
      EXPECT_NEAR(e.at(r, c), expected, 1e-9 * expected);
    }
  }
}

TEST(EnergyMap, InvariantUnderChannelPermutation) {
  ActivationImage img = random_image(5, 5, 8, 7);
  ActivationImage permuted = img;
  std::vector<int> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch)
        permuted.at(r, c, ch) = img.at(r, c, perm[ch]);
  EnergyMap a = energy_map(img);
  EnergyMap b = energy_map(permuted);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_DOUBLE_EQ(a.values[i], b.values[i]);
}

TEST(EnergyMap, UnitAfterPerPixelNormalization) {
  ActivationImage img = random_image(6, 6, 12, 3);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      // In float64 the normalized energy is 1 within 1e-9.
      PixelVector v;
      auto px = img.pixel(r, c);
      v.values.assign(px.begin(), px.end());
      auto unit = normalize(v);
      double energy = 0.0;
      for (double x : unit.values) energy += x * x;
      EXPECT_NEAR(energy, 1.0, 1e-9);
      auto unit32 = unit_pixel(img, r, c);
      ASSERT_TRUE(unit32.has_value());
      for (int ch = 0; ch < img.channels; ++ch) img.at(r, c, ch) = (*unit32)[ch];
    }
  // The float32 tensor carries storage rounding of ~2^-24 per value.
  EnergyMap e = energy_map(img);
  for (double v : e.values) EXPECT_NEAR(v, 1.0, 2e-7);
}

TEST(CenteredCoordinates, CenterIsOrigin) {
  ActivationImage img = ActivationImage::zeros(7, 7, 1);
  EXPECT_DOUBLE_EQ(img.x_of(3), 0.0);
  EXPECT_DOUBLE_EQ(img.y_of(3), 0.0);
  EXPECT_DOUBLE_EQ(img.x_of(0), -3.0);
  EXPECT_DOUBLE_EQ(img.x_of(6), 3.0);
  EXPECT_DOUBLE_EQ(img.y_of(0), 3.0);   // y up: top row has positive y
  EXPECT_DOUBLE_EQ(img.y_of(6), -3.0);
}

TEST(Validate, PostReluRejectsNegatives) {
  ActivationImage img = ActivationImage::zeros(2, 2, 1, true);
  img.at(0, 0, 0) = -0.5f;
  try {
    img.validate();
    FAIL() << "expected NotFinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_finite);
  }
}

TEST(PoolDescriptor, AvgOfTwoPixelImage) {
  ActivationImage img = ActivationImage::zeros(2, 1, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 0, 1) = 3.0f;
  img.at(0, 1, 0) = 3.0f;
  img.at(0, 1, 1) = 1.0f;
  auto d = pool_descriptor(img, PoolMode::avg);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0], 0.7071067811865475, 1e-12);
  EXPECT_NEAR(d[1], 0.7071067811865475, 1e-12);
}

TEST(PoolDescriptor, MaxOfTwoPixelImage) {
  ActivationImage img = ActivationImage::zeros(2, 1, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 0, 1) = 3.0f;
  img.at(0, 1, 0) = 3.0f;
  img.at(0, 1, 1) = 1.0f;
  auto d = pool_descriptor(img, PoolMode::max);
  EXPECT_NEAR(d[0], 0.7071067811865475, 1e-12);
  EXPECT_NEAR(d[1], 0.7071067811865475, 1e-12);
}

TEST(PoolDescriptor, FlattenOfTwoPixelImage) {
  ActivationImage img = ActivationImage::zeros(2, 1, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 0, 1) = 3.0f;
  img.at(0, 1, 0) = 3.0f;
  img.at(0, 1, 1) = 1.0f;
  auto d = pool_descriptor(img, PoolMode::flatten);
  ASSERT_EQ(d.size(), 4u);
  // hand oracle: (1,3,3,1)/sqrt(20)
  EXPECT_NEAR(d[0], 0.22360679774997896, 1e-12);
  EXPECT_NEAR(d[1], 0.6708203932499369, 1e-12);
  EXPECT_NEAR(d[2], 0.6708203932499369, 1e-12);
  EXPECT_NEAR(d[3], 0.22360679774997896, 1e-12);
}

TEST(PoolDescriptor, ZeroImageRaises) {
  ActivationImage img = ActivationImage::zeros(3, 3, 4);
  EXPECT_THROW(pool_descriptor(img, PoolMode::avg), Error);
}

// avg pooling cannot see pixel order; flatten must.
TEST(PoolDescriptor, SpatialPermutationCommutesForAvgOnly) {
  ActivationImage img = random_image(4, 3, 5, 19, true);
  ActivationImage shuffled = img;
  std::vector<int> perm(img.pixel_count());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  rng.shuffle(perm);
  for (std::size_t p = 0; p < perm.size(); ++p) {
    const int sr = perm[p] / img.width, sc = perm[p] % img.width;
    const int dr = static_cast<int>(p) / img.width, dc = static_cast<int>(p) % img.width;
    for (int ch = 0; ch < img.channels; ++ch) shuffled.at(dr, dc, ch) = img.at(sr, sc, ch);
  }
  auto avg_a = pool_descriptor(img, PoolMode::avg);
  auto avg_b = pool_descriptor(shuffled, PoolMode::avg);
  for (std::size_t i = 0; i < avg_a.size(); ++i) EXPECT_NEAR(avg_a[i], avg_b[i], 1e-12);

  auto flat_a = pool_descriptor(img, PoolMode::flatten);
  auto flat_b = pool_descriptor(shuffled, PoolMode::flatten);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < flat_a.size(); ++i)
    max_diff = std::max(max_diff, std::abs(flat_a[i] - flat_b[i]));
  EXPECT_GT(max_diff, 1e-6);
}
