#include "support.hpp"

#include <gtest/gtest.h>

using namespace rlab;

TEST(Philox, KnownAnswerZero) {
  const auto r = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto r = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto r = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterRng, DrawsDependOnlyOnAddress) {
  const CounterRng a(5, 9), b(5, 9), c(6, 9), d(5, 10);
  EXPECT_EQ(a.uniform(17), b.uniform(17));
  EXPECT_NE(a.uniform(17), c.uniform(17));
  EXPECT_NE(a.uniform(17), d.uniform(17));
}

TEST(CounterRng, MomentsOfUniformAndNormal) {
  const CounterRng rng(1, stream_id("moments"));
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(i);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal(n + i);
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 4 / std::sqrt(double(n)));
  EXPECT_NEAR(sn2 / n, 1.0, 4 * std::sqrt(2.0 / n));
}

TEST(CounterRng, UniformIntCoversInclusiveRange) {
  const CounterRng rng(2, 0);
  std::array<int, 5> seen{};
  for (int i = 0; i < 5000; ++i) {
    const int v = rng.uniform_int(i, 3, 7);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 7);
    ++seen[v - 3];
  }
  for (int c : seen) EXPECT_GT(c, 850);
  EXPECT_THROW((void)rng.uniform_int(0, 2, 1), ArgumentError);
}

TEST(CounterRng, NormalMatrixColumnsIndependentOfBatchSize) {
  const auto big = normal_matrix<double>(3, 10, 4, "tag", 2);
  const auto tail = normal_matrix<double>(3, 4, 4, "tag", 2, 6);
  EXPECT_EQ(big.rightCols(4), tail);
  EXPECT_NE(normal_matrix<double>(3, 1, 4, "tag", 3), big.leftCols(1));
}

TEST(Checksum, FnvKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hex64(0x1234abcdull), "000000001234abcd");
}
