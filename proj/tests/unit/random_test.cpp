#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "kalbucy/random.hpp"

namespace kalbucy {
namespace {

TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(RandomStream, SameKeyReplays) {
  RandomStream a(42);
  RandomStream b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(RandomStream, DeriveIsPureAndIndependentOfDraws) {
  RandomStream parent(7);
  const RandomStream before = parent.derive("child");
  for (int i = 0; i < 10; ++i) parent.uniform();
  RandomStream after = parent.derive("child");
  RandomStream first = before;
  for (int i = 0; i < 20; ++i) EXPECT_EQ(first.next_u64(), after.next_u64());
  EXPECT_NE(parent.derive("child").key(), parent.derive("other").key());
  EXPECT_NE(parent.derive("level", 1).key(), parent.derive("level", 2).key());
}

TEST(RandomStream, UniformRangeAndSigns) {
  RandomStream rng(3);
  int plus = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const int s = rng.sign();
    ASSERT_TRUE(s == 1 || s == -1);
    plus += s == 1;
  }
  EXPECT_NEAR(plus / 10000.0, 0.5, 0.015);
}

TEST(RandomStream, FillNormalScales) {
  RandomStream rng(11);
  MatrixXd m(4, 5000);
  rng.fill_normal(m, 0.5);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / (m.size() - 1);
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 0.25, 0.015);
}

RngStreamKey base_key() {
  RngStreamKey key;
  key.master_seed = 20240601;
  key.experiment = "variance_decay";
  key.repeat = 3;
  key.level = 5;
  key.block = 1;
  key.purpose = StreamPurpose::ensembleW;
  return key;
}

TEST(DeriveStream, IdenticalKeysIdenticalDraws) {
  RandomStream a = derive_stream(base_key());
  RandomStream b = derive_stream(base_key());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(DeriveStream, OneLabelChangedGivesDifferentDraws) {
  std::vector<RngStreamKey> keys(6, base_key());
  keys[1].master_seed += 1;
  keys[2].experiment = "mse_cost";
  keys[3].repeat += 1;
  keys[4].level += 1;
  keys[5].purpose = StreamPurpose::ensembleV;
  std::set<std::vector<double>> seen;
  for (const auto& k : keys) {
    RandomStream s = derive_stream(k);
    std::vector<double> draws;
    for (int i = 0; i < 100; ++i) draws.push_back(s.normal());
    seen.insert(draws);
  }
  EXPECT_EQ(seen.size(), keys.size());
  RngStreamKey block = base_key();
  block.block += 1;
  EXPECT_NE(derive_stream(block).key(), derive_stream(base_key()).key());
}

TEST(DeriveStream, MillionNormalsHaveUnitMoments) {
  RandomStream s = derive_stream(base_key());
  const int n = 1000000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  EXPECT_NEAR(mean, 0.0, 0.004);
  EXPECT_NEAR(var, 1.0, 0.006);
}

TEST(StreamPurpose, Names) {
  EXPECT_EQ(to_string(StreamPurpose::signal), "signal");
  EXPECT_EQ(to_string(StreamPurpose::obsnoise), "obsnoise");
  EXPECT_EQ(to_string(StreamPurpose::ensembleW), "ensembleW");
  EXPECT_EQ(to_string(StreamPurpose::ensembleV), "ensembleV");
  EXPECT_EQ(to_string(StreamPurpose::spsa), "spsa");
}

}  // namespace
}  // namespace kalbucy
