#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "ctxgen/errors.h"
#include "ctxgen/rng.h"
#include "ctxgen/tensor.h"

namespace ctxgen {
namespace {

TEST(TensorTest, ShapeAndLength) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.dim(1), 3);
  EXPECT_EQ(NumElements({2, 3, 4}), 24);
  EXPECT_EQ(ShapeString({2, 3}), "[2x3]");
}

TEST(TensorTest, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}).Reshaped({3}), DimensionError);
  EXPECT_THROW(Tensor({2}).item(), ContractError);
  EXPECT_THROW(Tensor({2}).dim(1), DimensionError);
}

TEST(TensorTest, NchwIndexingIsRowMajor) {
  Tensor t({2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0);
}

TEST(TensorTest, FiniteScan) {
  Tensor t({3}, 1.0);
  EXPECT_TRUE(t.AllFinite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.AllFinite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.AllFinite());
}

TEST(TensorTest, BitIdentityDistinguishesSignedZero) {
  Tensor a = Tensor::FromList({2}, {0.0, 1.0});
  Tensor b = Tensor::FromList({2}, {-0.0, 1.0});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(BitIdentical(a, b));
  EXPECT_NE(Checksum(a), Checksum(b));
  EXPECT_EQ(Checksum(a), Checksum(Tensor::FromList({2}, {0.0, 1.0})));
  EXPECT_NE(Checksum(a), Checksum(a.Reshaped({2, 1})));
}

TEST(RngTest, SameStateSameDraws) {
  Rng a(42, 5), b(42, 5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
  EXPECT_EQ(a.counter(), 105u);
}

TEST(RngTest, ReferenceValues) {
  // First two outputs of the reference SplitMix64 stream seeded with 0.
  EXPECT_EQ(SplitMix64(0), 0xE220A8397B1DCDAFull);
  EXPECT_EQ(SplitMix64(0x9E3779B97F4A7C15ull), 0x6E789E6AA1B965F4ull);
}

TEST(RngTest, ForksAreIndependentAndDoNotAdvance) {
  Rng base(9);
  Rng f1 = base.Fork(1), f2 = base.Fork(2);
  EXPECT_EQ(base.counter(), 0u);
  std::set<uint64_t> seen;
  for (int i = 0; i < 50; ++i) {
    seen.insert(f1.NextU64());
    seen.insert(f2.NextU64());
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(base.Fork(1).NextU64(), Rng(9).Fork(1).NextU64());
}

TEST(RngTest, UniformAndNormalMoments) {
  Rng rng(3);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.Uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.Normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(RngTest, UniformIntRange) {
  Rng rng(4);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[rng.UniformInt(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  EXPECT_THROW(rng.UniformInt(0), ContractError);
}

}  // namespace
}  // namespace ctxgen
