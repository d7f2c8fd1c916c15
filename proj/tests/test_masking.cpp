#include <gtest/gtest.h>

#include <cmath>

#include "blockecho/errors.hpp"
#include "blockecho/gan.hpp"
#include "blockecho/masking.hpp"

using namespace blockecho;
using masking::Pattern;
using numkern::Matrix;

namespace {

// Brute-force check that the zeros of `mask` are exactly the union of `blocks`.
bool zeros_are_union_of(const Matrix& mask, const std::vector<masking::Block>& blocks) {
  for (std::size_t i = 0; i < mask.rows(); ++i)
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      bool inside = false;
      for (const auto& b : blocks)
        inside |= i >= b.top && i <= b.bottom() && j >= b.left && j <= b.right();
      if (inside != (mask(i, j) == 0.0)) return false;
    }
  return true;
}

}  // namespace

TEST(Scattered, ExactZeroCountAcrossRatesAndSeeds) {
  for (double rate = 0.2; rate <= 0.8 + 1e-12; rate += 0.1) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto g = masking::gen_scattered(20, 15, rate, seed);
      const auto want = static_cast<std::size_t>(std::llround(rate * 300));
      ASSERT_EQ(masking::count_zeros(g.mask), want) << rate << " " << seed;
      EXPECT_EQ(g.zeros, want);
      EXPECT_TRUE(g.blocks.empty());
    }
  }
}

TEST(Scattered, TinyExample) {
  const auto g = masking::gen_scattered(2, 2, 0.5, 7);
  EXPECT_EQ(masking::count_zeros(g.mask), 2u);
  EXPECT_DOUBLE_EQ(g.achieved_rate, 0.5);
}

TEST(Scattered, SameSeedSameMask) {
  EXPECT_EQ(masking::gen_scattered(30, 30, 0.4, 5).mask, masking::gen_scattered(30, 30, 0.4, 5).mask);
  EXPECT_NE(masking::gen_scattered(30, 30, 0.4, 5).mask, masking::gen_scattered(30, 30, 0.4, 6).mask);
}

TEST(Scattered, RateOutsideOpenIntervalIsSpecError) {
  EXPECT_THROW(masking::gen_scattered(5, 5, 0.0, 1), SpecError);
  EXPECT_THROW(masking::gen_scattered(5, 5, 1.0, 1), SpecError);
  EXPECT_THROW(masking::gen_scattered(5, 5, -0.1, 1), SpecError);
}

TEST(Uniblock, OneRectangleNearTargetRate) {
  for (double rate : {0.2, 0.4, 0.6, 0.8}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto g = masking::gen_uniblock(200, 50, rate, seed);
      ASSERT_EQ(g.blocks.size(), 1u);
      const auto& b = g.blocks[0];
      EXPECT_GE(b.height, masking::kMinBlockSide);
      EXPECT_GE(b.width, masking::kMinBlockSide);
      EXPECT_TRUE(masking::is_block_region(g.mask, b.top, b.left, b.bottom(), b.right()));
      EXPECT_TRUE(zeros_are_union_of(g.mask, g.blocks));
      EXPECT_NEAR(g.achieved_rate, rate, 0.05 * rate) << rate << " " << seed;
    }
  }
}

TEST(Uniblock, TooSmallInputIsSpecError) {
  EXPECT_THROW(masking::gen_uniblock(3, 10, 0.3, 0), SpecError);
  EXPECT_THROW(masking::gen_uniblock(10, 3, 0.3, 0), SpecError);
}

TEST(Uniblock, Deterministic) {
  EXPECT_EQ(masking::gen_uniblock(40, 40, 0.3, 9).mask, masking::gen_uniblock(40, 40, 0.3, 9).mask);
}

TEST(Multiblock, DisjointBlocksWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = masking::gen_multiblock(200, 50, 0.4, 3, seed);
    ASSERT_EQ(g.blocks.size(), 3u);
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_GE(g.blocks[a].height, masking::kMinBlockSide);
      EXPECT_GE(g.blocks[a].width, masking::kMinBlockSide);
      for (std::size_t b = a + 1; b < 3; ++b) EXPECT_FALSE(g.blocks[a].overlaps(g.blocks[b]));
    }
    EXPECT_TRUE(zeros_are_union_of(g.mask, g.blocks));
    EXPECT_LE(std::abs(static_cast<double>(g.zeros) - 4000.0), 200.0);
  }
}

TEST(Multiblock, SingleBlockFallsBackToUniblock) {
  EXPECT_EQ(masking::gen_multiblock(30, 30, 0.3, 1, 4).mask, masking::gen_uniblock(30, 30, 0.3, 4).mask);
}

TEST(Multiblock, InfeasibleLayoutIsSpecError) {
  EXPECT_THROW(masking::gen_multiblock(8, 8, 0.9, 4, 0), SpecError);
}

TEST(Generate, DispatchesOnPattern) {
  masking::MaskSpec spec{Pattern::uniblock, 0.3, 2};
  EXPECT_EQ(masking::generate(spec, 20, 20).mask, masking::gen_uniblock(20, 20, 0.3, 2).mask);
  EXPECT_EQ(masking::pattern_from_string("multiblock"), Pattern::multiblock);
  EXPECT_THROW(masking::pattern_from_string("diagonal"), SpecError);
}

TEST(IsBlockRegion, HandExamples) {
  Matrix mask = Matrix::ones(6, 6);
  for (std::size_t i = 1; i <= 4; ++i)
    for (std::size_t j = 1; j <= 4; ++j) mask(i, j) = 0.0;
  EXPECT_TRUE(masking::is_block_region(mask, 1, 1, 4, 4));
  EXPECT_FALSE(masking::is_block_region(mask, 1, 1, 3, 4));  // only 3 rows
  EXPECT_FALSE(masking::is_block_region(mask, 0, 1, 4, 4));  // row 0 observed
  EXPECT_THROW(masking::is_block_region(mask, 0, 0, 6, 4), ValidationError);
}

TEST(ApplyMask, SentinelAtMissingCells) {
  const Matrix x{{1, 2}, {3, 4}};
  const Matrix mask{{1, 0}, {0, 1}};
  const auto xm = masking::apply_mask(x, mask);
  EXPECT_EQ(xm.values, (Matrix{{1, 0}, {0, 4}}));
  EXPECT_THROW(masking::apply_mask(x, Matrix{{1, 0.5}, {0, 1}}), ValidationError);
}

TEST(Hint, RevealedFractionAndValues) {
  numkern::Rng mrng(1);
  const Matrix mask = mrng.bernoulli_matrix(100, 100, 0.7);
  for (double rate : {0.1, 0.9}) {
    numkern::Rng rng(3);
    const Matrix hint = gan::build_hint(mask, rate, rng);
    std::size_t revealed = 0;
    for (std::size_t k = 0; k < hint.size(); ++k) {
      if (hint[k] == 0.5) continue;
      ASSERT_EQ(hint[k], mask[k]);
      ++revealed;
    }
    EXPECT_NEAR(static_cast<double>(revealed) / 10000.0, rate, 0.02);
  }
}

TEST(Hint, ZeroRateWithholdsEverything) {
  numkern::Rng rng(0);
  const Matrix hint = gan::build_hint(Matrix{{1, 0}, {0, 1}}, 0.0, rng);
  EXPECT_EQ(hint, (Matrix{{0.5, 0.5}, {0.5, 0.5}}));
}
