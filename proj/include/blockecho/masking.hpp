#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"

namespace blockecho::masking {

using numkern::Matrix;

enum class Pattern { scattered, uniblock, multiblock };

inline const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::scattered:
      return "scattered";
    case Pattern::uniblock:
      return "uniblock";
    case Pattern::multiblock:
      return "multiblock";
  }
  return "?";
}

inline Pattern pattern_from_string(const std::string& s) {
  if (s == "scattered") return Pattern::scattered;
  if (s == "uniblock") return Pattern::uniblock;
  if (s == "multiblock") return Pattern::multiblock;
  throw SpecError("unknown mask pattern '" + s + "' (expected scattered|uniblock|multiblock)");
}

struct MaskSpec {
  Pattern pattern = Pattern::scattered;
  double rate = 0.5;
  std::uint64_t seed = 0;
  std::size_t blocks = 3;  // multiblock only

  void validate() const {
    if (!(rate > 0.0 && rate < 1.0)) {
      throw SpecError("mask rate must lie in (0,1), got " + std::to_string(rate));
    }
    if (pattern == Pattern::multiblock && blocks < 2) {
      throw SpecError("multiblock masks need at least 2 blocks");
    }
  }
};

// Inclusive cell rectangle [top, bottom] x [left, right].
struct Block {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t bottom() const { return top + height - 1; }
  std::size_t right() const { return left + width - 1; }
  std::size_t area() const { return height * width; }

  bool overlaps(const Block& o) const {
    return top <= o.bottom() && o.top <= bottom() && left <= o.right() && o.left <= right();
  }
};

struct GeneratedMask {
  Matrix mask;  // 1 = observed, 0 = missing
  std::size_t target_zeros = 0;
  std::size_t zeros = 0;
  double achieved_rate = 0.0;
  std::vector<Block> blocks;  // empty for scattered masks
};

// Smallest side of a missing block: the bottom-right corner sits at least three
// indices past the top-left corner in both directions.
inline constexpr std::size_t kMinBlockSide = 4;

inline std::size_t count_zeros(const Matrix& mask) {
  return static_cast<std::size_t>(
      std::count(mask.values().begin(), mask.values().end(), 0.0));
}

inline std::size_t target_zero_count(std::size_t m, std::size_t n, double rate) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(m * n)));
}

inline void validate_mask(const Matrix& mask) {
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const double v = mask[k];
    if (v != 0.0 && v != 1.0) {
      throw ValidationError("mask entry at (" + std::to_string(k / mask.cols()) + "," +
                            std::to_string(k % mask.cols()) + ") is " + std::to_string(v) +
                            ", expected 0 or 1");
    }
  }
}

inline GeneratedMask finish(Matrix mask, std::size_t target, std::vector<Block> blocks) {
  GeneratedMask out;
  out.zeros = count_zeros(mask);
  out.achieved_rate = static_cast<double>(out.zeros) / static_cast<double>(mask.size());
  out.target_zeros = target;
  out.mask = std::move(mask);
  out.blocks = std::move(blocks);
  return out;
}

// Masks exactly round(rate*m*n) cells: the cells holding the smallest values of a
// seeded uniform random matrix (ties broken by position).
inline GeneratedMask gen_scattered(std::size_t m, std::size_t n, double rate, std::uint64_t seed) {
  MaskSpec{Pattern::scattered, rate, seed}.validate();
  if (m == 0 || n == 0) throw SpecError("gen_scattered: empty shape");
  const std::size_t target = target_zero_count(m, n, rate);
  if (target >= m * n) throw SpecError("gen_scattered: rate would mask every cell");
  numkern::Rng rng(seed, numkern::Stream::kMask);
  const Matrix scores = rng.uniform_matrix(m, n);
  std::vector<std::size_t> order(m * n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  Matrix mask = Matrix::ones(m, n);
  for (std::size_t r = 0; r < target; ++r) mask[order[r]] = 0.0;
  return finish(std::move(mask), target, {});
}

// Largest allowed side along an axis of length len. Blocks leave at least one observed
// line along each axis unless the axis is only kMinBlockSide long.
inline std::size_t max_block_side(std::size_t len) {
  return len <= kMinBlockSide ? len : len - 1;
}

// All (height, width) pairs whose area is within `slack` cells of the closest achievable
// area to `target_area`.
inline std::vector<std::pair<std::size_t, std::size_t>> block_shapes_near(
    std::size_t m, std::size_t n, std::size_t target_area, std::size_t slack = 0) {
  const std::size_t hmax = max_block_side(m), wmax = max_block_side(n);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (hmax < kMinBlockSide || wmax < kMinBlockSide) return out;
  std::size_t best = SIZE_MAX;
  auto dist = [&](std::size_t a) { return a > target_area ? a - target_area : target_area - a; };
  for (std::size_t h = kMinBlockSide; h <= hmax; ++h)
    for (std::size_t w = kMinBlockSide; w <= wmax; ++w) best = std::min(best, dist(h * w));
  for (std::size_t h = kMinBlockSide; h <= hmax; ++h)
    for (std::size_t w = kMinBlockSide; w <= wmax; ++w)
      if (dist(h * w) <= best + slack) out.emplace_back(h, w);
  return out;
}

inline void zero_block(Matrix& mask, const Block& b) {
  for (std::size_t i = b.top; i <= b.bottom(); ++i)
    for (std::size_t j = b.left; j <= b.right(); ++j) mask(i, j) = 0.0;
}

// One contiguous missing rectangle with area as close as possible to round(rate*m*n).
// The shape is drawn uniformly among the closest-area shapes, then placed uniformly.
inline GeneratedMask gen_uniblock(std::size_t m, std::size_t n, double rate, std::uint64_t seed) {
  MaskSpec{Pattern::uniblock, rate, seed}.validate();
  if (m < kMinBlockSide || n < kMinBlockSide) {
    throw SpecError("gen_uniblock: a " + Matrix::shape_string(m, n) +
                    " matrix cannot hold a 4x4 missing block");
  }
  const std::size_t target = target_zero_count(m, n, rate);
  const auto shapes = block_shapes_near(m, n, target);
  if (shapes.empty()) throw SpecError("gen_uniblock: no feasible block shape");
  numkern::Rng rng(seed, numkern::Stream::kMask);
  const auto [h, w] = shapes[rng.below(shapes.size())];
  Block b{rng.below(m - h + 1), 0, h, w};
  b.left = rng.below(n - w + 1);
  Matrix mask = Matrix::ones(m, n);
  zero_block(mask, b);
  return finish(std::move(mask), target, {b});
}

inline constexpr int kMultiblockLayoutAttempts = 200;
inline constexpr int kMultiblockPlacementAttempts = 200;

// k disjoint rectangles (touching edges allowed), each at least 4x4, with total area
// within 5% of round(rate*m*n). Layouts are rejection-sampled.
inline GeneratedMask gen_multiblock(std::size_t m, std::size_t n, double rate, std::size_t k,
                                    std::uint64_t seed) {
  if (k == 1) return gen_uniblock(m, n, rate, seed);
  MaskSpec{Pattern::multiblock, rate, seed, k}.validate();
  if (m < kMinBlockSide || n < kMinBlockSide) {
    throw SpecError("gen_multiblock: a " + Matrix::shape_string(m, n) +
                    " matrix cannot hold a 4x4 missing block");
  }
  const std::size_t target = target_zero_count(m, n, rate);
  const double tolerance = 0.05 * static_cast<double>(target);
  numkern::Rng rng(seed, numkern::Stream::kMask);

  for (int attempt = 0; attempt < kMultiblockLayoutAttempts; ++attempt) {
    std::vector<Block> placed;
    std::size_t remaining = target;
    bool ok = true;
    for (std::size_t b = 0; b < k && ok; ++b) {
      const std::size_t blocks_left = k - b;
      const std::size_t want = std::max<std::size_t>(kMinBlockSide * kMinBlockSide,
                                                     (remaining + blocks_left / 2) / blocks_left);
      const auto shapes = block_shapes_near(m, n, want, want / 50);
      if (shapes.empty()) {
        ok = false;
        break;
      }
      bool placed_one = false;
      for (int tries = 0; tries < kMultiblockPlacementAttempts && !placed_one; ++tries) {
        const auto [h, w] = shapes[rng.below(shapes.size())];
        Block cand{rng.below(m - h + 1), 0, h, w};
        cand.left = rng.below(n - w + 1);
        if (std::none_of(placed.begin(), placed.end(),
                         [&](const Block& o) { return o.overlaps(cand); })) {
          placed.push_back(cand);
          remaining = remaining > cand.area() ? remaining - cand.area() : 0;
          placed_one = true;
        }
      }
      ok = placed_one;
    }
    if (!ok) continue;
    std::size_t total = 0;
    for (const auto& b : placed) total += b.area();
    if (std::abs(static_cast<double>(total) - static_cast<double>(target)) > tolerance) continue;
    Matrix mask = Matrix::ones(m, n);
    for (const auto& b : placed) zero_block(mask, b);
    return finish(std::move(mask), target, std::move(placed));
  }
  throw SpecError("gen_multiblock: could not place " + std::to_string(k) +
                  " disjoint blocks covering rate " + std::to_string(rate) + " of a " +
                  Matrix::shape_string(m, n) + " matrix; try a lower rate or fewer blocks");
}

inline GeneratedMask generate(const MaskSpec& spec, std::size_t m, std::size_t n) {
  switch (spec.pattern) {
    case Pattern::scattered:
      return gen_scattered(m, n, spec.rate, spec.seed);
    case Pattern::uniblock:
      return gen_uniblock(m, n, spec.rate, spec.seed);
    case Pattern::multiblock:
      return gen_multiblock(m, n, spec.rate, spec.blocks, spec.seed);
  }
  throw SpecError("unknown mask pattern");
}

// Observed values with the in-memory sentinel (0) at missing cells.
struct MaskedMatrix {
  Matrix values;
  Matrix mask;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  bool observed(std::size_t i, std::size_t j) const { return mask(i, j) == 1.0; }
};

inline constexpr double kMissingSentinel = 0.0;

inline MaskedMatrix apply_mask(const Matrix& x, const Matrix& mask) {
  numkern::require_same_shape(x, mask, "apply_mask");
  validate_mask(mask);
  MaskedMatrix out{x, mask};
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (mask[k] == 0.0) out.values[k] = kMissingSentinel;
  }
  return out;
}

// True iff rows [il, iu] x cols [jl, ju] are all missing and the rectangle is at least
// 4x4 (iu >= il + 3 and ju >= jl + 3).
inline bool is_block_region(const Matrix& mask, std::size_t il, std::size_t jl, std::size_t iu,
                            std::size_t ju) {
  if (iu >= mask.rows() || ju >= mask.cols() || il > iu || jl > ju) {
    throw ValidationError("is_block_region: rectangle [" + std::to_string(il) + "," +
                          std::to_string(iu) + "]x[" + std::to_string(jl) + "," +
                          std::to_string(ju) + "] invalid for mask " + mask.shape());
  }
  if (iu < il + 3 || ju < jl + 3) return false;
  for (std::size_t i = il; i <= iu; ++i)
    for (std::size_t j = jl; j <= ju; ++j)
      if (mask(i, j) != 0.0) return false;
  return true;
}

}  // namespace blockecho::masking
