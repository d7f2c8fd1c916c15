#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "json.hpp"

namespace blockecho::metrics {

using numkern::Matrix;

inline constexpr double kDefaultNormFloor = 1e-3;

struct NormOptions {
  double floor = kDefaultNormFloor;  // observed values land in [floor, 1]
  bool per_column = true;
};

// Min-max parameters fitted on observed cells. A column with no observed cells
// (degenerate) borrows the global observed range.
struct NormParams {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;
  double floor = kDefaultNormFloor;
  bool per_column = true;

  double forward(std::size_t col, double x) const {
    const double lo = min[col], hi = max[col];
    if (!(hi > lo)) return floor;
    return floor + (1.0 - floor) * (x - lo) / (hi - lo);
  }

  double inverse(std::size_t col, double y) const {
    const double lo = min[col], hi = max[col];
    if (!(hi > lo)) return lo;
    return lo + (y - floor) * (hi - lo) / (1.0 - floor);
  }
};

struct Normalized {
  Matrix values;
  NormParams params;
};

inline NormParams fit_norm(const Matrix& x, const Matrix& mask, const NormOptions& opt = {}) {
  numkern::require_same_shape(x, mask, "normalize");
  if (!(opt.floor >= 0.0 && opt.floor < 1.0)) throw SpecError("normalize: floor must be in [0,1)");
  const std::size_t n = x.cols();
  NormParams p;
  p.floor = opt.floor;
  p.per_column = opt.per_column;
  p.min.assign(n, INFINITY);
  p.max.assign(n, -INFINITY);
  p.degenerate.assign(n, false);
  double gmin = INFINITY, gmax = -INFINITY;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j) == 0.0) continue;
      const double v = x(i, j);
      p.min[j] = std::min(p.min[j], v);
      p.max[j] = std::max(p.max[j], v);
      gmin = std::min(gmin, v);
      gmax = std::max(gmax, v);
    }
  }
  if (!std::isfinite(gmin)) {
    gmin = 0.0;
    gmax = 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(p.min[j])) {
      p.degenerate[j] = true;
      p.min[j] = gmin;
      p.max[j] = gmax;
    } else if (!opt.per_column) {
      p.min[j] = gmin;
      p.max[j] = gmax;
    }
  }
  return p;
}

// Applies params to every finite cell (missing cells are transformed too, which is
// what evaluation against ground truth needs).
inline Matrix apply_norm(const Matrix& x, const NormParams& p) {
  if (p.min.size() != x.cols()) throw ShapeError("apply_norm: params do not match " + x.shape());
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (std::isfinite(x(i, j))) out(i, j) = p.forward(j, x(i, j));
  return out;
}

inline Normalized normalize(const Matrix& x, const Matrix& mask, const NormOptions& opt = {}) {
  NormParams p = fit_norm(x, mask, opt);
  Matrix values = apply_norm(x, p);
  return {std::move(values), std::move(p)};
}

inline Matrix denormalize(const Matrix& y, const NormParams& p) {
  if (p.min.size() != y.cols()) throw ShapeError("denormalize: params do not match " + y.shape());
  Matrix out = y;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) = p.inverse(j, y(i, j));
  return out;
}

struct RmseReport {
  double standard = 0.0;    // sqrt(sum err^2 / count)
  double paper_form = 0.0;  // ||err||_F / count
  std::size_t count = 0;
};

// Error over missing (mask == 0) cells only, reported in two forms: the conventional
// root-mean-square, and the Frobenius norm divided by the missing count.
inline RmseReport rmse_missing(const Matrix& imputed, const Matrix& truth, const Matrix& mask) {
  numkern::require_same_shape(imputed, truth, "rmse_missing");
  numkern::require_same_shape(imputed, mask, "rmse_missing mask");
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k] != 0.0) continue;
    const double e = imputed[k] - truth[k];
    sq += e * e;
    ++count;
  }
  if (count == 0) throw EvaluationError("rmse_missing: mask has no missing cells");
  const double c = static_cast<double>(count);
  return {std::sqrt(sq / c), std::sqrt(sq) / c, count};
}

inline double wmape(const Matrix& pred, const Matrix& actual) {
  numkern::require_same_shape(pred, actual, "wmape");
  double err = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    err += std::abs(pred[k] - actual[k]);
    scale += std::abs(actual[k]);
  }
  if (!(scale > 0.0)) throw EvaluationError("wmape: actual values sum to zero");
  return err / scale;
}

struct MetricReport {
  std::string method;
  std::string pattern;
  double rate = 0.0;
  std::uint64_t seed = 0;
  RmseReport rmse;
  std::optional<double> wmape;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"method", method},
                        {"pattern", pattern},
                        {"rate", rate},
                        {"seed", seed},
                        {"rmse_standard", rmse.standard},
                        {"rmse_paper_form", rmse.paper_form},
                        {"missing_count", rmse.count}};
    if (wmape) j["wmape"] = *wmape;
    return j;
  }
};

}  // namespace blockecho::metrics
