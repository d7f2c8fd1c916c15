#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"

namespace blockecho::numkern {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_block = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is ~0
// from being judged on round-off alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients against central finite differences of `loss`, which must
// re-evaluate the scalar objective from the current parameter values.
inline GradCheckReport check_gradients(const std::function<double()>& loss,
                                       const std::vector<Matrix*>& params,
                                       const std::vector<Matrix>& analytic, double step = 1e-5,
                                       double floor = 1e-6) {
  if (params.size() != analytic.size()) {
    throw ShapeError("check_gradients: parameter/gradient block count mismatch");
  }
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Matrix& p = *params[b];
    require_same_shape(p, analytic[b], "check_gradients");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + step;
      const double up = loss();
      p[k] = saved - step;
      const double down = loss();
      p[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[b][k], numeric, floor);
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_block = b;
        report.worst_index = k;
        report.worst_analytic = analytic[b][k];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace blockecho::numkern
