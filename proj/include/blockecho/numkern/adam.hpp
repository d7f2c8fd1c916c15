#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"

namespace blockecho::numkern {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive moment estimation over a fixed list of named parameter blocks.
class OptimState {
 public:
  OptimState() = default;

  OptimState(const std::vector<Matrix*>& params, std::vector<std::string> names,
             AdamOptions options = {})
      : options_(options), names_(std::move(names)) {
    if (names_.size() != params.size()) {
      throw UsageError("OptimState: " + std::to_string(params.size()) + " parameters but " +
                       std::to_string(names_.size()) + " names");
    }
    for (const Matrix* p : params) {
      first_.emplace_back(p->rows(), p->cols());
      second_.emplace_back(p->rows(), p->cols());
    }
  }

  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Matrix>& first_moments() const { return first_; }
  const std::vector<Matrix>& second_moments() const { return second_; }

  // Applies one bias-corrected update. All gradients are validated before any
  // parameter is touched.
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != first_.size() || grads.size() != first_.size()) {
      throw ShapeError("OptimState::step: expected " + std::to_string(first_.size()) +
                       " parameter blocks, got " + std::to_string(params.size()) + " params and " +
                       std::to_string(grads.size()) + " grads");
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (!params[b]->same_shape(first_[b]) || !grads[b].same_shape(first_[b])) {
        throw ShapeError("OptimState::step: block '" + names_[b] + "' expects " +
                         first_[b].shape() + ", got param " + params[b]->shape() + " grad " +
                         grads[b].shape());
      }
      if (!grads[b].all_finite()) {
        throw TrainingError("non-finite gradient in parameter block '" + names_[b] + "'");
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
      Matrix& p = *params[b];
      Matrix& m = first_[b];
      Matrix& v = second_[b];
      const Matrix& g = grads[b];
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
        v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p[k] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
      }
    }
  }

 private:
  AdamOptions options_;
  std::vector<std::string> names_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::uint64_t step_ = 0;
};

}  // namespace blockecho::numkern
