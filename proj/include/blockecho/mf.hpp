#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/io.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"
#include "json.hpp"

// Masked nonnegative matrix factorization under the generalized KL divergence, fitted
// with multiplicative updates. Each full U-then-V step never increases the loss.
namespace blockecho::mf {

using numkern::Matrix;

// Positivity floor for factor entries; keeps x/xhat and log(x/xhat) defined.
inline constexpr double kFactorFloor = 1e-8;

struct FactorPair {
  Matrix u;  // m x h, row embeddings
  Matrix v;  // h x n, column embeddings

  std::size_t rank() const { return u.cols(); }

  void validate() const {
    if (u.cols() == 0 || v.rows() == 0) throw SpecError("FactorPair: rank h must be positive");
    if (u.cols() != v.rows()) {
      throw ShapeError("FactorPair: U " + u.shape() + " and V " + v.shape() + " disagree on h");
    }
  }
};

struct MfTrace {
  std::vector<double> losses;  // losses[0] is the loss at initialization
  std::size_t iterations = 0;
  bool converged = false;
  // Rows/columns with no observed cells; their factors are never updated.
  std::vector<std::size_t> frozen_rows;
  std::vector<std::size_t> frozen_cols;

  double final_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

inline void require_observed_nonnegative(const Matrix& x, const Matrix& mask) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (mask[k] != 0.0 && !(x[k] >= 0.0)) {
      throw DomainError("observed value " + std::to_string(x[k]) + " at (" +
                        std::to_string(k / x.cols()) + "," + std::to_string(k % x.cols()) +
                        ") is negative or not finite; min-max normalize the data first "
                        "(metrics::normalize)");
    }
  }
}

// Sum over observed cells of x*log(x/xhat) - x + xhat; a zero x contributes xhat.
inline double kl_loss(const Matrix& x, const Matrix& xhat, const Matrix& mask) {
  numkern::require_same_shape(x, xhat, "kl_loss");
  numkern::require_same_shape(x, mask, "kl_loss mask");
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (mask[k] == 0.0) continue;
    const double a = x[k], b = xhat[k];
    if (!(a >= 0.0)) {
      throw DomainError("kl_loss: observed value " + std::to_string(a) +
                        " is negative; normalize with metrics::normalize first");
    }
    if (!(b > 0.0)) throw DomainError("kl_loss: estimate must be strictly positive");
    total += (a > 0.0 ? a * std::log(a / b) : 0.0) - a + b;
  }
  return total;
}

inline Matrix mf_impute(const FactorPair& f) {
  f.validate();
  return numkern::matmul(f.u, f.v);
}

struct MuStepResult {
  FactorPair factors;
  std::vector<std::size_t> frozen_rows;
  std::vector<std::size_t> frozen_cols;
};

namespace detail {

// ratio = mask * x / xhat, zero at unobserved cells (x there is never read).
inline Matrix observed_ratio(const Matrix& x, const Matrix& mask, const Matrix& xhat) {
  Matrix r(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (mask[k] != 0.0) r[k] = x[k] / xhat[k];
  }
  return r;
}

}  // namespace detail

// One alternating multiplicative update, U first, then V against the updated U.
inline MuStepResult mu_step(const Matrix& x, const Matrix& mask, const FactorPair& factors) {
  factors.validate();
  numkern::require_same_shape(x, mask, "mu_step");
  if (factors.u.rows() != x.rows() || factors.v.cols() != x.cols()) {
    throw ShapeError("mu_step: factors " + factors.u.shape() + "x" + factors.v.shape() +
                     " do not match data " + x.shape());
  }
  const std::size_t m = x.rows(), n = x.cols(), h = factors.rank();
  MuStepResult out{factors, {}, {}};
  Matrix& u = out.factors.u;
  Matrix& v = out.factors.v;

  {
    const Matrix ratio = detail::observed_ratio(x, mask, numkern::matmul(u, v));
    const Matrix num = numkern::matmul_nt(ratio, v);  // m x h
    const Matrix den = numkern::matmul_nt(mask, v);   // m x h
    for (std::size_t i = 0; i < m; ++i) {
      bool frozen = false;
      for (std::size_t a = 0; a < h; ++a) {
        if (den(i, a) <= 0.0) {
          frozen = true;
          continue;
        }
        u(i, a) = std::max(kFactorFloor, u(i, a) * num(i, a) / den(i, a));
      }
      if (frozen) out.frozen_rows.push_back(i);
    }
  }
  {
    const Matrix ratio = detail::observed_ratio(x, mask, numkern::matmul(u, v));
    const Matrix num = numkern::matmul_tn(u, ratio);  // h x n
    const Matrix den = numkern::matmul_tn(u, mask);   // h x n
    std::vector<bool> frozen(n, false);
    for (std::size_t a = 0; a < h; ++a) {
      for (std::size_t j = 0; j < n; ++j) {
        if (den(a, j) <= 0.0) {
          frozen[j] = true;
          continue;
        }
        v(a, j) = std::max(kFactorFloor, v(a, j) * num(a, j) / den(a, j));
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      if (frozen[j]) out.frozen_cols.push_back(j);
  }
  return out;
}

struct PretrainOptions {
  std::size_t rank = 8;
  std::size_t max_iters = 2000;
  double tol = 1e-6;  // relative loss improvement
  std::uint64_t seed = 0;
};

// Uniform [0.1, 1.1] entries, rescaled so that mean(UV) matches the observed mean.
inline FactorPair init_factors(const masking::MaskedMatrix& xm, std::size_t h,
                               std::uint64_t seed) {
  numkern::Rng rng(seed, numkern::Stream::kInit, 0x6d66);
  FactorPair f{rng.uniform_matrix(xm.rows(), h, 0.1, 1.1), rng.uniform_matrix(h, xm.cols(), 0.1, 1.1)};
  double obs_sum = 0.0, obs_count = 0.0;
  for (std::size_t k = 0; k < xm.values.size(); ++k) {
    if (xm.mask[k] != 0.0) {
      obs_sum += xm.values[k];
      obs_count += 1.0;
    }
  }
  const double target = std::max(obs_count > 0.0 ? obs_sum / obs_count : 1.0, kFactorFloor);
  const double current = numkern::sum(numkern::matmul(f.u, f.v)) /
                         static_cast<double>(xm.rows() * xm.cols());
  const double s = std::sqrt(target / current);
  for (auto& e : f.u.values()) e = std::max(kFactorFloor, e * s);
  for (auto& e : f.v.values()) e = std::max(kFactorFloor, e * s);
  return f;
}

inline std::pair<FactorPair, MfTrace> pretrain(const masking::MaskedMatrix& xm,
                                               const PretrainOptions& opt) {
  if (opt.rank == 0) throw SpecError("pretrain: rank h must be positive");
  masking::validate_mask(xm.mask);
  if (numkern::sum(xm.mask) == 0.0) throw SpecError("pretrain: mask has no observed entries");
  require_observed_nonnegative(xm.values, xm.mask);

  FactorPair f = init_factors(xm, opt.rank, opt.seed);
  MfTrace trace;
  trace.losses.push_back(kl_loss(xm.values, mf_impute(f), xm.mask));
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    MuStepResult step = mu_step(xm.values, xm.mask, f);
    f = std::move(step.factors);
    if (it == 0) {
      trace.frozen_rows = std::move(step.frozen_rows);
      trace.frozen_cols = std::move(step.frozen_cols);
    }
    const double prev = trace.losses.back();
    const double cur = kl_loss(xm.values, mf_impute(f), xm.mask);
    trace.losses.push_back(cur);
    trace.iterations = it + 1;
    if (cur <= 0.0 || (prev - cur) <= opt.tol * std::max(prev, 1e-300)) {
      trace.converged = true;
      break;
    }
  }
  return {std::move(f), std::move(trace)};
}

inline nlohmann::json trace_metadata(const MfTrace& trace, std::size_t h, std::uint64_t seed) {
  return {{"h", h},
          {"seed", seed},
          {"final_loss", trace.final_loss()},
          {"iterations", trace.iterations},
          {"converged", trace.converged}};
}

// Writes <prefix>_U.csv, <prefix>_V.csv and <prefix>.json.
inline void save_factors(const FactorPair& f, const MfTrace& trace, std::uint64_t seed,
                         const std::string& prefix) {
  io::write_file(prefix + "_U.csv", io::format_matrix_csv(f.u));
  io::write_file(prefix + "_V.csv", io::format_matrix_csv(f.v));
  io::write_file(prefix + ".json", trace_metadata(trace, f.rank(), seed).dump(2) + "\n");
}

}  // namespace blockecho::mf
