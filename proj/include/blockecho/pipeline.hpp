#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockecho/baselines.hpp"
#include "blockecho/errors.hpp"
#include "blockecho/gan.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/metrics.hpp"
#include "blockecho/mf.hpp"
#include "blockecho/numkern/matrix.hpp"

// load -> normalize -> (pretrain) -> impute -> denormalize -> assemble -> metrics.
namespace blockecho::pipeline {

using numkern::Matrix;

enum class Method { blockecho, mf, gan_only, mean, colmean, knn };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> kAll = {Method::blockecho, Method::mf,      Method::gan_only,
                                           Method::mean,      Method::colmean, Method::knn};
  return kAll;
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::blockecho:
      return "blockecho";
    case Method::mf:
      return "mf";
    case Method::gan_only:
      return "gan_only";
    case Method::mean:
      return "mean";
    case Method::colmean:
      return "colmean";
    case Method::knn:
      return "knn";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : all_methods())
    if (s == to_string(m)) return m;
  throw SpecError("unknown method '" + s +
                  "' (expected blockecho|mf|gan_only|mean|colmean|knn)");
}

struct MethodOptions {
  gan::BlockEchoConfig config;
  metrics::NormOptions norm;
  std::size_t knn_k = 5;
};

struct MethodOutput {
  Matrix imputed;  // original units; observed cells copied bit-exactly
  Matrix estimate;  // method's estimate for every cell, original units
  std::optional<mf::MfTrace> mf_trace;
  std::vector<gan::LossRecord> losses;
  gan::CallCounters counters;
  nlohmann::json config;
  std::optional<nlohmann::json> checkpoint;  // blockecho only
  double wall_seconds = 0.0;
};

// Masked input in original units (missing cells hold the sentinel).
inline MethodOutput run_method(Method method, const masking::MaskedMatrix& input,
                               const MethodOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  masking::validate_mask(input.mask);
  MethodOutput out;
  const std::size_t m = input.rows(), n = input.cols();

  Matrix estimate;
  switch (method) {
    case Method::mean:
      estimate = baselines::impute_mean(input);
      out.config = {{"method", "mean"}};
      break;
    case Method::colmean:
      estimate = baselines::impute_colmean(input);
      out.config = {{"method", "colmean"}};
      break;
    case Method::knn:
      estimate = baselines::impute_knn(input, opt.knn_k);
      out.config = {{"method", "knn"}, {"k", opt.knn_k}};
      break;
    case Method::mf:
    case Method::blockecho:
    case Method::gan_only: {
      const auto norm = metrics::normalize(input.values, input.mask, opt.norm);
      const masking::MaskedMatrix xm = masking::apply_mask(norm.values, input.mask);
      const gan::BlockEchoConfig cfg = opt.config.resolved(m, n);
      Matrix est_norm;
      if (method == Method::gan_only) {
        const auto gc = baselines::GainConfig::from(cfg);
        est_norm = baselines::impute_gain(xm, gc);
        out.config = {{"method", "gan_only"},
                      {"hint_rate", gc.hint_rate},
                      {"reconstruction_weight", gc.reconstruction_weight},
                      {"iters", gc.iters},
                      {"seed", gc.seed}};
      } else {
        auto [factors, trace] =
            mf::pretrain(xm, {cfg.h, cfg.pretrain_iters, cfg.pretrain_tol, cfg.seed});
        if (method == Method::mf) {
          est_norm = mf::mf_impute(factors);
          out.config = {{"method", "mf"},
                        {"h", cfg.h},
                        {"pretrain_iters", cfg.pretrain_iters},
                        {"pretrain_tol", cfg.pretrain_tol},
                        {"seed", cfg.seed}};
        } else {
          auto trained = gan::train(xm, factors, cfg);
          est_norm = std::move(trained.result.xhat);
          out.losses = std::move(trained.result.losses);
          out.counters = trained.model.counters;
          out.config = trained.result.config;
          out.config["method"] = "blockecho";
          out.checkpoint = gan::checkpoint_json(trained.model);
        }
        out.mf_trace = std::move(trace);
      }
      estimate = metrics::denormalize(est_norm, norm.params);
      break;
    }
  }
  out.imputed = gan::assemble(input.values, input.mask, estimate);
  out.estimate = std::move(estimate);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// RMSE on the cells with mask 0 and truth_present 1, after min-max normalizing imputed
// values and truth with per-column ranges of the present ground truth.
inline metrics::RmseReport evaluate(const Matrix& imputed, const Matrix& truth, const Matrix& mask,
                                    const Matrix& truth_present) {
  numkern::require_same_shape(truth, mask, "evaluate");
  numkern::require_same_shape(truth, truth_present, "evaluate");
  const auto params = metrics::fit_norm(truth, truth_present, {0.0, true});
  Matrix scored = Matrix::ones(mask.rows(), mask.cols());
  for (std::size_t k = 0; k < scored.size(); ++k)
    if (mask[k] == 0.0 && truth_present[k] != 0.0) scored[k] = 0.0;
  return metrics::rmse_missing(metrics::apply_norm(imputed, params),
                               metrics::apply_norm(truth, params), scored);
}

inline metrics::RmseReport evaluate(const Matrix& imputed, const Matrix& truth, const Matrix& mask) {
  return evaluate(imputed, truth, mask, Matrix::ones(truth.rows(), truth.cols()));
}

// True iff every observed cell of `input` survives bit-exactly in `imputed`.
inline bool observed_preserved(const masking::MaskedMatrix& input, const Matrix& imputed) {
  if (!input.values.same_shape(imputed)) return false;
  for (std::size_t k = 0; k < imputed.size(); ++k) {
    if (input.mask[k] != 0.0 &&
        std::bit_cast<std::uint64_t>(input.values[k]) != std::bit_cast<std::uint64_t>(imputed[k])) {
      return false;
    }
  }
  return true;
}

}  // namespace blockecho::pipeline
