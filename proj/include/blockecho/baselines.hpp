#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/gan.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/numkern/adam.hpp"
#include "blockecho/numkern/dense_net.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"

// Reference imputers the benchmark compares against. Each returns a full estimate
// matrix; callers assemble it with the observed cells.
namespace blockecho::baselines {

using numkern::Matrix;

inline double observed_mean(const masking::MaskedMatrix& xm) {
  double s = 0.0, c = 0.0;
  for (std::size_t k = 0; k < xm.values.size(); ++k) {
    if (xm.mask[k] != 0.0) {
      s += xm.values[k];
      c += 1.0;
    }
  }
  if (c == 0.0) throw SpecError("mean imputation: no observed entries");
  return s / c;
}

inline Matrix impute_mean(const masking::MaskedMatrix& xm) {
  return {xm.rows(), xm.cols(), observed_mean(xm)};
}

// Per-column observed mean; columns with nothing observed take the global mean.
inline Matrix impute_colmean(const masking::MaskedMatrix& xm) {
  const double global = observed_mean(xm);
  Matrix out(xm.rows(), xm.cols());
  for (std::size_t j = 0; j < xm.cols(); ++j) {
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < xm.rows(); ++i) {
      if (xm.mask(i, j) != 0.0) {
        s += xm.values(i, j);
        c += 1.0;
      }
    }
    const double mu = c > 0.0 ? s / c : global;
    for (std::size_t i = 0; i < xm.rows(); ++i) out(i, j) = mu;
  }
  return out;
}

// Row-wise k-nearest-neighbour imputation. Row distance is the mean squared difference
// over co-observed columns; a missing cell averages the k closest rows that observe its
// column, falling back to the column mean.
inline Matrix impute_knn(const masking::MaskedMatrix& xm, std::size_t k = 5) {
  if (k == 0) throw SpecError("knn imputation: k must be positive");
  const std::size_t m = xm.rows(), n = xm.cols();
  const Matrix colmean = impute_colmean(xm);
  Matrix out = colmean;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < m; ++i) {
    bool any_missing = false;
    for (std::size_t j = 0; j < n; ++j) any_missing |= xm.mask(i, j) == 0.0;
    if (!any_missing) continue;
    std::vector<double> dist(m, INFINITY);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == i) continue;
      double d = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (xm.mask(i, j) != 0.0 && xm.mask(r, j) != 0.0) {
          const double e = xm.values(i, j) - xm.values(r, j);
          d += e * e;
          c += 1.0;
        }
      }
      if (c > 0.0) dist[r] = d / c;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (xm.mask(i, j) != 0.0) continue;
      cand.clear();
      for (std::size_t r = 0; r < m; ++r)
        if (xm.mask(r, j) != 0.0 && std::isfinite(dist[r])) cand.emplace_back(dist[r], r);
      if (cand.empty()) continue;
      const std::size_t take = std::min(k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take),
                        cand.end());
      double s = 0.0;
      for (std::size_t q = 0; q < take; ++q) s += xm.values(cand[q].second, j);
      out(i, j) = s / static_cast<double>(take);
    }
  }
  return out;
}

// Single-discriminator adversarial imputer in the GAIN style: G maps (noise-filled row,
// mask row) directly to an estimate row; D_II with hints judges cells; G also fits the
// observed cells by squared error weighted by reconstruction_weight.
struct GainConfig {
  double hint_rate = 0.9;
  double reconstruction_weight = 100.0;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  std::size_t iters = 5000;
  std::size_t batch_rows = 0;  // 0: min(m, 128)
  std::uint64_t seed = 0;

  static GainConfig from(const gan::BlockEchoConfig& c) {
    GainConfig g;
    g.lr_g = c.lr_g;
    g.lr_d = c.lr_d;
    g.iters = c.iters;
    g.batch_rows = c.batch_rows;
    g.seed = c.seed;
    return g;
  }
};

// xm must be normalized to [0, 1] on observed cells.
inline Matrix impute_gain(const masking::MaskedMatrix& xm, const GainConfig& cfg) {
  using numkern::Activation;
  const std::size_t m = xm.rows(), n = xm.cols();
  const std::size_t batch = cfg.batch_rows == 0 ? std::min<std::size_t>(m, 128) : cfg.batch_rows;
  if (batch > m) throw SpecError("gan_only: batch_rows exceeds row count");
  numkern::Rng init(cfg.seed, numkern::Stream::kInit, 0x6761696e);
  numkern::DenseNet g({2 * n, n, n}, {Activation::relu, Activation::sigmoid}, init);
  numkern::DenseNet d({2 * n, n, n}, {Activation::relu, Activation::sigmoid}, init);
  numkern::OptimState opt_g(g.parameters(), g.parameter_names("G"), {cfg.lr_g});
  numkern::OptimState opt_d(d.parameters(), d.parameter_names("D"), {cfg.lr_d});
  numkern::Rng batch_rng(cfg.seed, numkern::Stream::kBatch, 0x6761);
  numkern::Rng noise_rng(cfg.seed, numkern::Stream::kNoise, 0x6761);
  numkern::Rng hint_rng(cfg.seed, numkern::Stream::kHint, 0x6761);

  auto noisy_input = [&](const Matrix& x, const Matrix& mk, numkern::Rng& rng) {
    Matrix in = x;
    for (std::size_t q = 0; q < in.size(); ++q)
      if (mk[q] == 0.0) in[q] = rng.uniform(0.0, gan::kNoiseScale);
    return numkern::hconcat({&in, &mk});
  };

  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const auto idx = gan::sample_rows(m, batch, batch_rng);
    const Matrix x = numkern::gather_rows(xm.values, idx);
    const Matrix mk = numkern::gather_rows(xm.mask, idx);
    const Matrix hint = gan::build_hint(mk, cfg.hint_rate, hint_rng);
    const auto gcache = g.forward(noisy_input(x, mk, noise_rng));
    const Matrix xbar = gan::assemble(x, mk, gcache.output);

    {
      const auto dc = d.forward(numkern::hconcat({&xbar, &hint}));
      auto grads = d.backward(dc, gan::discriminator_output_grad(dc.output, mk));
      opt_d.step(d.parameters(), std::move(grads).flatten());
    }

    const auto dc = d.forward(numkern::hconcat({&xbar, &hint}));
    const double missing = std::max(1.0, static_cast<double>(mk.size()) - numkern::sum(mk));
    const double observed = std::max(1.0, numkern::sum(mk));
    Matrix dd(dc.output.rows(), dc.output.cols());
    for (std::size_t q = 0; q < dd.size(); ++q) {
      const double p = dc.output[q];
      if (mk[q] == 0.0 && p > gan::kLogClamp && p < 1.0 - gan::kLogClamp) {
        dd[q] = -1.0 / (p * missing);
      }
    }
    const auto dg = d.backward(dc, dd);
    Matrix dxhat(x.rows(), n);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (mk(i, j) == 0.0) {
          dxhat(i, j) = dg.input(i, j);
        } else {
          dxhat(i, j) =
              cfg.reconstruction_weight * 2.0 * (gcache.output(i, j) - x(i, j)) / observed;
        }
      }
    }
    auto ggrads = g.backward(gcache, dxhat);
    opt_g.step(g.parameters(), std::move(ggrads).flatten());
  }

  numkern::Rng final_rng(cfg.seed, numkern::Stream::kNoise, 0x6761f);
  return g.predict(noisy_input(xm.values, xm.mask, final_rng));
}

}  // namespace blockecho::baselines
