#pragma once

// Small shared setups for the unit and acceptance binaries.

#include <cstdint>

#include "blockecho/gan.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/mf.hpp"
#include "blockecho/numkern/gradcheck.hpp"

namespace fixture {

using blockecho::numkern::Matrix;

struct GanInstance {
  blockecho::gan::EchoModel model;
  blockecho::gan::GeneratorBatch batch;
};

// A 4x4 problem with half the cells missing and every term of the generator objective
// switched on. Values lie in [0.1, 1].
inline GanInstance gan_instance(std::uint64_t seed, double alpha = 0.5) {
  namespace be = blockecho;
  be::numkern::Rng rng(seed, be::numkern::Stream::kData, 0xfd);
  const std::size_t m = 4, n = 4;
  be::gan::BlockEchoConfig cfg;
  cfg.alpha = alpha;
  cfg.hint_rate = 0.0;
  cfg.seed = seed;
  cfg = cfg.resolved(m, n);

  const Matrix mask = be::masking::gen_scattered(m, n, 0.5, seed).mask;
  const auto xm = be::masking::apply_mask(rng.uniform_matrix(m, n, 0.1, 1.0), mask);
  const Matrix v0 = rng.uniform_matrix(cfg.h, n, 0.2, 1.2);

  GanInstance inst{be::gan::make_model(cfg, n, v0), {}};
  auto& b = inst.batch;
  b.x = xm.values;
  b.mask = xm.mask;
  b.z = be::gan::noise_matrix(m, cfg.h, rng);
  b.hint = be::gan::build_hint(b.mask, cfg.hint_rate, rng);
  b.y = Matrix{{0}, {1}, {0}, {1}};
  b.u_pre = rng.uniform_matrix(m, cfg.h, 0.1, 1.0);
  return inst;
}

// Central-difference check of the full generator objective against its analytic
// gradient, over every generator-side parameter block.
inline blockecho::numkern::GradCheckReport check_generator(GanInstance& inst) {
  namespace be = blockecho;
  auto& model = inst.model;
  const auto analytic = be::gan::generator_objective(model, inst.batch, true).grads;
  auto loss = [&] { return be::gan::generator_objective(model, inst.batch, false).loss.total; };
  return be::numkern::check_gradients(loss, model.generator_side_params(), analytic, 1e-4);
}

}  // namespace fixture
