#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/io.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/mf.hpp"
#include "blockecho/numkern/adam.hpp"
#include "blockecho/numkern/dense_net.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"
#include "blockecho/numkern/serialize.hpp"
#include "json.hpp"

// The BlockEcho trainer: a generator G maps (observed row, mask row, noise) to a row
// embedding U; the matrix completion layer (MCL) turns U*V into estimates; D_I tells
// generator rows from pretrained MF rows and D_II tells observed cells from imputed ones.
namespace blockecho::gan {

using numkern::Activation;
using numkern::DenseNet;
using numkern::Matrix;

enum class LossMode { kl, mse };

inline const char* to_string(LossMode m) { return m == LossMode::kl ? "kl" : "mse"; }

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "kl") return LossMode::kl;
  if (s == "mse") return LossMode::mse;
  throw SpecError("unknown loss_mode '" + s + "' (expected kl|mse)");
}

// Clamp applied inside every log term.
inline constexpr double kLogClamp = 1e-7;
// Noise entries are uniform in [0, kNoiseScale].
inline constexpr double kNoiseScale = 0.01;

struct BlockEchoConfig {
  std::size_t h = 0;                // 0: min(16, ceil(min(m,n)/4))
  // Both objective terms are sums over cells, so alpha sits close to 1 to keep the
  // adversarial sums from swamping the KL term.
  double alpha = 0.999;
  double hint_rate = 0.0;  // block masks leak through revealed hints
  std::vector<std::size_t> g_layers;   // empty: {2n+h, n, h}
  std::vector<std::size_t> d1_layers;  // empty: {h, h, 1}
  std::vector<std::size_t> d2_layers;  // empty: {2n, n, n}
  std::vector<std::size_t> mcl_layers = {1, 8, 1};
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  std::size_t iters = 5000;
  std::size_t batch_rows = 0;  // 0: min(m, 128)
  std::size_t d_steps_per_g = 1;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::kl;
  bool use_d1 = true;
  bool use_d2 = true;
  bool mcl_identity = false;  // ablation switch: X_hat = U*V
  bool warm_start_v = true;   // V starts from the pretrained V_p
  std::size_t pretrain_iters = 2000;
  double pretrain_tol = 1e-6;

  static std::size_t default_rank(std::size_t m, std::size_t n) {
    const std::size_t s = std::min(m, n);
    return std::max<std::size_t>(1, std::min<std::size_t>(16, (s + 3) / 4));
  }

  // Fills every defaulted field for an m x n problem and checks consistency.
  BlockEchoConfig resolved(std::size_t m, std::size_t n) const {
    BlockEchoConfig c = *this;
    if (c.h == 0) c.h = default_rank(m, n);
    if (c.batch_rows == 0) c.batch_rows = std::min<std::size_t>(m, 128);
    if (c.g_layers.empty()) c.g_layers = {2 * n + c.h, n, c.h};
    if (c.d1_layers.empty()) c.d1_layers = {c.h, c.h, 1};
    if (c.d2_layers.empty()) c.d2_layers = {2 * n, n, n};
    c.validate(m, n);
    return c;
  }

  void validate(std::size_t m, std::size_t n) const {
    auto fail = [](const std::string& what) { throw SpecError("BlockEchoConfig: " + what); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0,1]");
    if (!(hint_rate >= 0.0 && hint_rate <= 1.0)) fail("hint_rate must lie in [0,1]");
    if (h == 0) fail("h must be positive");
    if (batch_rows == 0 || batch_rows > m) {
      fail("batch_rows must be in [1, m=" + std::to_string(m) + "]");
    }
    if (d_steps_per_g == 0) fail("d_steps_per_g must be positive");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) fail("learning rates must be positive");
    auto check = [&](const std::vector<std::size_t>& l, std::size_t in, std::size_t out,
                     const char* name) {
      if (l.size() < 2 || l.front() != in || l.back() != out ||
          std::find(l.begin(), l.end(), 0) != l.end()) {
        fail(std::string(name) + " must run from " + std::to_string(in) + " to " +
             std::to_string(out) + " with nonzero widths");
      }
    };
    check(g_layers, 2 * n + h, h, "g_layers");
    check(d1_layers, h, 1, "d1_layers");
    check(d2_layers, 2 * n, n, "d2_layers");
    check(mcl_layers, 1, 1, "mcl_layers");
  }

  nlohmann::json to_json() const {
    return {{"h", h},
            {"alpha", alpha},
            {"hint_rate", hint_rate},
            {"g_layers", g_layers},
            {"d1_layers", d1_layers},
            {"d2_layers", d2_layers},
            {"mcl_layers", mcl_layers},
            {"lr_g", lr_g},
            {"lr_d", lr_d},
            {"iters", iters},
            {"batch_rows", batch_rows},
            {"d_steps_per_g", d_steps_per_g},
            {"seed", seed},
            {"loss_mode", to_string(loss_mode)},
            {"use_d1", use_d1},
            {"use_d2", use_d2},
            {"mcl_identity", mcl_identity},
            {"warm_start_v", warm_start_v},
            {"pretrain_iters", pretrain_iters},
            {"pretrain_tol", pretrain_tol}};
  }

  // Keys absent from j keep their current value; unknown keys are rejected.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SpecError("config JSON must be an object");
    try {
      for (const auto& [key, val] : j.items()) {
        if (key == "h") h = val.get<std::size_t>();
        else if (key == "alpha") alpha = val.get<double>();
        else if (key == "hint_rate") hint_rate = val.get<double>();
        else if (key == "g_layers") g_layers = val.get<std::vector<std::size_t>>();
        else if (key == "d1_layers") d1_layers = val.get<std::vector<std::size_t>>();
        else if (key == "d2_layers") d2_layers = val.get<std::vector<std::size_t>>();
        else if (key == "mcl_layers") mcl_layers = val.get<std::vector<std::size_t>>();
        else if (key == "lr_g") lr_g = val.get<double>();
        else if (key == "lr_d") lr_d = val.get<double>();
        else if (key == "iters") iters = val.get<std::size_t>();
        else if (key == "batch_rows") batch_rows = val.get<std::size_t>();
        else if (key == "d_steps_per_g") d_steps_per_g = val.get<std::size_t>();
        else if (key == "seed") seed = val.get<std::uint64_t>();
        else if (key == "loss_mode") loss_mode = loss_mode_from_string(val.get<std::string>());
        else if (key == "use_d1") use_d1 = val.get<bool>();
        else if (key == "use_d2") use_d2 = val.get<bool>();
        else if (key == "mcl_identity") mcl_identity = val.get<bool>();
        else if (key == "warm_start_v") warm_start_v = val.get<bool>();
        else if (key == "pretrain_iters") pretrain_iters = val.get<std::size_t>();
        else if (key == "pretrain_tol") pretrain_tol = val.get<double>();
        else throw SpecError("unknown config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw SpecError(std::string("config JSON: ") + e.what());
    }
  }

  // Whether the discriminators take part at all.
  bool adversarial() const { return alpha < 1.0 && (use_d1 || use_d2); }
  bool d1_active() const { return alpha < 1.0 && use_d1; }
  bool d2_active() const { return alpha < 1.0 && use_d2; }
  bool mf_active() const { return alpha > 0.0; }
};

struct CallCounters {
  std::size_t mf_term = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
};

struct EchoModel {
  BlockEchoConfig config;  // resolved
  std::size_t cols = 0;
  DenseNet generator;
  DenseNet mcl_net;
  Matrix v;  // h x n, trained by backprop
  DenseNet d1;
  DenseNet d2;
  numkern::OptimState opt_g;
  numkern::OptimState opt_d1;
  numkern::OptimState opt_d2;
  mutable CallCounters counters;

  // Generator-side trainables in a fixed order: G params, MCL params (unless the MCL is
  // the identity), V.
  std::vector<Matrix*> generator_side_params() {
    std::vector<Matrix*> out = generator.parameters();
    if (!config.mcl_identity) {
      auto mp = mcl_net.parameters();
      out.insert(out.end(), mp.begin(), mp.end());
    }
    out.push_back(&v);
    return out;
  }

  std::vector<std::string> generator_side_names() const {
    std::vector<std::string> out = generator.parameter_names("G");
    if (!config.mcl_identity) {
      auto mn = mcl_net.parameter_names("MCL");
      out.insert(out.end(), mn.begin(), mn.end());
    }
    out.push_back("V");
    return out;
  }
};

inline std::vector<Activation> hidden_then(std::size_t layers, Activation last) {
  std::vector<Activation> acts(layers - 1, Activation::relu);
  acts.push_back(last);
  return acts;
}

// cfg must already be resolved for an m x n problem; v_init (h x n) seeds V.
inline EchoModel make_model(const BlockEchoConfig& cfg, std::size_t n, const Matrix& v_init) {
  if (v_init.rows() != cfg.h || v_init.cols() != n) {
    throw ShapeError("make_model: initial V " + v_init.shape() + " expected " +
                     Matrix::shape_string(cfg.h, n));
  }
  numkern::Rng rng(cfg.seed, numkern::Stream::kInit, 0x67616e);
  EchoModel model;
  model.config = cfg;
  model.cols = n;
  model.generator =
      DenseNet(cfg.g_layers, hidden_then(cfg.g_layers.size() - 1, Activation::sigmoid), rng);
  model.mcl_net =
      DenseNet(cfg.mcl_layers, hidden_then(cfg.mcl_layers.size() - 1, Activation::sigmoid), rng);
  model.d1 = DenseNet(cfg.d1_layers, hidden_then(cfg.d1_layers.size() - 1, Activation::sigmoid), rng);
  model.d2 = DenseNet(cfg.d2_layers, hidden_then(cfg.d2_layers.size() - 1, Activation::sigmoid), rng);
  model.v = v_init;
  model.opt_g = numkern::OptimState(model.generator_side_params(), model.generator_side_names(),
                                    {cfg.lr_g});
  model.opt_d1 = numkern::OptimState(model.d1.parameters(), model.d1.parameter_names("D1"),
                                     {cfg.lr_d});
  model.opt_d2 = numkern::OptimState(model.d2.parameters(), model.d2.parameter_names("D2"),
                                     {cfg.lr_d});
  return model;
}

// H = B*M + 0.5*(1-B) with P(B_ij = 1) = hint_rate.
inline Matrix build_hint(const Matrix& mask, double hint_rate, numkern::Rng& rng) {
  masking::validate_mask(mask);
  Matrix hint(mask.rows(), mask.cols());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    hint[k] = rng.bernoulli(hint_rate) ? mask[k] : 0.5;
  }
  return hint;
}

inline Matrix noise_matrix(std::size_t rows, std::size_t h, numkern::Rng& rng) {
  return rng.uniform_matrix(rows, h, 0.0, kNoiseScale);
}

// G([x0 | mask | z]); the cache's output is U (batch x h).
inline numkern::ForwardCache generator_forward(const EchoModel& model, const Matrix& x0,
                                               const Matrix& mask, const Matrix& z) {
  numkern::require_same_shape(x0, mask, "generator_forward");
  if (x0.cols() != model.cols || z.rows() != x0.rows() || z.cols() != model.config.h) {
    throw ShapeError("generator_forward: x0 " + x0.shape() + ", z " + z.shape() +
                     " inconsistent with n=" + std::to_string(model.cols) +
                     ", h=" + std::to_string(model.config.h));
  }
  return model.generator.forward(numkern::hconcat({&x0, &mask, &z}));
}

struct MclPass {
  Matrix product;  // U*V
  std::optional<numkern::ForwardCache> cache;
  Matrix xhat;
};

// X_hat = f(U*V), f a scalar-to-scalar MLP shared by every entry.
inline MclPass mcl_forward(const EchoModel& model, const Matrix& u) {
  if (u.cols() != model.v.rows()) {
    throw ShapeError("mcl_forward: U " + u.shape() + " incompatible with V " + model.v.shape());
  }
  MclPass pass;
  pass.product = numkern::matmul(u, model.v);
  if (model.config.mcl_identity) {
    pass.xhat = pass.product;
    return pass;
  }
  pass.cache = model.mcl_net.forward(numkern::as_column(pass.product));
  pass.xhat = numkern::reshape(pass.cache->output, u.rows(), model.v.cols());
  return pass;
}

struct MclGradients {
  Matrix du;
  Matrix dv;
  std::vector<Matrix> net;  // empty when the MCL is the identity
};

inline MclGradients mcl_backward(const EchoModel& model, const MclPass& pass, const Matrix& u,
                                 const Matrix& dxhat) {
  numkern::require_same_shape(pass.xhat, dxhat, "mcl_backward");
  MclGradients g;
  Matrix dprod;
  if (pass.cache) {
    auto ng = model.mcl_net.backward(*pass.cache, numkern::as_column(dxhat));
    dprod = numkern::reshape(ng.input, dxhat.rows(), dxhat.cols());
    g.net = std::move(ng).flatten();
  } else {
    dprod = dxhat;
  }
  g.du = numkern::matmul_nt(dprod, model.v);
  g.dv = numkern::matmul_tn(u, dprod);
  return g;
}

// X_bar = X_tilde * M + X_hat * (1 - M); observed cells are copied, not recomputed.
inline Matrix assemble(const Matrix& values, const Matrix& mask, const Matrix& xhat) {
  numkern::require_same_shape(values, mask, "assemble");
  numkern::require_same_shape(values, xhat, "assemble");
  Matrix out = xhat;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (mask[k] != 0.0) out[k] = values[k];
  }
  return out;
}

inline Matrix assemble(const masking::MaskedMatrix& xm, const Matrix& xhat) {
  return assemble(xm.values, xm.mask, xhat);
}

// Row i comes from u_p when y_i = 1, from u otherwise.
inline Matrix mix_rows(const Matrix& u_p, const Matrix& u, const Matrix& y) {
  numkern::require_same_shape(u_p, u, "mix_rows");
  if (y.rows() != u.rows() || y.cols() != 1) {
    throw ShapeError("mix_rows: y " + y.shape() + " must be " + Matrix::shape_string(u.rows(), 1));
  }
  Matrix out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    if (y(i, 0) != 0.0 && y(i, 0) != 1.0) {
      throw ValidationError("mix_rows: y entry " + std::to_string(i) + " is not binary");
    }
    const Matrix& src = y(i, 0) == 1.0 ? u_p : u;
    std::copy(src.row(i).begin(), src.row(i).end(), out.row(i).begin());
  }
  return out;
}

inline double clamp_prob(double p) { return std::clamp(p, kLogClamp, 1.0 - kLogClamp); }

// sum_i y_i log D(u_i) + (1 - y_i) log(1 - D(u_i)); D_I ascends it.
inline double d1_loss(const Matrix& d1_out, const Matrix& y) {
  numkern::require_same_shape(d1_out, y, "d1_loss");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double p = clamp_prob(d1_out[k]);
    s += y[k] * std::log(p) + (1.0 - y[k]) * std::log(1.0 - p);
  }
  return s;
}

// sum_ij M log D + (1 - M) log(1 - D); D_II ascends it.
inline double d2_loss(const Matrix& d2_out, const Matrix& mask) {
  numkern::require_same_shape(d2_out, mask, "d2_loss");
  double s = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const double p = clamp_prob(d2_out[k]);
    s += mask[k] * std::log(p) + (1.0 - mask[k]) * std::log(1.0 - p);
  }
  return s;
}

// Cells whose hint withholds the mask (H = 0.5). Only these are scored during training:
// on revealed cells D_II reads the answer off the hint, and their gradient carries no
// information about the imputed values.
inline Matrix withheld_cells(const Matrix& hint) {
  Matrix w(hint.rows(), hint.cols());
  for (std::size_t k = 0; k < hint.size(); ++k) w[k] = hint[k] == 0.5 ? 1.0 : 0.0;
  return w;
}

// d2_loss restricted to cells with nonzero weight.
inline double d2_loss(const Matrix& d2_out, const Matrix& mask, const Matrix& weights) {
  numkern::require_same_shape(d2_out, weights, "d2_loss weights");
  numkern::require_same_shape(d2_out, mask, "d2_loss");
  double s = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const double p = clamp_prob(d2_out[k]);
    s += weights[k] * (mask[k] * std::log(p) + (1.0 - mask[k]) * std::log(1.0 - p));
  }
  return s;
}

// d(-objective)/d(out) for either discriminator objective, label = y or M. Zero where
// the clamp is active.
inline Matrix discriminator_output_grad(const Matrix& out, const Matrix& label) {
  Matrix g(out.rows(), out.cols());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double p = out[k];
    if (p <= kLogClamp || p >= 1.0 - kLogClamp) continue;
    g[k] = -(label[k] / p - (1.0 - label[k]) / (1.0 - p));
  }
  return g;
}

struct LossComponents {
  double adv_d1 = 0.0;   // -sum over generator rows of log D_I
  double adv_d2 = 0.0;   // -sum over missing, hint-withheld cells of log D_II
  double mf_term = 0.0;  // KL (or squared error) over observed cells
  double total = 0.0;
};

// (1 - alpha) * adversarial + alpha * mf_term.
inline double combined_g_loss(double adversarial, double mf_term, double alpha) {
  return (1.0 - alpha) * adversarial + alpha * mf_term;
}

// One minibatch worth of generator inputs.
struct GeneratorBatch {
  Matrix x;      // normalized observed values, 0 at missing cells
  Matrix mask;
  Matrix z;      // noise, batch x h
  Matrix hint;   // batch x n
  Matrix y;      // batch x 1 row labels for D_I
  Matrix u_pre;  // pretrained U_p rows, batch x h
};

struct GeneratorObjective {
  LossComponents loss;
  std::vector<Matrix> grads;  // ordered like EchoModel::generator_side_params()
  Matrix xhat;
};

namespace detail {

inline double mf_term_and_grad(const Matrix& x, const Matrix& mask, const Matrix& xhat,
                               LossMode mode, Matrix* grad) {
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (mask[k] == 0.0) continue;
    const double a = x[k];
    if (mode == LossMode::kl) {
      const double b = std::max(xhat[k], kLogClamp);
      total += (a > 0.0 ? a * std::log(a / b) : 0.0) - a + b;
      if (grad && xhat[k] > kLogClamp) (*grad)[k] = 1.0 - a / xhat[k];
    } else {
      const double e = xhat[k] - a;
      total += e * e;
      if (grad) (*grad)[k] = 2.0 * e;
    }
  }
  return total;
}

}  // namespace detail

// Generator-side objective (1 - alpha)(adv_D1 + adv_D2) + alpha * mf_term on one batch,
// with the non-saturating adversarial terms, plus its gradients when requested.
inline GeneratorObjective generator_objective(const EchoModel& model, const GeneratorBatch& b,
                                              bool want_grads) {
  const BlockEchoConfig& cfg = model.config;
  const double alpha = cfg.alpha;
  const auto gcache = generator_forward(model, b.x, b.mask, b.z);
  const Matrix& u = gcache.output;
  MclPass mcl = mcl_forward(model, u);

  GeneratorObjective obj;
  Matrix dxhat(u.rows(), model.cols);
  Matrix du_adv(u.rows(), u.cols());

  if (cfg.mf_active()) {
    ++model.counters.mf_term;
    Matrix g(u.rows(), model.cols);
    obj.loss.mf_term = detail::mf_term_and_grad(b.x, b.mask, mcl.xhat, cfg.loss_mode, &g);
    numkern::axpy(dxhat, alpha, g);
  }
  if (cfg.d2_active()) {
    ++model.counters.d2;
    const Matrix xbar = assemble(b.x, b.mask, mcl.xhat);
    const auto dcache = model.d2.forward(numkern::hconcat({&xbar, &b.hint}));
    const Matrix& d = dcache.output;
    Matrix dd(d.rows(), d.cols());
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (b.mask[k] != 0.0 || b.hint[k] != 0.5) continue;
      obj.loss.adv_d2 -= std::log(clamp_prob(d[k]));
      if (d[k] > kLogClamp && d[k] < 1.0 - kLogClamp) dd[k] = -1.0 / d[k];
    }
    if (want_grads) {
      const auto dg = model.d2.backward(dcache, dd);
      for (std::size_t i = 0; i < dxhat.rows(); ++i)
        for (std::size_t j = 0; j < model.cols; ++j)
          if (b.mask(i, j) == 0.0) dxhat(i, j) += (1.0 - alpha) * dg.input(i, j);
    }
  }
  if (cfg.d1_active()) {
    ++model.counters.d1;
    const Matrix ud = mix_rows(b.u_pre, u, b.y);
    const auto dcache = model.d1.forward(ud);
    const Matrix& d = dcache.output;
    Matrix dd(d.rows(), 1);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (b.y(i, 0) != 0.0) continue;
      obj.loss.adv_d1 -= std::log(clamp_prob(d(i, 0)));
      if (d(i, 0) > kLogClamp && d(i, 0) < 1.0 - kLogClamp) dd(i, 0) = -1.0 / d(i, 0);
    }
    if (want_grads) {
      const auto dg = model.d1.backward(dcache, dd);
      for (std::size_t i = 0; i < u.rows(); ++i)
        if (b.y(i, 0) == 0.0)
          for (std::size_t a = 0; a < u.cols(); ++a) du_adv(i, a) = (1.0 - alpha) * dg.input(i, a);
    }
  }
  obj.loss.total =
      combined_g_loss(obj.loss.adv_d1 + obj.loss.adv_d2, obj.loss.mf_term, alpha);

  if (want_grads) {
    MclGradients mg = mcl_backward(model, mcl, u, dxhat);
    numkern::axpy(mg.du, 1.0, du_adv);
    obj.grads = model.generator.backward(gcache, mg.du).flatten();
    for (auto& g : mg.net) obj.grads.push_back(std::move(g));
    obj.grads.push_back(std::move(mg.dv));
  }
  obj.xhat = std::move(mcl.xhat);
  return obj;
}

// One ascent step of D_II on (X_bar, H), scored on hint-withheld cells; returns the
// objective value before the step.
inline double d2_step(EchoModel& model, const Matrix& xbar, const Matrix& hint,
                      const Matrix& mask) {
  ++model.counters.d2;
  const auto cache = model.d2.forward(numkern::hconcat({&xbar, &hint}));
  const Matrix weights = withheld_cells(hint);
  const double value = d2_loss(cache.output, mask, weights);
  auto grads =
      model.d2.backward(cache, numkern::hadamard(discriminator_output_grad(cache.output, mask), weights));
  model.opt_d2.step(model.d2.parameters(), std::move(grads).flatten());
  return value;
}

// One ascent step of D_I on the mixed rows; returns the objective value before the step.
inline double d1_step(EchoModel& model, const Matrix& u_mixed, const Matrix& y) {
  ++model.counters.d1;
  const auto cache = model.d1.forward(u_mixed);
  const double value = d1_loss(cache.output, y);
  auto grads = model.d1.backward(cache, discriminator_output_grad(cache.output, y));
  model.opt_d1.step(model.d1.parameters(), std::move(grads).flatten());
  return value;
}

struct LossRecord {
  std::size_t iteration = 0;
  double d1 = std::numeric_limits<double>::quiet_NaN();  // NaN: not evaluated
  double d2 = std::numeric_limits<double>::quiet_NaN();
  double mf_term = std::numeric_limits<double>::quiet_NaN();
  double g_total = 0.0;
};

struct ImputationResult {
  Matrix imputed;  // X_bar in the (normalized) training space
  Matrix xhat;     // final MCL output for every cell
  std::vector<LossRecord> losses;
  nlohmann::json config;
  double wall_seconds = 0.0;
};

struct TrainOutput {
  EchoModel model;
  ImputationResult result;
};

inline std::vector<std::size_t> sample_rows(std::size_t m, std::size_t count, numkern::Rng& rng) {
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(m - i)]);
  idx.resize(count);
  return idx;
}

// Full-matrix forward pass with a noise draw from the seed's final-pass stream.
inline Matrix impute_full(const EchoModel& model, const masking::MaskedMatrix& xm) {
  numkern::Rng rng(model.config.seed, numkern::Stream::kNoise, 0xf17a1);
  const Matrix z = noise_matrix(xm.rows(), model.config.h, rng);
  const auto cache = generator_forward(model, xm.values, xm.mask, z);
  return mcl_forward(model, cache.output).xhat;
}

namespace detail {

inline std::string describe_last_finite(const std::vector<LossRecord>& losses) {
  if (losses.empty()) return "none";
  const auto& r = losses.back();
  std::ostringstream ss;
  ss << "iteration " << r.iteration << ": d1=" << r.d1 << " d2=" << r.d2
     << " mf_term=" << r.mf_term << " g_total=" << r.g_total;
  return ss.str();
}

inline void require_finite(double v, const char* what, std::size_t it,
                           const std::vector<LossRecord>& losses) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("non-finite ") + what + " at iteration " +
                        std::to_string(it) + "; last finite losses: " +
                        describe_last_finite(losses));
  }
}

}  // namespace detail

// Alternating training. xm must be normalized to (0, 1] on observed cells with 0 at
// missing cells; pre holds the pretrained factors for every row.
inline TrainOutput train(const masking::MaskedMatrix& xm, const mf::FactorPair& pre,
                         const BlockEchoConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = xm.rows(), n = xm.cols();
  masking::validate_mask(xm.mask);
  const BlockEchoConfig cfg = config.resolved(m, n);
  pre.validate();
  if (pre.u.rows() != m || pre.v.cols() != n || pre.rank() != cfg.h) {
    throw ShapeError("train: pretrained factors " + pre.u.shape() + "x" + pre.v.shape() +
                     " do not match data " + xm.values.shape() + " with h=" +
                     std::to_string(cfg.h));
  }

  Matrix v_init = pre.v;
  if (!cfg.warm_start_v) {
    numkern::Rng vr(cfg.seed, numkern::Stream::kInit, 0x76);
    v_init = vr.uniform_matrix(cfg.h, n, 0.1, 1.1);
  }
  TrainOutput out{make_model(cfg, n, v_init), {}};
  EchoModel& model = out.model;

  numkern::Rng batch_rng(cfg.seed, numkern::Stream::kBatch);
  numkern::Rng noise_rng(cfg.seed, numkern::Stream::kNoise);
  numkern::Rng hint_rng(cfg.seed, numkern::Stream::kHint);
  numkern::Rng label_rng(cfg.seed, numkern::Stream::kLabels);

  auto draw_batch = [&]() {
    const auto idx = sample_rows(m, cfg.batch_rows, batch_rng);
    GeneratorBatch b;
    b.x = numkern::gather_rows(xm.values, idx);
    b.mask = numkern::gather_rows(xm.mask, idx);
    b.z = noise_matrix(idx.size(), cfg.h, noise_rng);
    b.hint = cfg.d2_active() ? build_hint(b.mask, cfg.hint_rate, hint_rng) : Matrix();
    b.y = cfg.d1_active() ? label_rng.bernoulli_matrix(idx.size(), 1, 0.5) : Matrix();
    b.u_pre = numkern::gather_rows(pre.u, idx);
    return b;
  };

  auto& losses = out.result.losses;
  losses.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    LossRecord rec;
    rec.iteration = it;
    GeneratorBatch batch;
    for (std::size_t s = 0; s < cfg.d_steps_per_g; ++s) {
      batch = draw_batch();
      if (!cfg.adversarial()) break;
      const Matrix u = generator_forward(model, batch.x, batch.mask, batch.z).output;
      if (cfg.d2_active()) {
        const Matrix xbar = assemble(batch.x, batch.mask, mcl_forward(model, u).xhat);
        rec.d2 = d2_step(model, xbar, batch.hint, batch.mask);
        detail::require_finite(rec.d2, "D_II objective", it, losses);
      }
      if (cfg.d1_active()) {
        rec.d1 = d1_step(model, mix_rows(batch.u_pre, u, batch.y), batch.y);
        detail::require_finite(rec.d1, "D_I objective", it, losses);
      }
    }
    GeneratorObjective obj = generator_objective(model, batch, true);
    if (cfg.mf_active()) rec.mf_term = obj.loss.mf_term;
    rec.g_total = obj.loss.total;
    detail::require_finite(rec.g_total, "generator loss", it, losses);
    try {
      model.opt_g.step(model.generator_side_params(), obj.grads);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(it) +
                          "; last finite losses: " + detail::describe_last_finite(losses));
    }
    losses.push_back(rec);
  }

  out.result.xhat = impute_full(model, xm);
  out.result.imputed = assemble(xm, out.result.xhat);
  out.result.config = cfg.to_json();
  out.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline std::string loss_trace_csv(const std::vector<LossRecord>& losses) {
  std::string s = "iteration,d1,d2,mf_term,g_total\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : io::format_number(v); };
  for (const auto& r : losses) {
    s += std::to_string(r.iteration) + "," + cell(r.d1) + "," + cell(r.d2) + "," +
         cell(r.mf_term) + "," + cell(r.g_total) + "\n";
  }
  return s;
}

inline nlohmann::json checkpoint_json(const EchoModel& model) {
  return {{"config", model.config.to_json()},
          {"generator", numkern::net_to_json(model.generator)},
          {"mcl", numkern::net_to_json(model.mcl_net)},
          {"V", numkern::matrix_to_json(model.v)},
          {"d1", numkern::net_to_json(model.d1)},
          {"d2", numkern::net_to_json(model.d2)}};
}

}  // namespace blockecho::gan
