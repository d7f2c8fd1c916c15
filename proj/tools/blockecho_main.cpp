// blockecho command-line front end.
//
//   blockecho synth    --kind periodic_traffic --out data.csv
//   blockecho mask     --input data.csv --pattern uniblock --rate 0.4 --seed 1 --out-dir m
//   blockecho impute   --input data.csv --mask m/mask.csv --method blockecho --out-dir run
//   blockecho sweep    --input data.csv --rates 0.2:0.8:0.1 --methods mf,mean --plot
//   blockecho ablate   --input data.csv --rate 0.4 --seeds 0:4
//   blockecho forecast --input data.csv --imputed be=run/imputed.csv
//
// Exit codes: 0 success, 2 bad input or configuration, 3 runtime or training failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blockecho/commands.hpp"

namespace {

using namespace blockecho;

struct ModelFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::optional<double> alpha;
  std::optional<double> hint_rate;
  std::optional<std::size_t> h;
  std::optional<std::size_t> knn_k;
  bool global_norm = false;

  void attach(CLI::App* app, bool with_seed) {
    app->add_option("--config", config_path, "JSON file with BlockEchoConfig fields");
    if (with_seed) app->add_option("--seed", seed, "model seed (overrides the config file)");
    app->add_option("--iters", iters, "training iterations (overrides the config file)");
    app->add_option("--alpha", alpha, "MF-term weight in [0,1]");
    app->add_option("--hint-rate", hint_rate, "hint rate in [0,1]");
    app->add_option("--rank", h, "embedding rank h (0 = automatic)");
    app->add_option("--knn-k", knn_k, "neighbours for the knn baseline");
    app->add_flag("--global-norm", global_norm, "one min-max range for all columns");
  }

  pipeline::MethodOptions resolve() const {
    pipeline::MethodOptions opt;
    if (!config_path.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(io::read_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config " + config_path + ": " + e.what());
      }
      opt.config.merge_json(j);
    }
    if (seed) opt.config.seed = *seed;
    if (iters) opt.config.iters = *iters;
    if (alpha) opt.config.alpha = *alpha;
    if (hint_rate) opt.config.hint_rate = *hint_rate;
    if (h) opt.config.h = *h;
    if (knn_k) opt.knn_k = *knn_k;
    opt.norm.per_column = !global_norm;
    return opt;
  }
};

struct CsvFlags {
  bool row_labels = false;
  void attach(CLI::App* app) {
    app->add_flag("--row-labels", row_labels, "first CSV column holds row labels");
  }
  data::CsvOptions options() const { return {data::HeaderMode::automatic, row_labels, ','}; }
};

template <class T, class F>
std::vector<T> parse_names(const std::string& list, F from_string) {
  std::vector<T> out;
  for (const auto& s : cli::split_list(list)) out.push_back(from_string(s));
  if (out.empty()) throw UsageError("empty list: '" + list + "'");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"BlockEcho matrix completion toolkit"};
  app.set_version_flag("--version", std::string(cli::kVersion));
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus as CSV");
  data::SyntheticSpec syn;
  std::string syn_kind = data::to_string(syn.kind), syn_out;
  synth->add_option("--kind", syn_kind, "lowrank_poisson|periodic_traffic|burst_epidemic")
      ->capture_default_str();
  synth->add_option("--rows", syn.rows)->capture_default_str();
  synth->add_option("--cols", syn.cols)->capture_default_str();
  synth->add_option("--rank", syn.rank)->capture_default_str();
  synth->add_option("--noise", syn.noise)->capture_default_str();
  synth->add_option("--period", syn.period)->capture_default_str();
  synth->add_option("--seed", syn.seed)->capture_default_str();
  synth->add_option("--out", syn_out, "output CSV path")->required();

  // mask
  auto* mask = app.add_subcommand("mask", "generate a missingness mask for an input");
  std::string mask_input, mask_pattern = "scattered", mask_out = ".";
  masking::MaskSpec mspec;
  CsvFlags mask_csv;
  mask->add_option("--input", mask_input, "input CSV (its shape is used)")->required();
  mask->add_option("--pattern", mask_pattern, "scattered|uniblock|multiblock")->capture_default_str();
  mask->add_option("--rate", mspec.rate, "target missing rate in (0,1)")->required();
  mask->add_option("--seed", mspec.seed)->capture_default_str();
  mask->add_option("--blocks", mspec.blocks, "block count for multiblock")->capture_default_str();
  mask->add_option("--out-dir", mask_out)->capture_default_str();
  mask_csv.attach(mask);

  // impute
  auto* impute = app.add_subcommand("impute", "impute the missing cells of an input");
  std::string imp_input, imp_mask, imp_truth, imp_method = "blockecho", imp_out = ".";
  ModelFlags imp_model;
  CsvFlags imp_csv;
  impute->add_option("--input", imp_input, "input CSV; empty/NaN cells are missing")->required();
  impute->add_option("--mask", imp_mask, "mask CSV (1 observed, 0 hidden) applied on top");
  impute->add_option("--truth", imp_truth, "ground-truth CSV for metrics (default: the input)");
  impute->add_option("--method", imp_method, "blockecho|mf|gan_only|mean|colmean|knn")
      ->capture_default_str();
  impute->add_option("--out-dir", imp_out)->capture_default_str();
  imp_model.attach(impute, true);
  imp_csv.attach(impute);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "missing-rate sweep across patterns and methods");
  std::string sw_input, sw_rates = "0.2:0.8:0.1", sw_patterns = "uniblock",
                        sw_methods = "blockecho,mf,gan_only,mean,colmean,knn", sw_seeds = "0",
                        sw_out = ".";
  std::size_t sw_blocks = 3, sw_jobs = cli::default_jobs();
  bool sw_plot = false;
  ModelFlags sw_model;
  CsvFlags sw_csv;
  sweep->add_option("--input", sw_input, "fully or partly observed CSV")->required();
  sweep->add_option("--rates,--rate", sw_rates, "start:stop:step or a comma list")->capture_default_str();
  sweep->add_option("--patterns,--pattern", sw_patterns)->capture_default_str();
  sweep->add_option("--methods,--method", sw_methods)->capture_default_str();
  sweep->add_option("--seeds,--seed", sw_seeds, "comma list or first:last")->capture_default_str();
  sweep->add_option("--blocks", sw_blocks)->capture_default_str();
  sweep->add_option("--jobs", sw_jobs)->capture_default_str();
  sweep->add_flag("--plot", sw_plot, "also write one SVG chart per pattern");
  sweep->add_option("--out-dir", sw_out)->capture_default_str();
  sw_model.attach(sweep, false);
  sw_csv.attach(sweep);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "BlockEcho ablation table on shared masks");
  std::string ab_input, ab_mask, ab_pattern = "uniblock", ab_variants = "full,no_d1,no_d2,adv_only,mse_loss",
                        ab_seeds = "0", ab_out = ".";
  double ab_rate = 0.4;
  std::size_t ab_blocks = 3, ab_jobs = cli::default_jobs();
  ModelFlags ab_model;
  CsvFlags ab_csv;
  ablate->add_option("--input", ab_input)->required();
  ablate->add_option("--mask", ab_mask, "mask CSV shared by every run (else generated per seed)");
  ablate->add_option("--pattern", ab_pattern)->capture_default_str();
  ablate->add_option("--rate", ab_rate)->capture_default_str();
  ablate->add_option("--blocks", ab_blocks)->capture_default_str();
  ablate->add_option("--variants", ab_variants)->capture_default_str();
  ablate->add_option("--seeds,--seed", ab_seeds)->capture_default_str();
  ablate->add_option("--jobs", ab_jobs)->capture_default_str();
  ablate->add_option("--out-dir", ab_out)->capture_default_str();
  ab_model.attach(ablate, false);
  ab_csv.attach(ablate);

  // forecast
  auto* forecast = app.add_subcommand("forecast", "downstream next-row forecasting WMAPE");
  std::string fc_input, fc_out = ".";
  std::vector<std::string> fc_imputed;
  cli::ForecastCommand fc;
  CsvFlags fc_csv;
  forecast->add_option("--input", fc_input, "original, fully observed CSV")->required();
  forecast->add_option("--imputed", fc_imputed, "name=path of an imputed CSV (repeatable)");
  forecast->add_option("--k", fc.k)->capture_default_str();
  forecast->add_option("--holdout", fc.holdout, "rows to roll over (0 = last 10%)")
      ->capture_default_str();
  forecast->add_option("--out-dir", fc_out)->capture_default_str();
  fc_csv.attach(forecast);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*synth) {
    syn.kind = data::synthetic_kind_from_string(syn_kind);
    const auto ds = cli::cmd_synth(syn, syn_out);
    std::printf("wrote %s (%zu x %zu)\n", syn_out.c_str(), ds.rows(), ds.cols());
  } else if (*mask) {
    mspec.pattern = masking::pattern_from_string(mask_pattern);
    const auto in = cli::load_input(mask_input, mask_csv.options());
    cli::MaskCommand cmd{mspec, mask_out};
    const auto g = cli::cmd_mask(in, cmd);
    std::printf("mask %zu x %zu: %zu missing (achieved rate %.4f) -> %s\n", g.mask.rows(),
                g.mask.cols(), g.zeros, g.achieved_rate, mask_out.c_str());
  } else if (*impute) {
    const auto in = cli::load_input(imp_input, imp_csv.options());
    cli::ImputeCommand cmd;
    cmd.method = pipeline::method_from_string(imp_method);
    cmd.options = imp_model.resolve();
    if (!imp_mask.empty()) cmd.mask = cli::load_mask(imp_mask, in.dataset.rows(), in.dataset.cols());
    if (!imp_truth.empty()) cmd.truth = data::load_csv(imp_truth, imp_csv.options());
    cmd.out_dir = imp_out;
    const auto res = cli::cmd_impute(in, cmd);
    if (res.rmse) {
      std::printf("%s: rmse %.6f (per-count form %.6g) over %zu cells -> %s\n", imp_method.c_str(),
                  res.rmse->standard, res.rmse->paper_form, res.rmse->count, imp_out.c_str());
    } else {
      std::printf("%s: imputed, no ground truth to score -> %s\n", imp_method.c_str(),
                  imp_out.c_str());
    }
  } else if (*sweep) {
    const auto in = cli::load_input(sw_input, sw_csv.options());
    cli::SweepCommand cmd;
    cmd.rates = cli::parse_rates(sw_rates);
    cmd.patterns = parse_names<masking::Pattern>(sw_patterns, masking::pattern_from_string);
    cmd.methods = parse_names<pipeline::Method>(sw_methods, pipeline::method_from_string);
    cmd.seeds = cli::parse_seeds(sw_seeds);
    cmd.blocks = sw_blocks;
    cmd.options = sw_model.resolve();
    cmd.jobs = sw_jobs;
    cmd.plot = sw_plot;
    cmd.out_dir = sw_out;
    const auto res = cli::cmd_sweep(in, cmd);
    for (const auto& f : res.failures) {
      std::fprintf(stderr, "failed: rate %g %s seed %llu %s: %s\n", f.rate,
                   masking::to_string(f.pattern), static_cast<unsigned long long>(f.seed),
                   f.method.c_str(), f.error.c_str());
    }
    for (const auto& p : res.summary) {
      std::printf("%-10s %-9s rate %.2f  rmse %.5f  (%zu seeds)\n", masking::to_string(p.pattern),
                  pipeline::to_string(p.method), p.rate, p.mean_rmse, p.seeds);
    }
    std::printf("%zu rows, %zu failed -> %s\n", res.rows.size(), res.failures.size(),
                sw_out.c_str());
  } else if (*ablate) {
    const auto in = cli::load_input(ab_input, ab_csv.options());
    cli::AblateCommand cmd;
    cmd.variants = parse_names<cli::Variant>(ab_variants, cli::variant_from_string);
    cmd.seeds = cli::parse_seeds(ab_seeds);
    if (!ab_mask.empty()) cmd.mask = cli::load_mask(ab_mask, in.dataset.rows(), in.dataset.cols());
    cmd.mask_spec = {masking::pattern_from_string(ab_pattern), ab_rate, 0, ab_blocks};
    cmd.options = ab_model.resolve();
    cmd.jobs = ab_jobs;
    cmd.out_dir = ab_out;
    const auto res = cli::cmd_ablate(in, cmd);
    for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const auto& r : res.runs) {
      if (!r.ok()) std::fprintf(stderr, "failed: %s seed %llu: %s\n", cli::to_string(r.variant),
                                static_cast<unsigned long long>(r.seed), r.error.c_str());
    }
    for (const auto& s : res.table) {
      std::printf("%-9s rmse %.5f +- %.5f  (%zu runs, kl %s)\n", cli::to_string(s.variant),
                  s.mean_rmse, s.std_rmse, s.runs, s.kl_evaluated ? "evaluated" : "never evaluated");
    }
  } else if (*forecast) {
    const auto original = cli::load_input(fc_input, fc_csv.options());
    std::vector<std::pair<std::string, cli::Input>> variants;
    for (const auto& spec : fc_imputed) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw UsageError("--imputed expects name=path, got '" + spec + "'");
      }
      variants.emplace_back(spec.substr(0, eq),
                            cli::load_input(spec.substr(eq + 1), fc_csv.options()));
    }
    fc.out_dir = fc_out;
    const auto table = cli::cmd_forecast(original, variants, fc);
    for (const auto& r : table.rows) std::printf("%-12s wmape %.6f\n", r.variant.c_str(), r.wmape);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const blockecho::SpecError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blockecho::EvaluationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
