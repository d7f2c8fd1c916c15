#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "blockecho/commands.hpp"

using namespace blockecho;
using numkern::Matrix;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("blockecho_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

cli::Input periodic_input(std::size_t rows = 40, std::size_t cols = 12) {
  data::SyntheticSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.seed = 1;
  return cli::memory_input(data::gen_synthetic(spec), "periodic");
}

pipeline::MethodOptions quick_options(std::size_t iters = 20) {
  pipeline::MethodOptions opt;
  opt.config.iters = iters;
  opt.config.pretrain_iters = 100;
  return opt;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BLOCKECHO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Args, RateRangesAreInclusive) {
  const auto r = cli::parse_rates("0.2:0.8:0.1");
  ASSERT_EQ(r.size(), 7u);
  EXPECT_EQ(r.front(), 0.2);
  EXPECT_EQ(r[1], 0.3);
  EXPECT_EQ(r.back(), 0.8);
  EXPECT_EQ(cli::parse_rates("0.5, 0.25"), (std::vector<double>{0.5, 0.25}));
}

TEST(Args, RateErrors) {
  EXPECT_THROW(cli::parse_rates("0.2:0.8"), UsageError);
  EXPECT_THROW(cli::parse_rates("abc"), UsageError);
  EXPECT_THROW(cli::parse_rates("0.5:0.2:0.1"), UsageError);
  EXPECT_THROW(cli::parse_rates("0,0.5"), SpecError);
  EXPECT_THROW(cli::parse_rates("1.0"), SpecError);
}

TEST(Args, Seeds) {
  EXPECT_EQ(cli::parse_seeds("0:3"), (std::vector<std::uint64_t>{0, 1, 2, 3}));
  EXPECT_EQ(cli::parse_seeds("7,2"), (std::vector<std::uint64_t>{7, 2}));
  EXPECT_THROW(cli::parse_seeds("-1"), UsageError);
  EXPECT_THROW(cli::parse_seeds("3:1"), UsageError);
}

TEST(Args, ParallelForVisitsEveryIndexOnce) {
  std::vector<int> hits(100, 0);
  cli::parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(MaskCommand, ExactRateAndStableChecksum) {
  const auto in = cli::memory_input(data::from_matrix(Matrix::ones(10, 10)), "ones");
  const auto dir = scratch("mask");
  const auto g = cli::cmd_mask(in, {{masking::Pattern::scattered, 0.6, 4}, dir});
  EXPECT_EQ(g.zeros, 60u);
  EXPECT_DOUBLE_EQ(g.achieved_rate, 0.6);
  const auto side = nlohmann::json::parse(io::read_file(dir + "/mask.json"));
  EXPECT_EQ(side["zeros"], 60);
  EXPECT_EQ(side["manifest"], "manifest.json");
  const auto first = io::file_checksum(dir + "/mask.csv");
  cli::cmd_mask(in, {{masking::Pattern::scattered, 0.6, 4}, dir});
  EXPECT_EQ(io::file_checksum(dir + "/mask.csv"), first);
  const Matrix back = cli::load_mask(dir + "/mask.csv", 10, 10);
  EXPECT_EQ(back, g.mask);
  const auto manifest = nlohmann::json::parse(io::read_file(dir + "/manifest.json"));
  EXPECT_EQ(manifest["outputs"]["mask.csv"], first);
}

TEST(MaskCommand, LoadMaskErrors) {
  const auto dir = scratch("mask_err");
  io::write_file(dir + "/bad.csv", "1,0\n1,2\n");
  EXPECT_THROW(cli::load_mask(dir + "/bad.csv", 2, 2), ValidationError);
  io::write_file(dir + "/short.csv", "1,0\n");
  EXPECT_THROW(cli::load_mask(dir + "/short.csv", 2, 2), ShapeError);
}

TEST(ImputeCommand, MeanOfTwoObservedCells) {
  auto ds = data::parse_csv("1,\n,3\n");
  const auto dir = scratch("impute_mean");
  cli::ImputeCommand cmd;
  cmd.method = pipeline::Method::mean;
  cmd.out_dir = dir;
  const auto res = cli::cmd_impute(cli::memory_input(ds, "tiny"), cmd);
  EXPECT_EQ(res.output.imputed, (Matrix{{1, 2}, {2, 3}}));
  EXPECT_TRUE(res.observed_exact);
  EXPECT_FALSE(res.rmse.has_value());  // nothing to score against
  const auto back = data::parse_csv(io::read_file(dir + "/imputed.csv"));
  EXPECT_EQ(back.matrix, (Matrix{{1, 2}, {2, 3}}));
  EXPECT_TRUE(nlohmann::json::parse(io::read_file(dir + "/metrics.json"))["rmse_standard"].is_null());
}

TEST(ImputeCommand, NothingMissingIsValidationError) {
  cli::ImputeCommand cmd;
  cmd.method = pipeline::Method::mean;
  cmd.out_dir = scratch("impute_none");
  EXPECT_THROW(cli::cmd_impute(cli::memory_input(data::parse_csv("1,2\n"), "full"), cmd),
               ValidationError);
}

TEST(ImputeCommand, EveryMethodPreservesObservedCells) {
  const auto in = periodic_input();
  const Matrix mask = masking::gen_uniblock(40, 12, 0.3, 2).mask;
  for (auto method : pipeline::all_methods()) {
    cli::ImputeCommand cmd;
    cmd.method = method;
    cmd.options = quick_options();
    cmd.mask = mask;
    cmd.out_dir = scratch(std::string("impute_") + pipeline::to_string(method));
    const auto res = cli::cmd_impute(in, cmd);
    EXPECT_TRUE(res.observed_exact) << pipeline::to_string(method);
    ASSERT_TRUE(res.rmse.has_value());
    EXPECT_TRUE(std::isfinite(res.rmse->standard));
    for (std::size_t k = 0; k < mask.size(); ++k)
      if (mask[k] == 1.0) ASSERT_EQ(res.output.imputed[k], in.dataset.matrix[k]);
    if (method == pipeline::Method::blockecho) {
      EXPECT_TRUE(fs::exists(cmd.out_dir + "/loss_trace.csv"));
      EXPECT_TRUE(fs::exists(cmd.out_dir + "/checkpoint.json"));
    }
  }
}

TEST(SweepCommand, RowAccountingAndDeterminism) {
  const auto in = periodic_input();
  cli::SweepCommand cmd;
  cmd.rates = {0.2, 0.4};
  cmd.patterns = {masking::Pattern::uniblock, masking::Pattern::scattered};
  cmd.methods = {pipeline::Method::mean, pipeline::Method::mf, pipeline::Method::blockecho};
  cmd.seeds = {0, 1};
  cmd.options = quick_options(10);
  const auto dir_a = scratch("sweep_a");
  cmd.out_dir = dir_a;
  cmd.jobs = 1;
  const auto a = cli::cmd_sweep(in, cmd);
  EXPECT_EQ(a.rows.size(), 2u * 2u * 3u * 2u);
  EXPECT_TRUE(a.failures.empty());
  for (const auto& r : a.rows) EXPECT_TRUE(r.observed_exact);

  cmd.out_dir = scratch("sweep_b");
  cmd.jobs = 3;
  cli::cmd_sweep(in, cmd);
  EXPECT_EQ(io::file_checksum(dir_a + "/sweep.csv"),
            io::file_checksum(cmd.out_dir + "/sweep.csv"));
}

TEST(SweepCommand, FailedCellsAreIsolated) {
  const auto in = periodic_input(40, 12);
  cli::SweepCommand cmd;
  cmd.rates = {0.3, 0.95};
  cmd.patterns = {masking::Pattern::multiblock};
  cmd.blocks = 6;
  cmd.methods = {pipeline::Method::mean, pipeline::Method::colmean};
  cmd.seeds = {0};
  cmd.out_dir = scratch("sweep_fail");
  const auto res = cli::cmd_sweep(in, cmd);
  EXPECT_EQ(res.rows.size(), 2u);
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].method, "*");
  EXPECT_EQ(res.failures[0].rate, 0.95);
  EXPECT_TRUE(fs::exists(cmd.out_dir + "/failures.csv"));
}

TEST(SweepCommand, TrendFraction) {
  using P = masking::Pattern;
  using M = pipeline::Method;
  const std::vector<cli::SweepPoint> s = {{P::uniblock, M::mf, 0.2, 0.1, 1},
                                          {P::uniblock, M::mf, 0.4, 0.2, 1},
                                          {P::uniblock, M::mf, 0.6, 0.15, 1}};
  EXPECT_DOUBLE_EQ(cli::trend_fraction(s, P::uniblock, M::mf), 0.5);
  EXPECT_DOUBLE_EQ(cli::trend_fraction(s, P::scattered, M::mf), 1.0);
}

TEST(AblateCommand, DuplicatesWarnAndMasksAreShared) {
  const auto in = periodic_input();
  cli::AblateCommand cmd;
  cmd.variants = {cli::Variant::full, cli::Variant::adv_only, cli::Variant::full};
  cmd.seeds = {0, 1};
  cmd.options = quick_options(5);
  cmd.out_dir = scratch("ablate");
  const auto res = cli::cmd_ablate(in, cmd);
  EXPECT_EQ(res.variants.size(), 2u);
  ASSERT_EQ(res.warnings.size(), 1u);
  ASSERT_EQ(res.runs.size(), 4u);
  EXPECT_EQ(res.runs[0].mask_checksum, res.runs[2].mask_checksum);
  EXPECT_EQ(res.runs[1].mask_checksum, res.runs[3].mask_checksum);
  EXPECT_NE(res.runs[0].mask_checksum, res.runs[1].mask_checksum);
  EXPECT_EQ(res.runs[2].counters.mf_term, 0u);  // adv_only never evaluates the KL term
  EXPECT_GT(res.runs[0].counters.mf_term, 0u);
}

TEST(AblateCommand, Variants) {
  EXPECT_EQ(cli::apply_variant({}, cli::Variant::adv_only).alpha, 0.0);
  EXPECT_FALSE(cli::apply_variant({}, cli::Variant::no_d2).use_d2);
  EXPECT_EQ(cli::apply_variant({}, cli::Variant::mse_loss).loss_mode, gan::LossMode::mse);
  EXPECT_THROW(cli::variant_from_string("no_gan"), SpecError);
}

TEST(ForecastCommand, OriginalAndVariants) {
  const auto in = periodic_input(60, 6);
  data::Dataset damaged = in.dataset;
  for (auto& v : damaged.matrix.values()) v *= 1.1;
  const auto t = cli::cmd_forecast(in, {{"scaled", cli::memory_input(damaged, "scaled")}},
                                   {1, 0, scratch("forecast")});
  EXPECT_EQ(t.holdout, 6u);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_GT(t.rows[1].wmape, t.rows[0].wmape);

  data::Dataset holey = in.dataset;
  holey.inherent_mask(0, 0) = 0.0;
  EXPECT_THROW(cli::cmd_forecast(in, {{"holey", cli::memory_input(holey, "holey")}},
                                 {1, 0, scratch("forecast2")}),
               ValidationError);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  const std::string csv = dir + "/x.csv";
  EXPECT_EQ(run_cli("synth --rows 30 --cols 8 --out " + csv), 0);
  EXPECT_EQ(run_cli("mask --input " + csv + " --pattern uniblock --rate 0.3 --out-dir " + dir), 0);
  EXPECT_EQ(run_cli("impute --input " + csv + " --mask " + dir + "/mask.csv --method colmean --out-dir " + dir), 0);
  EXPECT_TRUE(fs::exists(dir + "/imputed.csv"));

  io::write_file(dir + "/ragged.csv", "1,2\n3\n");
  EXPECT_EQ(run_cli("impute --input " + dir + "/ragged.csv --method mean --out-dir " + dir), 2);
  io::write_file(dir + "/tiny.csv", "1,2,3\n4,5,6\n7,8,9\n");
  EXPECT_EQ(run_cli("mask --input " + dir + "/tiny.csv --pattern uniblock --rate 0.3 --out-dir " + dir), 2);
  EXPECT_EQ(run_cli("impute --input " + csv + " --method nope --out-dir " + dir), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("impute --input " + dir + "/missing_file.csv --out-dir " + dir), 2);
}
