#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "blockecho/data.hpp"
#include "blockecho/errors.hpp"
#include "blockecho/gan.hpp"
#include "blockecho/io.hpp"
#include "blockecho/masking.hpp"
#include "blockecho/metrics.hpp"
#include "blockecho/pipeline.hpp"
#include "blockecho/svg.hpp"
#include "json.hpp"

// Command implementations behind the blockecho executable. Each command writes its
// artifacts plus a manifest.json into an output directory and also returns the results,
// so the same code paths can be driven from tests.
namespace blockecho::cli {

using numkern::Matrix;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

// ---------------------------------------------------------------------------------
// Argument helpers

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.emplace_back(io::trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.emplace_back(io::trim(cur));
  out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
  return out;
}

inline double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  if (!io::parse_number(io::trim(s), v)) {
    throw UsageError(std::string(what) + ": '" + s + "' is not a number");
  }
  return v;
}

// "0.2:0.8:0.1" (inclusive) or "0.2,0.4,0.6"; every rate must lie in (0,1).
inline std::vector<double> parse_rates(const std::string& s) {
  std::vector<double> rates;
  if (s.find(':') != std::string::npos) {
    const auto parts = split_list(s, ':');
    if (parts.size() != 3) throw UsageError("rates: expected start:stop:step, got '" + s + "'");
    const double a = parse_double(parts[0], "rates"), b = parse_double(parts[1], "rates"),
                 step = parse_double(parts[2], "rates");
    if (!(step > 0.0) || b < a) throw UsageError("rates: need step > 0 and stop >= start");
    const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      // snap to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004
      rates.push_back(std::round((a + step * static_cast<double>(i)) * 1e12) / 1e12);
    }
  } else {
    for (const auto& p : split_list(s)) rates.push_back(parse_double(p, "rates"));
  }
  if (rates.empty()) throw UsageError("rates: empty list");
  for (double r : rates) {
    if (!(r > 0.0 && r < 1.0)) {
      throw SpecError("rates: " + io::format_number(r) + " is outside (0,1)");
    }
  }
  return rates;
}

// "0,1,5" or an inclusive range "0:9".
inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  auto to_u64 = [&](const std::string& t) {
    std::uint64_t v = 0;
    const auto tt = io::trim(t);
    const auto [p, ec] = std::from_chars(tt.data(), tt.data() + tt.size(), v);
    if (ec != std::errc() || p != tt.data() + tt.size()) {
      throw UsageError("seeds: '" + t + "' is not a nonnegative integer");
    }
    return v;
  };
  if (s.find(':') != std::string::npos) {
    const auto parts = split_list(s, ':');
    if (parts.size() != 2) throw UsageError("seeds: expected first:last, got '" + s + "'");
    const auto a = to_u64(parts[0]), b = to_u64(parts[1]);
    if (b < a) throw UsageError("seeds: last < first");
    for (auto v = a; v <= b; ++v) seeds.push_back(v);
  } else {
    for (const auto& p : split_list(s)) seeds.push_back(to_u64(p));
  }
  if (seeds.empty()) throw UsageError("seeds: empty list");
  return seeds;
}

inline std::size_t default_jobs() {
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(0..count-1) on up to `jobs` threads. fn must not throw.
inline void parallel_for(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------------
// Inputs, manifests, artifacts

struct Input {
  data::Dataset dataset;
  std::string source;    // path, or a description for in-memory data
  std::string checksum;  // of the file bytes when loaded from disk
};

inline Input load_input(const std::string& path, const data::CsvOptions& opt = {}) {
  return {data::load_csv(path, opt), path, io::file_checksum(path)};
}

inline Input memory_input(data::Dataset ds, std::string source) {
  std::string sum = io::matrix_checksum(ds.matrix);
  return {std::move(ds), std::move(source), std::move(sum)};
}

inline Matrix load_mask(const std::string& path, std::size_t rows, std::size_t cols) {
  const auto ds = data::parse_csv(io::read_file(path), {data::HeaderMode::absent, false, ','});
  if (!ds.fully_observed()) throw ValidationError("mask file " + path + " has empty cells");
  if (ds.rows() != rows || ds.cols() != cols) {
    throw ShapeError("mask " + ds.matrix.shape() + " does not match input " +
                     numkern::Matrix(rows, cols).shape());
  }
  masking::validate_mask(ds.matrix);
  return ds.matrix;
}

// Generated mask AND the input's inherent mask.
inline Matrix combine_masks(const Matrix& generated, const Matrix& inherent) {
  numkern::require_same_shape(generated, inherent, "combine_masks");
  Matrix out = generated;
  for (std::size_t k = 0; k < out.size(); ++k)
    if (inherent[k] == 0.0) out[k] = 0.0;
  return out;
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // source -> checksum
  std::map<std::string, std::string> outputs;  // file name -> checksum
  double wall_seconds = 0.0;
  std::string version = kVersion;

  json to_json() const {
    return {{"command", command}, {"config", config},       {"seeds", seeds},
            {"inputs", inputs},   {"outputs", outputs},     {"wall_seconds", wall_seconds},
            {"version", version}};
  }
};

// Writes files under one directory and records them in the manifest.
class ArtifactWriter {
 public:
  using Clock = std::chrono::steady_clock;

  ArtifactWriter(std::string out_dir, std::string command, Clock::time_point start = Clock::now())
      : dir_(std::move(out_dir)), start_(start) {
    manifest_.command = std::move(command);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory " + dir_ + ": " + ec.message());
  }

  RunManifest& manifest() { return manifest_; }
  const std::string& dir() const { return dir_; }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

  void write(const std::string& name, const std::string& content) {
    io::write_file(path(name), content);
    manifest_.outputs[name] = io::hex64(io::fnv1a64(content));
  }

  // JSON artifacts point back at their manifest.
  void write_json(const std::string& name, json j) {
    j["manifest"] = kManifestName;
    write(name, j.dump(2) + "\n");
  }

  RunManifest finish() {
    manifest_.wall_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    io::write_file(path(kManifestName), manifest_.to_json().dump(2) + "\n");
    return manifest_;
  }

 private:
  std::string dir_;
  Clock::time_point start_;
  RunManifest manifest_;
};

inline json config_json(const pipeline::MethodOptions& opt) {
  return {{"blockecho", opt.config.to_json()},
          {"norm_floor", opt.norm.floor},
          {"norm_per_column", opt.norm.per_column},
          {"knn_k", opt.knn_k}};
}

// ---------------------------------------------------------------------------------
// synth

inline data::Dataset cmd_synth(const data::SyntheticSpec& spec, const std::string& out_path) {
  auto ds = data::gen_synthetic(spec);
  data::save_csv(ds, out_path);
  return ds;
}

// ---------------------------------------------------------------------------------
// mask

struct MaskCommand {
  masking::MaskSpec spec;
  std::string out_dir = ".";
};

inline json mask_sidecar(const masking::GeneratedMask& g, const masking::MaskSpec& spec) {
  json blocks = json::array();
  for (const auto& b : g.blocks) {
    blocks.push_back({{"top", b.top}, {"left", b.left}, {"height", b.height}, {"width", b.width}});
  }
  return {{"pattern", masking::to_string(spec.pattern)},
          {"rate", spec.rate},
          {"seed", spec.seed},
          {"rows", g.mask.rows()},
          {"cols", g.mask.cols()},
          {"target_zeros", g.target_zeros},
          {"zeros", g.zeros},
          {"achieved_rate", g.achieved_rate},
          {"blocks", blocks},
          {"mask_checksum", io::matrix_checksum(g.mask)}};
}

inline masking::GeneratedMask cmd_mask(const Input& in, const MaskCommand& cmd) {
  const auto t0 = ArtifactWriter::Clock::now();
  cmd.spec.validate();
  auto g = masking::generate(cmd.spec, in.dataset.rows(), in.dataset.cols());
  ArtifactWriter w(cmd.out_dir, "mask", t0);
  w.manifest().config = {{"pattern", masking::to_string(cmd.spec.pattern)},
                         {"rate", cmd.spec.rate},
                         {"blocks", cmd.spec.blocks}};
  w.manifest().seeds = {cmd.spec.seed};
  w.manifest().inputs[in.source] = in.checksum;
  w.write("mask.csv", io::format_mask_csv(g.mask));
  w.write_json("mask.json", mask_sidecar(g, cmd.spec));
  w.finish();
  return g;
}

// ---------------------------------------------------------------------------------
// impute

struct ImputeCommand {
  pipeline::Method method = pipeline::Method::blockecho;
  pipeline::MethodOptions options;
  std::optional<Matrix> mask;        // extra cells to hide; AND-ed with the inherent mask
  std::optional<data::Dataset> truth;  // defaults to the input itself
  std::string out_dir = ".";
};

struct ImputeResult {
  pipeline::MethodOutput output;
  Matrix effective_mask;
  std::optional<metrics::RmseReport> rmse;
  bool observed_exact = false;
};

inline ImputeResult cmd_impute(const Input& in, const ImputeCommand& cmd) {
  const auto t0 = ArtifactWriter::Clock::now();
  const auto& ds = in.dataset;
  ImputeResult res;
  res.effective_mask = cmd.mask ? combine_masks(*cmd.mask, ds.inherent_mask) : ds.inherent_mask;
  if (masking::count_zeros(res.effective_mask) == 0) {
    throw ValidationError("impute: nothing to impute (no missing cells)");
  }
  const auto xm = masking::apply_mask(ds.matrix, res.effective_mask);
  res.output = pipeline::run_method(cmd.method, xm, cmd.options);
  res.observed_exact = pipeline::observed_preserved(xm, res.output.imputed);
  if (!res.observed_exact) throw TrainingError("impute: observed cells were altered");

  const data::Dataset& truth = cmd.truth ? *cmd.truth : ds;
  if (truth.rows() != ds.rows() || truth.cols() != ds.cols()) {
    throw ShapeError("impute: truth " + truth.matrix.shape() + " does not match input " +
                     ds.matrix.shape());
  }
  bool scorable = false;
  for (std::size_t k = 0; k < truth.matrix.size(); ++k)
    scorable |= res.effective_mask[k] == 0.0 && truth.inherent_mask[k] != 0.0;
  if (scorable) {
    res.rmse = pipeline::evaluate(res.output.imputed, truth.matrix, res.effective_mask,
                                  truth.inherent_mask);
  }

  ArtifactWriter w(cmd.out_dir, "impute", t0);
  w.manifest().config = config_json(cmd.options);
  w.manifest().config["method"] = pipeline::to_string(cmd.method);
  w.manifest().seeds = {cmd.options.config.seed};
  w.manifest().inputs[in.source] = in.checksum;
  w.manifest().inputs["mask"] = io::matrix_checksum(res.effective_mask);

  data::Dataset out = ds;
  out.matrix = res.output.imputed;
  out.inherent_mask = Matrix::ones(ds.rows(), ds.cols());
  w.write("imputed.csv", data::format_csv(out));

  json m = {{"method", pipeline::to_string(cmd.method)},
            {"seed", cmd.options.config.seed},
            {"rate", static_cast<double>(masking::count_zeros(res.effective_mask)) /
                         static_cast<double>(res.effective_mask.size())},
            {"observed_exact", res.observed_exact},
            {"method_config", res.output.config},
            {"calls",
             {{"mf_term", res.output.counters.mf_term},
              {"d1", res.output.counters.d1},
              {"d2", res.output.counters.d2}}}};
  if (res.rmse) {
    m["rmse_standard"] = res.rmse->standard;
    m["rmse_paper_form"] = res.rmse->paper_form;
    m["missing_count"] = res.rmse->count;
  } else {
    m["rmse_standard"] = nullptr;
    m["rmse_paper_form"] = nullptr;
  }
  if (res.output.mf_trace) {
    m["mf_pretrain"] = {{"iterations", res.output.mf_trace->iterations},
                        {"converged", res.output.mf_trace->converged},
                        {"final_loss", res.output.mf_trace->final_loss()}};
  }
  w.write_json("metrics.json", m);
  if (!res.output.losses.empty()) w.write("loss_trace.csv", gan::loss_trace_csv(res.output.losses));
  if (res.output.checkpoint) w.write_json("checkpoint.json", *res.output.checkpoint);
  w.finish();
  return res;
}

// ---------------------------------------------------------------------------------
// sweep

struct SweepCommand {
  std::vector<double> rates;
  std::vector<masking::Pattern> patterns = {masking::Pattern::uniblock};
  std::vector<pipeline::Method> methods = pipeline::all_methods();
  std::vector<std::uint64_t> seeds = {0};
  std::size_t blocks = 3;
  pipeline::MethodOptions options;
  std::size_t jobs = 1;
  bool plot = false;
  std::string out_dir = ".";
};

struct SweepRow {
  double rate = 0.0;
  masking::Pattern pattern = masking::Pattern::uniblock;
  std::uint64_t seed = 0;
  pipeline::Method method = pipeline::Method::mean;
  metrics::RmseReport rmse;
  double achieved_rate = 0.0;
  std::string mask_checksum;
  bool observed_exact = false;
};

struct SweepFailure {
  double rate = 0.0;
  masking::Pattern pattern = masking::Pattern::uniblock;
  std::uint64_t seed = 0;
  std::string method;  // "*" when the mask itself could not be built
  std::string error;
};

struct SweepPoint {
  masking::Pattern pattern;
  pipeline::Method method;
  double rate;
  double mean_rmse;
  std::size_t seeds;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepFailure> failures;
  std::vector<SweepPoint> summary;  // seed-averaged, ordered by pattern, method, rate
};

// Seed-averaged RMSE per (pattern, method, rate).
inline std::vector<SweepPoint> summarize(const std::vector<SweepRow>& rows) {
  std::map<std::tuple<int, int, double>, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{static_cast<int>(r.pattern), static_cast<int>(r.method), r.rate}];
    a.first += r.rmse.standard;
    ++a.second;
  }
  std::vector<SweepPoint> out;
  for (const auto& [key, a] : acc) {
    out.push_back({static_cast<masking::Pattern>(std::get<0>(key)),
                   static_cast<pipeline::Method>(std::get<1>(key)), std::get<2>(key),
                   a.first / static_cast<double>(a.second), a.second});
  }
  return out;
}

// Fraction of adjacent rate pairs whose seed-averaged RMSE does not decrease.
inline double trend_fraction(const std::vector<SweepPoint>& summary, masking::Pattern pattern,
                             pipeline::Method method) {
  std::vector<double> curve;
  for (const auto& p : summary)
    if (p.pattern == pattern && p.method == method) curve.push_back(p.mean_rmse);
  if (curve.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) ok += curve[i + 1] >= curve[i];
  return static_cast<double>(ok) / static_cast<double>(curve.size() - 1);
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s =
      "rate,pattern,seed,method,rmse_standard,rmse_paper_form,missing_count,achieved_rate,"
      "mask_checksum,observed_exact\n";
  for (const auto& r : rows) {
    s += io::format_number(r.rate) + "," + masking::to_string(r.pattern) + "," +
         std::to_string(r.seed) + "," + pipeline::to_string(r.method) + "," +
         io::format_number(r.rmse.standard) + "," + io::format_number(r.rmse.paper_form) + "," +
         std::to_string(r.rmse.count) + "," + io::format_number(r.achieved_rate) + "," +
         r.mask_checksum + "," + (r.observed_exact ? "1" : "0") + "\n";
  }
  return s;
}

inline std::string failures_csv(const std::vector<SweepFailure>& fails) {
  std::string s = "rate,pattern,seed,method,error\n";
  for (const auto& f : fails) {
    s += io::format_number(f.rate) + "," + masking::to_string(f.pattern) + "," +
         std::to_string(f.seed) + "," + f.method + "," + io::quote_field(f.error) + "\n";
  }
  return s;
}

inline SweepResult cmd_sweep(const Input& in, const SweepCommand& cmd) {
  const auto t0 = ArtifactWriter::Clock::now();
  if (cmd.rates.empty() || cmd.patterns.empty() || cmd.methods.empty() || cmd.seeds.empty()) {
    throw UsageError("sweep: rates, patterns, methods and seeds must be non-empty");
  }
  const auto& ds = in.dataset;

  struct Cell {
    double rate;
    masking::Pattern pattern;
    std::uint64_t seed;
    std::optional<Matrix> mask;
    double achieved = 0.0;
    std::string checksum;
    std::string error;
  };
  std::vector<Cell> cells;
  for (auto pattern : cmd.patterns)
    for (double rate : cmd.rates)
      for (auto seed : cmd.seeds) cells.push_back({rate, pattern, seed, std::nullopt, 0.0, {}, {}});

  // Masks first, once per cell, so every method sees the same bytes.
  parallel_for(cells.size(), cmd.jobs, [&](std::size_t i) {
    auto& c = cells[i];
    try {
      masking::MaskSpec spec{c.pattern, c.rate, c.seed, cmd.blocks};
      spec.validate();
      auto g = masking::generate(spec, ds.rows(), ds.cols());
      c.achieved = g.achieved_rate;
      c.mask = combine_masks(g.mask, ds.inherent_mask);
      c.checksum = io::matrix_checksum(*c.mask);
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });

  struct Task {
    std::size_t cell;
    pipeline::Method method;
    std::optional<SweepRow> row;
    std::string error;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].mask) continue;
    for (auto m : cmd.methods) tasks.push_back({i, m, std::nullopt, {}});
  }

  parallel_for(tasks.size(), cmd.jobs, [&](std::size_t t) {
    auto& task = tasks[t];
    const auto& c = cells[task.cell];
    try {
      const Matrix& mask = *c.mask;
      if (io::matrix_checksum(mask) != c.checksum) throw Error("mask changed under a method");
      auto opt = cmd.options;
      opt.config.seed = c.seed;
      const auto xm = masking::apply_mask(ds.matrix, mask);
      const auto out = pipeline::run_method(task.method, xm, opt);
      SweepRow row;
      row.rate = c.rate;
      row.pattern = c.pattern;
      row.seed = c.seed;
      row.method = task.method;
      row.rmse = pipeline::evaluate(out.imputed, ds.matrix, mask, ds.inherent_mask);
      row.achieved_rate = c.achieved;
      row.mask_checksum = c.checksum;
      row.observed_exact = pipeline::observed_preserved(xm, out.imputed);
      task.row = row;
    } catch (const std::exception& e) {
      task.error = e.what();
    }
  });

  SweepResult res;
  for (const auto& c : cells) {
    if (!c.mask) res.failures.push_back({c.rate, c.pattern, c.seed, "*", c.error});
  }
  for (const auto& task : tasks) {
    if (task.row) {
      res.rows.push_back(*task.row);
    } else {
      const auto& c = cells[task.cell];
      res.failures.push_back(
          {c.rate, c.pattern, c.seed, pipeline::to_string(task.method), task.error});
    }
  }
  res.summary = summarize(res.rows);

  ArtifactWriter w(cmd.out_dir, "sweep", t0);
  json cfg = config_json(cmd.options);
  cfg["rates"] = cmd.rates;
  std::vector<std::string> pats, meths;
  for (auto p : cmd.patterns) pats.emplace_back(masking::to_string(p));
  for (auto m : cmd.methods) meths.emplace_back(pipeline::to_string(m));
  cfg["patterns"] = pats;
  cfg["methods"] = meths;
  cfg["blocks"] = cmd.blocks;
  w.manifest().config = cfg;
  w.manifest().seeds = cmd.seeds;
  w.manifest().inputs[in.source] = in.checksum;
  w.write("sweep.csv", sweep_csv(res.rows));
  w.write("failures.csv", failures_csv(res.failures));

  json summary = json::array();
  for (const auto& p : res.summary) {
    summary.push_back({{"pattern", masking::to_string(p.pattern)},
                       {"method", pipeline::to_string(p.method)},
                       {"rate", p.rate},
                       {"mean_rmse", p.mean_rmse},
                       {"seeds", p.seeds}});
  }
  json trend = json::object();
  for (auto p : cmd.patterns)
    for (auto m : cmd.methods)
      trend[std::string(masking::to_string(p)) + "/" + pipeline::to_string(m)] =
          trend_fraction(res.summary, p, m);
  w.write_json("sweep.json", {{"rows", res.rows.size()},
                              {"failed", res.failures.size()},
                              {"summary", summary},
                              {"trend_nondecreasing_fraction", trend}});
  if (cmd.plot) {
    for (auto p : cmd.patterns) {
      std::vector<svg::Series> series;
      for (auto m : cmd.methods) {
        svg::Series s{pipeline::to_string(m), {}};
        for (const auto& pt : res.summary)
          if (pt.pattern == p && pt.method == m) s.points.emplace_back(pt.rate, pt.mean_rmse);
        if (!s.points.empty()) series.push_back(std::move(s));
      }
      w.write(std::string("sweep_") + masking::to_string(p) + ".svg",
              svg::line_chart(std::string("RMSE vs missing rate (") + masking::to_string(p) + ")",
                              "missing rate", "RMSE", series));
    }
  }
  w.finish();
  return res;
}

// ---------------------------------------------------------------------------------
// ablate

enum class Variant { full, no_d1, no_d2, adv_only, mse_loss };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> kAll = {Variant::full, Variant::no_d1, Variant::no_d2,
                                            Variant::adv_only, Variant::mse_loss};
  return kAll;
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::no_d1:
      return "no_d1";
    case Variant::no_d2:
      return "no_d2";
    case Variant::adv_only:
      return "adv_only";
    case Variant::mse_loss:
      return "mse_loss";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : all_variants())
    if (s == to_string(v)) return v;
  throw SpecError("unknown ablation variant '" + s +
                  "' (expected full|no_d1|no_d2|adv_only|mse_loss)");
}

inline gan::BlockEchoConfig apply_variant(gan::BlockEchoConfig c, Variant v) {
  switch (v) {
    case Variant::full:
      break;
    case Variant::no_d1:
      c.use_d1 = false;
      break;
    case Variant::no_d2:
      c.use_d2 = false;
      break;
    case Variant::adv_only:
      c.alpha = 0.0;
      break;
    case Variant::mse_loss:
      c.loss_mode = gan::LossMode::mse;
      break;
  }
  return c;
}

// Drops repeats, keeping first occurrences; returns one warning per dropped entry.
inline std::vector<Variant> dedupe_variants(const std::vector<Variant>& in,
                                            std::vector<std::string>* warnings) {
  std::vector<Variant> out;
  for (Variant v : in) {
    if (std::find(out.begin(), out.end(), v) != out.end()) {
      if (warnings) warnings->push_back(std::string("duplicate variant '") + to_string(v) + "' ignored");
      continue;
    }
    out.push_back(v);
  }
  return out;
}

struct AblateCommand {
  std::vector<Variant> variants = all_variants();
  std::vector<std::uint64_t> seeds = {0};
  std::optional<Matrix> mask;  // shared by every seed when given
  masking::MaskSpec mask_spec{masking::Pattern::uniblock, 0.4, 0, 3};  // seed replaced per run
  pipeline::MethodOptions options;
  std::size_t jobs = 1;
  std::string out_dir = ".";
};

struct AblationRun {
  Variant variant = Variant::full;
  std::uint64_t seed = 0;
  metrics::RmseReport rmse;
  gan::CallCounters counters;
  std::string mask_checksum;
  std::string error;
  bool ok() const { return error.empty(); }
};

struct AblationSummary {
  Variant variant = Variant::full;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
  std::size_t runs = 0;
  bool kl_evaluated = false;
};

struct AblateResult {
  std::vector<Variant> variants;
  std::vector<std::string> warnings;
  std::vector<AblationRun> runs;  // variant-major
  std::vector<AblationSummary> table;
};

inline AblateResult cmd_ablate(const Input& in, const AblateCommand& cmd) {
  const auto t0 = ArtifactWriter::Clock::now();
  const auto& ds = in.dataset;
  AblateResult res;
  res.variants = dedupe_variants(cmd.variants, &res.warnings);
  if (res.variants.empty()) throw UsageError("ablate: no variants");
  if (cmd.seeds.empty()) throw UsageError("ablate: no seeds");

  // One mask per seed, shared across variants.
  std::vector<Matrix> masks;
  for (auto seed : cmd.seeds) {
    if (cmd.mask) {
      masks.push_back(combine_masks(*cmd.mask, ds.inherent_mask));
    } else {
      auto spec = cmd.mask_spec;
      spec.seed = seed;
      spec.validate();
      masks.push_back(combine_masks(masking::generate(spec, ds.rows(), ds.cols()).mask,
                                    ds.inherent_mask));
    }
  }
  std::vector<std::string> sums;
  for (const auto& m : masks) sums.push_back(io::matrix_checksum(m));

  for (Variant v : res.variants)
    for (auto seed : cmd.seeds) res.runs.push_back({v, seed, {}, {}, {}, {}});

  parallel_for(res.runs.size(), cmd.jobs, [&](std::size_t i) {
    auto& run = res.runs[i];
    const std::size_t si = i % cmd.seeds.size();
    try {
      const Matrix& mask = masks[si];
      if (io::matrix_checksum(mask) != sums[si]) throw Error("mask changed under a variant");
      auto opt = cmd.options;
      opt.config = apply_variant(opt.config, run.variant);
      opt.config.seed = run.seed;
      const auto xm = masking::apply_mask(ds.matrix, mask);
      const auto out = pipeline::run_method(pipeline::Method::blockecho, xm, opt);
      if (!pipeline::observed_preserved(xm, out.imputed)) throw Error("observed cells altered");
      run.rmse = pipeline::evaluate(out.imputed, ds.matrix, mask, ds.inherent_mask);
      run.counters = out.counters;
      run.mask_checksum = sums[si];
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });

  for (Variant v : res.variants) {
    AblationSummary s;
    s.variant = v;
    std::vector<double> vals;
    for (const auto& r : res.runs) {
      if (r.variant != v || !r.ok()) continue;
      vals.push_back(r.rmse.standard);
      s.kl_evaluated |= r.counters.mf_term > 0;
    }
    s.runs = vals.size();
    if (!vals.empty()) {
      for (double x : vals) s.mean_rmse += x;
      s.mean_rmse /= static_cast<double>(vals.size());
      for (double x : vals) s.std_rmse += (x - s.mean_rmse) * (x - s.mean_rmse);
      s.std_rmse = std::sqrt(s.std_rmse / static_cast<double>(vals.size()));
    } else {
      s.mean_rmse = s.std_rmse = NAN;
    }
    res.table.push_back(s);
  }

  ArtifactWriter w(cmd.out_dir, "ablate", t0);
  json cfg = config_json(cmd.options);
  std::vector<std::string> names;
  for (auto v : res.variants) names.emplace_back(to_string(v));
  cfg["variants"] = names;
  if (cmd.mask) {
    cfg["mask"] = "file";
  } else {
    cfg["mask"] = {{"pattern", masking::to_string(cmd.mask_spec.pattern)},
                   {"rate", cmd.mask_spec.rate},
                   {"blocks", cmd.mask_spec.blocks}};
  }
  w.manifest().config = cfg;
  w.manifest().seeds = cmd.seeds;
  w.manifest().inputs[in.source] = in.checksum;

  std::string csv = "variant,seed,status,rmse_standard,rmse_paper_form,mf_term_calls,d1_calls,d2_calls,mask_checksum,error\n";
  for (const auto& r : res.runs) {
    csv += std::string(to_string(r.variant)) + "," + std::to_string(r.seed) + "," +
           (r.ok() ? "ok" : "failed") + "," +
           (r.ok() ? io::format_number(r.rmse.standard) : "") + "," +
           (r.ok() ? io::format_number(r.rmse.paper_form) : "") + "," +
           std::to_string(r.counters.mf_term) + "," + std::to_string(r.counters.d1) + "," +
           std::to_string(r.counters.d2) + "," + r.mask_checksum + "," +
           io::quote_field(r.error) + "\n";
  }
  w.write("ablation.csv", csv);
  json table = json::array();
  for (const auto& s : res.table) {
    table.push_back({{"variant", to_string(s.variant)},
                     {"mean_rmse", std::isnan(s.mean_rmse) ? json(nullptr) : json(s.mean_rmse)},
                     {"std_rmse", std::isnan(s.std_rmse) ? json(nullptr) : json(s.std_rmse)},
                     {"runs", s.runs},
                     {"kl_evaluated", s.kl_evaluated}});
  }
  w.write_json("ablation.json", {{"table", table}, {"warnings", res.warnings}});
  w.finish();
  return res;
}

// ---------------------------------------------------------------------------------
// forecast

struct ForecastCommand {
  std::size_t k = 5;
  std::size_t holdout = 0;  // 0: last 10% of rows
  std::string out_dir = ".";
};

inline data::DownstreamTable cmd_forecast(const Input& original,
                                          const std::vector<std::pair<std::string, Input>>& variants,
                                          const ForecastCommand& cmd) {
  const auto t0 = ArtifactWriter::Clock::now();
  const auto& ds = original.dataset;
  if (!ds.fully_observed()) throw ValidationError("forecast: original data has missing cells");
  std::vector<std::pair<std::string, Matrix>> mats;
  for (const auto& [name, v] : variants) {
    if (v.dataset.rows() != ds.rows() || v.dataset.cols() != ds.cols()) {
      throw ShapeError("forecast: variant '" + name + "' is " + v.dataset.matrix.shape() +
                       ", original is " + ds.matrix.shape());
    }
    if (!v.dataset.fully_observed()) {
      throw ValidationError("forecast: variant '" + name + "' still has missing cells");
    }
    mats.emplace_back(name, v.dataset.matrix);
  }
  const std::size_t holdout = cmd.holdout == 0 ? data::default_holdout(ds.rows()) : cmd.holdout;
  auto table = data::eval_downstream(ds.matrix, mats, cmd.k, holdout);

  ArtifactWriter w(cmd.out_dir, "forecast", t0);
  w.manifest().config = {{"k", cmd.k}, {"holdout", holdout}};
  w.manifest().inputs[original.source] = original.checksum;
  for (const auto& [name, v] : variants) w.manifest().inputs[v.source] = v.checksum;
  w.write_json("forecast.json", table.to_json());
  w.finish();
  return table;
}

}  // namespace blockecho::cli
