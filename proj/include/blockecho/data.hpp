#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/io.hpp"
#include "blockecho/metrics.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"
#include "json.hpp"

namespace blockecho::data {

using numkern::Matrix;

// A matrix plus the cells that were already missing in the source (the inherent mask,
// 1 = present). Missing cells hold NaN in `matrix`.
struct Dataset {
  Matrix matrix;
  Matrix inherent_mask;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  bool has_row_labels = false;  // labels came from / go to the file
  bool has_col_labels = false;

  std::size_t rows() const { return matrix.rows(); }
  std::size_t cols() const { return matrix.cols(); }

  bool fully_observed() const { return missing_count() == 0; }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(inherent_mask.values().begin(),
                                               inherent_mask.values().end(), 0.0));
  }
};

inline std::vector<std::string> index_labels(std::size_t count) {
  std::vector<std::string> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::to_string(i);
  return out;
}

enum class HeaderMode { automatic, present, absent };

struct CsvOptions {
  HeaderMode header = HeaderMode::automatic;
  bool row_labels = false;
  char delimiter = ',';
};

inline Dataset parse_csv(std::string_view text, const CsvOptions& opt = {}) {
  auto records = io::split_csv(text, opt.delimiter);
  if (records.empty()) throw ParseError("CSV input is empty");
  const std::size_t label_cols = opt.row_labels ? 1 : 0;

  bool header = opt.header == HeaderMode::present;
  if (opt.header == HeaderMode::automatic) {
    const auto& first = records.front().fields;
    for (std::size_t j = label_cols; j < first.size(); ++j) {
      double tmp;
      if (!io::is_missing_token(first[j]) && !io::parse_number(first[j], tmp)) header = true;
    }
  }

  Dataset ds;
  std::size_t first_data = 0;
  if (header) {
    const auto& f = records.front().fields;
    ds.col_labels.assign(f.begin() + static_cast<std::ptrdiff_t>(std::min(label_cols, f.size())),
                         f.end());
    ds.has_col_labels = true;
    first_data = 1;
  }
  if (first_data >= records.size()) throw ParseError("CSV has a header but no data rows");
  const std::size_t width = records[first_data].fields.size();
  if (width <= label_cols) throw ParseError("CSV rows have no value columns");
  const std::size_t n = width - label_cols;
  if (header && ds.col_labels.size() != n) {
    throw ParseError("header on line " + std::to_string(records.front().line) + " has " +
                     std::to_string(ds.col_labels.size()) + " columns, data has " +
                     std::to_string(n));
  }
  const std::size_t m = records.size() - first_data;
  std::vector<double> values;
  std::vector<double> mask;
  values.reserve(m * n);
  mask.reserve(m * n);
  for (std::size_t r = first_data; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != width) {
      throw ParseError("ragged row on line " + std::to_string(rec.line) + ": expected " +
                       std::to_string(width) + " fields, found " +
                       std::to_string(rec.fields.size()));
    }
    if (opt.row_labels) ds.row_labels.push_back(rec.fields[0]);
    for (std::size_t j = label_cols; j < width; ++j) {
      const std::string& cell = rec.fields[j];
      double v = 0.0;
      if (io::is_missing_token(cell)) {
        values.push_back(NAN);
        mask.push_back(0.0);
      } else if (io::parse_number(cell, v)) {
        values.push_back(v);
        mask.push_back(1.0);
      } else {
        throw ParseError("non-numeric cell '" + cell + "' at line " + std::to_string(rec.line) +
                         ", column " + std::to_string(j + 1));
      }
    }
  }
  ds.matrix = Matrix(m, n, std::move(values));
  ds.inherent_mask = Matrix(m, n, std::move(mask));
  ds.has_row_labels = opt.row_labels;
  if (!ds.has_row_labels) ds.row_labels = index_labels(m);
  if (!ds.has_col_labels) ds.col_labels = index_labels(n);
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opt = {}) {
  return parse_csv(io::read_file(path), opt);
}

inline std::string format_csv(const Dataset& ds) {
  std::string out;
  if (ds.has_col_labels) {
    if (ds.has_row_labels) out += ",";
    for (std::size_t j = 0; j < ds.col_labels.size(); ++j) {
      if (j) out += ',';
      out += io::quote_field(ds.col_labels[j]);
    }
    out += '\n';
  }
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.has_row_labels) out += io::quote_field(ds.row_labels[i]) + ",";
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (j) out += ',';
      if (ds.inherent_mask(i, j) != 0.0) out += io::format_number(ds.matrix(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  io::write_file(path, format_csv(ds));
}

inline Dataset from_matrix(Matrix values) {
  Dataset ds;
  ds.inherent_mask = Matrix::ones(values.rows(), values.cols());
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!std::isfinite(values[k])) ds.inherent_mask[k] = 0.0;
  ds.row_labels = index_labels(values.rows());
  ds.col_labels = index_labels(values.cols());
  ds.matrix = std::move(values);
  return ds;
}

// ---------------------------------------------------------------------------------
// Synthetic corpora

enum class SyntheticKind { lowrank_poisson, periodic_traffic, burst_epidemic };

inline const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::lowrank_poisson:
      return "lowrank_poisson";
    case SyntheticKind::periodic_traffic:
      return "periodic_traffic";
    case SyntheticKind::burst_epidemic:
      return "burst_epidemic";
  }
  return "?";
}

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "lowrank_poisson") return SyntheticKind::lowrank_poisson;
  if (s == "periodic_traffic") return SyntheticKind::periodic_traffic;
  if (s == "burst_epidemic") return SyntheticKind::burst_epidemic;
  throw SpecError("unknown synthetic kind '" + s + "'");
}

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::periodic_traffic;
  std::size_t rows = 200;
  std::size_t cols = 50;
  std::size_t rank = 3;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::size_t period = 24;  // periodic_traffic: rows per day

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)}, {"rows", rows},   {"cols", cols},    {"rank", rank},
            {"noise", noise},          {"seed", seed},   {"period", period}};
  }
};

namespace detail {

// Time profiles for the periodic corpus: harmonics of the daily cycle, all >= 0.2.
inline Matrix periodic_profiles(std::size_t m, std::size_t r, std::size_t period,
                                numkern::Rng& rng) {
  Matrix a(m, r);
  for (std::size_t c = 0; c < r; ++c) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double harmonic = static_cast<double>(c + 1);
    for (std::size_t i = 0; i < m; ++i) {
      const double t = 2.0 * std::numbers::pi * harmonic * static_cast<double>(i) /
                       static_cast<double>(period);
      a(i, c) = 1.0 + 0.8 * std::sin(t + phase);
    }
  }
  return a;
}

// Smooth epidemic-like waves: Gaussian bumps in time on a small floor.
inline Matrix wave_profiles(std::size_t m, std::size_t r, numkern::Rng& rng) {
  Matrix a(m, r);
  for (std::size_t c = 0; c < r; ++c) {
    const double center = rng.uniform(0.1, 0.9) * static_cast<double>(m);
    const double width = rng.uniform(0.08, 0.25) * static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = (static_cast<double>(i) - center) / width;
      a(i, c) = 0.1 + std::exp(-0.5 * d * d);
    }
  }
  return a;
}

}  // namespace detail

// Nonnegative desk-scale corpora; a pure function of the spec.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  const std::size_t m = spec.rows, n = spec.cols, r = spec.rank;
  if (m == 0 || n == 0) throw SpecError("gen_synthetic: empty shape");
  if (r == 0 || r > std::min(m, n)) {
    throw SpecError("gen_synthetic: rank " + std::to_string(r) + " infeasible for " +
                    Matrix::shape_string(m, n));
  }
  if (!(spec.noise >= 0.0)) throw SpecError("gen_synthetic: noise must be nonnegative");
  if (spec.kind == SyntheticKind::periodic_traffic && spec.period < 2) {
    throw SpecError("gen_synthetic: period must be at least 2");
  }
  numkern::Rng rng(spec.seed, numkern::Stream::kData);
  Matrix x;
  switch (spec.kind) {
    case SyntheticKind::lowrank_poisson: {
      const Matrix u = rng.uniform_matrix(m, r, 0.2, 1.2);
      const Matrix v = rng.uniform_matrix(r, n, 0.2, 1.2);
      x = numkern::matmul(u, v);
      if (spec.noise > 0.0) {
        // Poisson counts at rate x / noise^2, scaled back: mean x, variance x * noise^2.
        const double s = spec.noise * spec.noise;
        for (auto& e : x.values()) e = static_cast<double>(rng.poisson(e / s)) * s;
      }
      break;
    }
    case SyntheticKind::periodic_traffic: {
      const Matrix a = detail::periodic_profiles(m, r, spec.period, rng);
      const Matrix b = rng.uniform_matrix(r, n, 0.2, 1.2);
      x = numkern::matmul(a, b);
      for (auto& e : x.values()) e = std::max(0.0, e * (1.0 + spec.noise * rng.gaussian()));
      break;
    }
    case SyntheticKind::burst_epidemic: {
      const Matrix a = detail::wave_profiles(m, r, rng);
      const Matrix b = rng.uniform_matrix(r, n, 0.2, 1.2);
      x = numkern::matmul(a, b);
      for (auto& e : x.values()) {
        double f = 1.0 + spec.noise * rng.gaussian();
        if (rng.bernoulli(0.02)) f *= 1.0 + rng.uniform(1.0, 3.0);
        e = std::max(0.0, e * f);
      }
      break;
    }
  }
  return from_matrix(std::move(x));
}

// ---------------------------------------------------------------------------------
// Downstream forecasting

// k-nearest-neighbour one-step forecaster: the k rows closest (Euclidean) to the last
// row, excluding the last row itself, vote with the mean of their successors.
inline Matrix forecast_next(const Matrix& history, std::size_t k) {
  const std::size_t t = history.rows();
  if (k == 0) throw SpecError("forecast_next: k must be positive");
  if (k >= t) {
    throw SpecError("forecast_next: k=" + std::to_string(k) + " needs at least " +
                    std::to_string(k + 1) + " history rows, got " + std::to_string(t));
  }
  if (!history.all_finite()) throw SpecError("forecast_next: history has missing entries");
  const auto query = history.row(t - 1);
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(t - 1);
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const auto r = history.row(i);
    double d = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) d += (r[j] - query[j]) * (r[j] - query[j]);
    dist.emplace_back(d, i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  Matrix pred(1, history.cols());
  for (std::size_t q = 0; q < k; ++q) {
    const auto succ = history.row(dist[q].second + 1);
    for (std::size_t j = 0; j < succ.size(); ++j) pred[j] += succ[j];
  }
  for (auto& v : pred.values()) v /= static_cast<double>(k);
  return pred;
}

struct DownstreamRow {
  std::string variant;
  double wmape = 0.0;
};

struct DownstreamTable {
  double reference_wmape = 0.0;  // forecaster on the original data
  std::vector<DownstreamRow> rows;  // rows[0] is the original data
  std::size_t k = 0;
  std::size_t holdout = 0;
  std::string forecaster_hash;

  nlohmann::json to_json() const {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) table.push_back({{"variant", r.variant}, {"wmape", r.wmape}});
    return {{"reference_wmape", reference_wmape},
            {"k", k},
            {"holdout", holdout},
            {"forecaster", "knn_full_row"},
            {"forecaster_hash", forecaster_hash},
            {"rows", table}};
  }
};

inline std::size_t default_holdout(std::size_t rows) {
  return std::max<std::size_t>(1, rows / 10);
}

// Rolls over the last `holdout` rows: each is predicted from the preceding rows of the
// variant, and scored against the original data.
inline double rolling_wmape(const Matrix& variant, const Matrix& original, std::size_t k,
                            std::size_t holdout) {
  numkern::require_same_shape(variant, original, "rolling_wmape");
  const std::size_t t_total = original.rows();
  if (holdout == 0 || holdout >= t_total) {
    throw SpecError("eval_downstream: holdout must be in [1, rows)");
  }
  Matrix pred(holdout, original.cols());
  Matrix actual(holdout, original.cols());
  for (std::size_t h = 0; h < holdout; ++h) {
    const std::size_t t = t_total - holdout + h;
    Matrix history(t, variant.cols(),
                   std::vector<double>(variant.values().begin(),
                                       variant.values().begin() +
                                           static_cast<std::ptrdiff_t>(t * variant.cols())));
    const Matrix p = forecast_next(history, k);
    std::copy(p.values().begin(), p.values().end(), pred.row(h).begin());
    std::copy(original.row(t).begin(), original.row(t).end(), actual.row(h).begin());
  }
  return metrics::wmape(pred, actual);
}

inline DownstreamTable eval_downstream(
    const Matrix& original, const std::vector<std::pair<std::string, Matrix>>& variants,
    std::size_t k, std::size_t holdout) {
  DownstreamTable table;
  table.k = k;
  table.holdout = holdout;
  table.forecaster_hash = io::hex64(io::fnv1a64("knn_full_row;k=" + std::to_string(k) +
                                                ";holdout=" + std::to_string(holdout)));
  table.reference_wmape = rolling_wmape(original, original, k, holdout);
  table.rows.push_back({"original", table.reference_wmape});
  for (const auto& [name, m] : variants) {
    table.rows.push_back({name, rolling_wmape(m, original, k, holdout)});
  }
  return table;
}

}  // namespace blockecho::data
