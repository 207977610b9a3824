#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "neugap/errors.hpp"
#include "neugap/kernels.hpp"
#include "neugap/linalg.hpp"
#include "neugap/mean_function.hpp"
#include "neugap/random.hpp"

namespace neugap {

using Eigen::Index;

/// Numeric table with named columns; location_key holds the (latitude,
/// longitude) column indices when the table carries locations.
struct Table {
  std::vector<std::string> column_names;
  MatrixXd rows;
  std::optional<std::pair<int, int>> location_key;
  std::size_t dropped_count = 0;

  Index num_rows() const { return rows.rows(); }
  Index num_cols() const { return rows.cols(); }

  std::optional<int> find_column(const std::string &name) const {
    const auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) return std::nullopt;
    return static_cast<int>(it - column_names.begin());
  }

  int column_index(const std::string &name) const {
    if (auto idx = find_column(name)) return *idx;
    throw MissingColumn(name);
  }

  Table select_rows(const std::vector<Index> &indices) const {
    Table out;
    out.column_names = column_names;
    out.location_key = location_key;
    out.rows.resize(static_cast<Index>(indices.size()), num_cols());
    for (std::size_t i = 0; i < indices.size(); ++i) out.rows.row(static_cast<Index>(i)) = rows.row(indices[i]);
    return out;
  }
};

struct TableSchema {
  std::vector<std::string> required_columns;
  std::optional<std::pair<std::string, std::string>> location_columns;
};

namespace detail {

inline std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_number(const std::string &cell) {
  if (cell.empty()) return std::nullopt;
  char *end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses comma-separated numeric rows under a header row. Rows with a
/// missing or non-numeric cell are dropped and counted.
inline Table parse_table(std::istream &in, const TableSchema &schema = {}) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(detail::trim(line));
      break;
    }
  }
  if (header.empty()) throw EmptyTable("table has no header row");
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  Table table;
  table.column_names = header;
  std::vector<double> values;
  Index n = 0;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto cells = detail::split_csv_line(t);
    if (cells.size() != header.size()) {
      ++table.dropped_count;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto &c : cells) {
      const auto v = detail::parse_number(c);
      if (!v) break;
      row.push_back(*v);
    }
    if (row.size() != cells.size()) {
      ++table.dropped_count;
      continue;
    }
    values.insert(values.end(), row.begin(), row.end());
    ++n;
  }
  const Index c = static_cast<Index>(header.size());
  table.rows = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, c);

  for (const auto &name : schema.required_columns) table.column_index(name);
  if (schema.location_columns) {
    table.location_key = std::make_pair(table.column_index(schema.location_columns->first),
                                        table.column_index(schema.location_columns->second));
  }
  if (n == 0) throw EmptyTable("table has no valid rows");
  return table;
}

inline Table load_table(const std::string &path, const TableSchema &schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_table(in, schema);
}

inline void write_table(std::ostream &out, const Table &table) {
  for (std::size_t j = 0; j < table.column_names.size(); ++j) out << (j ? "," : "") << table.column_names[j];
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < table.num_rows(); ++i) {
    for (Index j = 0; j < table.num_cols(); ++j) out << (j ? "," : "") << table.rows(i, j);
    out << '\n';
  }
}

/// Regression task: predict one column from all the others.
struct Dataset {
  MatrixXd x;
  VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name;

  Index size() const { return y.size(); }
};

inline Dataset make_task(const Table &table, const std::string &target) {
  const int t = table.column_index(target);
  Dataset ds;
  ds.target_name = target;
  ds.y = table.rows.col(t);
  ds.x.resize(table.num_rows(), table.num_cols() - 1);
  Index k = 0;
  for (Index j = 0; j < table.num_cols(); ++j) {
    if (j == t) continue;
    ds.x.col(k++) = table.rows.col(j);
    ds.feature_names.push_back(table.column_names[static_cast<std::size_t>(j)]);
  }
  return ds;
}

/// Dataset restricted to the given feature columns, in that order.
inline Dataset make_task(const Table &table, const std::string &target, const std::vector<std::string> &features) {
  Dataset ds;
  ds.target_name = target;
  ds.feature_names = features;
  ds.y = table.rows.col(table.column_index(target));
  ds.x.resize(table.num_rows(), static_cast<Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) ds.x.col(static_cast<Index>(j)) = table.rows.col(table.column_index(features[j]));
  return ds;
}

struct SplitSpec {
  double test_location_fraction = 0.2;
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TableSplit {
  Table train, valid, test;
};

/// Location id per row, numbered by first appearance of each (lat, lon) pair.
inline std::vector<Index> location_ids(const Table &table) {
  if (!table.location_key) throw MissingColumn("location key");
  const auto [lat, lon] = *table.location_key;
  std::map<std::pair<double, double>, Index> ids;
  std::vector<Index> out(static_cast<std::size_t>(table.num_rows()));
  for (Index i = 0; i < table.num_rows(); ++i) {
    const auto key = std::make_pair(table.rows(i, lat), table.rows(i, lon));
    const auto [it, inserted] = ids.emplace(key, static_cast<Index>(ids.size()));
    out[static_cast<std::size_t>(i)] = it->second;
  }
  return out;
}

namespace detail {

inline std::pair<std::vector<Index>, std::vector<Index>> split_train_valid(std::vector<Index> rows, double valid_fraction,
                                                                          std::mt19937_64 &rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(rows.size())));
  if (valid_fraction > 0.0 && n_valid == 0 && rows.size() >= 2) n_valid = 1;
  std::vector<Index> valid(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<Index> train(rows.begin() + static_cast<std::ptrdiff_t>(n_valid), rows.end());
  std::sort(valid.begin(), valid.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(valid)};
}

}  // namespace detail

/// Holds out every row of a random subset of locations as test data, then
/// splits the remaining rows into train / valid.
inline TableSplit split_by_location(const Table &table, const SplitSpec &spec) {
  if (!(spec.test_location_fraction > 0.0 && spec.test_location_fraction < 1.0))
    throw DegenerateSplit("test location fraction must lie in (0, 1)");
  const auto ids = location_ids(table);
  const Index num_locations = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
  std::vector<Index> order(static_cast<std::size_t>(num_locations));
  for (Index l = 0; l < num_locations; ++l) order[static_cast<std::size_t>(l)] = l;
  std::mt19937_64 rng(derive_seed(spec.seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test =
      static_cast<std::size_t>(std::ceil(spec.test_location_fraction * static_cast<double>(num_locations) - 1e-9));
  std::vector<bool> is_test(static_cast<std::size_t>(num_locations), false);
  for (std::size_t i = 0; i < n_test && i < order.size(); ++i) is_test[static_cast<std::size_t>(order[i])] = true;

  std::vector<Index> test_rows, rest;
  for (Index i = 0; i < table.num_rows(); ++i) {
    (is_test[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] ? test_rows : rest).push_back(i);
  }
  auto [train_rows, valid_rows] = detail::split_train_valid(std::move(rest), spec.valid_fraction, rng);
  if (test_rows.empty() || train_rows.empty() || (spec.valid_fraction > 0.0 && valid_rows.empty()))
    throw DegenerateSplit("location split left an empty partition");
  return {table.select_rows(train_rows), table.select_rows(valid_rows), table.select_rows(test_rows)};
}

/// Row-level train / valid split with no test side (used when training on a whole file).
inline TableSplit split_rows(const Table &table, double valid_fraction, std::uint64_t seed) {
  std::vector<Index> rows(static_cast<std::size_t>(table.num_rows()));
  for (Index i = 0; i < table.num_rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(derive_seed(seed, "split"));
  auto [train_rows, valid_rows] = detail::split_train_valid(std::move(rows), valid_fraction, rng);
  if (train_rows.empty()) throw DegenerateSplit("no training rows");
  return {table.select_rows(train_rows), table.select_rows(valid_rows), Table{table.column_names, MatrixXd(0, table.num_cols()), table.location_key, 0}};
}

/// Per-column z-scoring with statistics from the training rows only.
/// Zero-variance columns are centred, left unscaled and flagged.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(VectorXd mean, VectorXd sd) : mean_(std::move(mean)), sd_(std::move(sd)) {}

  static Standardizer fit(const MatrixXd &train) {
    if (train.rows() == 0) throw EmptyTable("cannot standardize an empty training set");
    const VectorXd mean = train.colwise().mean().transpose();
    VectorXd sd = ((train.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
    for (Index j = 0; j < sd.size(); ++j) {
      if (!(sd(j) > 1e-12 * std::max(1.0, std::abs(mean(j))))) sd(j) = 0.0;
    }
    return {mean, sd};
  }

  static Standardizer fit(const VectorXd &train) { return fit(MatrixXd(train)); }

  Index size() const { return mean_.size(); }
  const VectorXd &mean() const { return mean_; }
  const VectorXd &sd() const { return sd_; }
  bool zero_variance(Index j) const { return sd_(j) == 0.0; }

  MatrixXd transform(const MatrixXd &x) const {
    require_dims(x.cols() == size(), "standardizer column count differs");
    MatrixXd out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean_(j)) / scale(j);
    return out;
  }

  MatrixXd invert(const MatrixXd &z) const {
    require_dims(z.cols() == size(), "standardizer column count differs");
    MatrixXd out(z.rows(), z.cols());
    for (Index j = 0; j < z.cols(); ++j) out.col(j) = z.col(j).array() * scale(j) + mean_(j);
    return out;
  }

  VectorXd transform_column(const VectorXd &v, Index j = 0) const { return (v.array() - mean_(j)) / scale(j); }
  VectorXd invert_column(const VectorXd &v, Index j = 0) const { return v.array() * scale(j) + mean_(j); }
  /// Variance of an affinely transformed Gaussian: v * sd^2.
  VectorXd invert_variance(const VectorXd &v, Index j = 0) const { return v * (scale(j) * scale(j)); }

 private:
  double scale(Index j) const { return sd_(j) == 0.0 ? 1.0 : sd_(j); }

  VectorXd mean_;
  VectorXd sd_;
};

/// Lloyd's algorithm with seeded random-row initialization. Initial centres
/// prefer distinct rows; empty clusters are re-seeded from the point farthest
/// from its assigned centre.
inline MatrixXd kmeans(const MatrixXd &x, Index num_centers, std::uint64_t seed, int max_iter = 100,
                       double tol = 1e-6) {
  const Index n = x.rows();
  if (n < 1) throw EmptyTable("kmeans needs at least one row");
  if (num_centers < 1) throw DimensionMismatch("kmeans needs at least one centre");

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  MatrixXd centers(num_centers, x.cols());
  Index chosen = 0;
  std::vector<Index> duplicates;
  for (Index idx : order) {
    if (chosen == num_centers) break;
    bool seen = false;
    for (Index c = 0; c < chosen && !seen; ++c) seen = (centers.row(c) == x.row(idx));
    if (seen) {
      duplicates.push_back(idx);
    } else {
      centers.row(chosen++) = x.row(idx);
    }
  }
  for (std::size_t k = 0; chosen < num_centers; ++k) {
    centers.row(chosen++) = x.row(duplicates.empty() ? order[k % order.size()] : duplicates[k % duplicates.size()]);
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), 0);
  VectorXd dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < num_centers; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      dist(i) = best_d;
    }

    MatrixXd sums = MatrixXd::Zero(num_centers, x.cols());
    VectorXd counts = VectorXd::Zero(num_centers);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    MatrixXd updated = centers;
    for (Index c = 0; c < num_centers; ++c) {
      if (counts(c) > 0) {
        updated.row(c) = sums.row(c) / counts(c);
      } else {
        Index far = 0;
        dist.maxCoeff(&far);
        updated.row(c) = x.row(far);
        dist(far) = 0.0;
      }
    }
    const double moved = (updated - centers).rowwise().norm().maxCoeff();
    centers = std::move(updated);
    if (moved < tol) break;
  }
  return centers;
}

/// Generator for desk-scale spatio-temporal regression data:
///   y = g_true(x) + r(x) + noise,  r ~ GP(0, k_rbf(residual_alpha, residual_gamma)),
/// where x = (month, lat, lon) scaled to unit-ish ranges and g_true is a
/// random tanh network.
struct SynthConfig {
  int grid_lat = 14;
  int grid_lon = 15;
  int months = 12;
  int trend_hidden = 8;
  double trend_weight_scale = 2.0;
  double trend_amplitude = 1.5;
  double residual_alpha = 0.3;
  double residual_gamma = 2.0;
  double noise_variance = 0.02;
  std::string target_name = "Y";

  Index num_rows() const { return static_cast<Index>(grid_lat) * grid_lon * months; }
  static constexpr Index kMaxRows = 5000;
};

struct GroundTruth {
  VectorXd trend;     // g_true
  VectorXd residual;  // GP draw
  VectorXd truth;     // trend + residual (noise-free target)
};

struct SynthResult {
  Table table;
  GroundTruth truth;
};

namespace detail {

// Model-space coordinates: month and grid indices mapped to roughly [-1, 1].
inline MatrixXd synth_coordinates(const SynthConfig &cfg, const MatrixXd &raw) {
  MatrixXd u(raw.rows(), 3);
  const auto centre = [](double v, double lo, int count) {
    const double half = std::max(1.0, 0.5 * (count - 1));
    return (v - lo) / half - (count > 1 ? 1.0 : 0.0);
  };
  for (Index i = 0; i < raw.rows(); ++i) {
    u(i, 0) = centre(raw(i, 0), 1.0, cfg.months);
    u(i, 1) = centre((raw(i, 1) - 25.0) / 2.5, 0.0, cfg.grid_lat);
    u(i, 2) = centre((raw(i, 2) + 125.0) / 2.5, 0.0, cfg.grid_lon);
  }
  return u;
}

}  // namespace detail

inline SynthResult synth_spatiotemporal(const SynthConfig &cfg, std::uint64_t seed) {
  if (cfg.grid_lat < 1 || cfg.grid_lon < 1 || cfg.months < 1 || cfg.trend_hidden < 1)
    throw ConfigError("synthetic grid sizes must be positive");
  if (cfg.num_rows() > SynthConfig::kMaxRows) throw ConfigError("synthetic data is capped at 5000 rows");
  if (cfg.residual_alpha < 0 || cfg.noise_variance < 0 || !(cfg.residual_gamma > 0))
    throw ConfigError("synthetic residual/noise parameters out of range");

  const Index n = cfg.num_rows();
  MatrixXd raw(n, 3);
  Index r = 0;
  for (int i = 0; i < cfg.grid_lat; ++i)
    for (int j = 0; j < cfg.grid_lon; ++j)
      for (int t = 0; t < cfg.months; ++t) {
        raw(r, 0) = t + 1;
        raw(r, 1) = 25.0 + 2.5 * i;
        raw(r, 2) = -125.0 + 2.5 * j;
        ++r;
      }
  const MatrixXd u = detail::synth_coordinates(cfg, raw);

  std::mt19937_64 trend_rng(derive_seed(seed, "synth-trend"));
  std::normal_distribution<double> n01;
  MlpParams trend = MlpParams::zeros({3, cfg.trend_hidden, 1});
  for (Index h = 0; h < cfg.trend_hidden; ++h) {
    for (Index d = 0; d < 3; ++d) trend.layers[0].weights(h, d) = cfg.trend_weight_scale * n01(trend_rng);
    trend.layers[0].biases(h) = 0.5 * cfg.trend_weight_scale * n01(trend_rng);
    trend.layers[1].weights(0, h) = n01(trend_rng);
  }
  trend.layers[1].weights *= cfg.trend_amplitude / std::sqrt(static_cast<double>(cfg.trend_hidden));

  GroundTruth gt;
  gt.trend = mean_forward(MeanFunction(trend), u);
  gt.residual = VectorXd::Zero(n);
  std::mt19937_64 resid_rng(derive_seed(seed, "synth-residual"));
  if (cfg.residual_alpha > 0.0) {
    const auto factor = chol_psd(gram(u, u, KernelParams::from_values(cfg.residual_alpha, cfg.residual_gamma)));
    VectorXd z(n);
    for (auto &v : z) v = n01(resid_rng);
    gt.residual = factor.lower * z;
  }
  gt.truth = gt.trend + gt.residual;

  std::mt19937_64 noise_rng(derive_seed(seed, "synth-noise"));
  VectorXd y = gt.truth;
  if (cfg.noise_variance > 0.0) {
    const double sd = std::sqrt(cfg.noise_variance);
    for (auto &v : y) v += sd * n01(noise_rng);
  }

  SynthResult out;
  out.table.column_names = {"MON", "LAT", "LON", cfg.target_name};
  out.table.rows.resize(n, 4);
  out.table.rows.leftCols(3) = raw;
  out.table.rows.col(3) = y;
  out.table.location_key = std::make_pair(1, 2);
  out.truth = std::move(gt);
  return out;
}

inline void write_ground_truth(std::ostream &out, const GroundTruth &gt) {
  out << "truth,trend,residual\n" << std::setprecision(17);
  for (Index i = 0; i < gt.truth.size(); ++i) out << gt.truth(i) << ',' << gt.trend(i) << ',' << gt.residual(i) << '\n';
}

}  // namespace neugap
