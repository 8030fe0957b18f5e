#include "mbnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mbnn/errors.hpp"
#include "mbnn/rng.hpp"

namespace mbnn {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r\"");
    const auto e = cell.find_last_not_of(" \t\r\"");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

int column_index(const Table& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw IngestError("column '" + name + "' not found");
  return static_cast<int>(it - t.header.begin());
}

}  // namespace

Table read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string() + " is empty");
  t.header = split_line(line);
  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row_no;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw IngestError("row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw IngestError("missing or non-numeric value at row " + std::to_string(row_no) +
                          ", column '" + t.header[c] + "'");
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

Standardization fit_standardization(const Matrix& x, const Vector& y,
                                    std::vector<std::string>* warnings) {
  Standardization s;
  const double n = static_cast<double>(x.rows());
  s.x_mean = x.colwise().mean().transpose();
  s.x_scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.x_mean[c]).square().sum() / n;
    if (var > 0) {
      s.x_scale[c] = std::sqrt(var);
    } else {
      s.x_scale[c] = 1.0;
      if (warnings) warnings->push_back("input column " + std::to_string(c) + " is constant; scale set to 1");
    }
  }
  s.y_mean = y.mean();
  const double yvar = (y.array() - s.y_mean).square().sum() / n;
  if (yvar > 0) {
    s.y_scale = std::sqrt(yvar);
  } else {
    s.y_scale = 1.0;
    if (warnings) warnings->push_back("target is constant; scale set to 1");
  }
  return s;
}

Dataset standardize(const Standardization& s, const Matrix& x, const Vector& y) {
  Dataset d;
  d.x = (x.rowwise() - s.x_mean.transpose()).array().rowwise() / s.x_scale.transpose().array();
  d.y = (y.array() - s.y_mean) / s.y_scale;
  d.transform = s;
  return d;
}

Matrix destandardize_inputs(const Standardization& s, const Matrix& x_std) {
  Matrix x = x_std.array().rowwise() * s.x_scale.transpose().array();
  x.rowwise() += s.x_mean.transpose();
  return x;
}

Vector destandardize_targets(const Standardization& s, const Vector& y_std) {
  return (y_std.array() * s.y_scale + s.y_mean).matrix();
}

void gen_polynomial_raw(std::size_t n, std::uint64_t seed, Matrix& x, Vector& y) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-4.0, 4.0);
  std::normal_distribution<double> noise(0.0, 3.0);
  x.resize(static_cast<Eigen::Index>(n), 1);
  y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = unif(rng);
    x(static_cast<Eigen::Index>(i), 0) = xi;
    y[static_cast<Eigen::Index>(i)] = xi * xi * xi + noise(rng);
  }
}

DatasetPair gen_polynomial(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw InvalidInput("dataset sizes must be >= 1");
  Matrix xtr, xte;
  Vector ytr, yte;
  gen_polynomial_raw(n_train, derive_seed(seed, 0), xtr, ytr);
  gen_polynomial_raw(n_test, derive_seed(seed, 1), xte, yte);
  const Standardization s = fit_standardization(xtr, ytr);
  return {standardize(s, xtr, ytr), standardize(s, xte, yte)};
}

DatasetPair gen_friedman(std::size_t n_train, std::size_t n_test, int dim, double noise_sd,
                         std::uint64_t seed) {
  if (dim < 5) throw InvalidInput("Friedman data needs at least 5 inputs");
  auto make = [&](std::size_t n, std::uint64_t s, Matrix& x, Vector& y) {
    Rng rng(s);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, noise_sd);
    x.resize(static_cast<Eigen::Index>(n), dim);
    y.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (int c = 0; c < dim; ++c) x(i, c) = unif(rng);
      y[i] = 10.0 * std::sin(std::numbers::pi * x(i, 0) * x(i, 1)) +
             20.0 * (x(i, 2) - 0.5) * (x(i, 2) - 0.5) + 10.0 * x(i, 3) + 5.0 * x(i, 4) +
             noise(rng);
    }
  };
  Matrix xtr, xte;
  Vector ytr, yte;
  make(n_train, derive_seed(seed, 0), xtr, ytr);
  make(n_test, derive_seed(seed, 1), xte, yte);
  const Standardization s = fit_standardization(xtr, ytr);
  return {standardize(s, xtr, ytr), standardize(s, xte, yte)};
}

DatasetPair split_table(const Table& table, int target_column, const SplitSpec& spec,
                        std::vector<std::string>* warnings) {
  const Eigen::Index n = table.values.rows();
  if (n < 2) throw IngestError("need at least two rows to split");
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1))
    throw InvalidInput("train fraction must lie in (0, 1)");
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(spec.repetition)));
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<Eigen::Index>(std::floor(spec.train_fraction * n + 1e-9));
  n_train = std::clamp<Eigen::Index>(n_train, 1, n - 1);

  const Eigen::Index d = table.values.cols() - 1;
  auto gather = [&](Eigen::Index from, Eigen::Index to, Matrix& x, Vector& y) {
    x.resize(to - from, d);
    y.resize(to - from);
    for (Eigen::Index r = from; r < to; ++r) {
      const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(r)]);
      Eigen::Index c_out = 0;
      for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
        if (c == target_column) y[r - from] = table.values(src, c);
        else x(r - from, c_out++) = table.values(src, c);
      }
    }
  };
  Matrix xtr, xte;
  Vector ytr, yte;
  gather(0, n_train, xtr, ytr);
  gather(n_train, n, xte, yte);
  const Standardization s = fit_standardization(xtr, ytr, warnings);
  return {standardize(s, xtr, ytr), standardize(s, xte, yte)};
}

DatasetPair load_csv(const std::filesystem::path& path, const std::string& target_column,
                     const SplitSpec& spec, std::vector<std::string>* warnings) {
  const Table t = read_numeric_csv(path);
  return split_table(t, column_index(t, target_column), spec, warnings);
}

TimeSeries load_time_series_csv(const std::filesystem::path& path, const std::string& time_column,
                                const std::string& target_column) {
  const Table t = read_numeric_csv(path);
  const int tc = column_index(t, time_column);
  const int yc = column_index(t, target_column);
  TimeSeries ts;
  ts.time = t.values.col(tc);
  ts.y = t.values.col(yc);
  const Eigen::Index d = t.values.cols() - 2;
  ts.x.resize(t.values.rows(), d);
  Eigen::Index out = 0;
  for (Eigen::Index c = 0; c < t.values.cols(); ++c)
    if (c != tc && c != yc) ts.x.col(out++) = t.values.col(c);
  return ts;
}

TimeSeries gen_bsts_series(std::size_t length, int dim, std::uint64_t seed) {
  if (dim < 1) throw InvalidInput("series needs at least one regressor");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TimeSeries ts;
  const auto T = static_cast<Eigen::Index>(length);
  ts.time.resize(T);
  ts.y.resize(T);
  ts.x.resize(T, dim);
  double mu = normal(rng);
  for (Eigen::Index t = 0; t < T; ++t) {
    ts.time[t] = static_cast<double>(t + 1);
    for (int c = 0; c < dim; ++c) {
      const double prev = t > 0 ? ts.x(t - 1, c) : 0.0;
      ts.x(t, c) = 0.8 * prev + 0.6 * normal(rng);
    }
    mu = 0.95 * mu + std::sqrt(0.1) * normal(rng);
    const double signal = 1.5 * std::tanh(ts.x(t, 0)) + 0.8 * std::max(0.0, ts.x(t, 1 % dim)) -
                          0.5 * ts.x(t, 0) * ts.x(t, (2 % dim));
    ts.y[t] = mu + signal + 0.3 * normal(rng);
  }
  return ts;
}

}  // namespace mbnn
