#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mbnn/likelihood.hpp"

namespace mbnn {

struct DatasetPair {
  Dataset train;
  Dataset test;
};

struct Table {
  std::vector<std::string> header;
  Matrix values;  // rows x columns
};

// Numeric CSV with a header row. Empty, non-numeric or NaN cells raise
// IngestError naming the 1-based data row and the column.
Table read_numeric_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Per-column mean/scale fitted on the given rows. A zero-variance column gets
// scale 1 and a message appended to `warnings`.
Standardization fit_standardization(const Matrix& x, const Vector& y,
                                    std::vector<std::string>* warnings = nullptr);
Dataset standardize(const Standardization& s, const Matrix& x, const Vector& y);
Matrix destandardize_inputs(const Standardization& s, const Matrix& x_std);
Vector destandardize_targets(const Standardization& s, const Vector& y_std);

// x ~ Uniform(-4, 4), y = x^3 + eps, eps ~ N(0, 9). Raw (unstandardized) values.
void gen_polynomial_raw(std::size_t n, std::uint64_t seed, Matrix& x, Vector& y);
// Train/test pair standardized with the train transform (inputs and targets).
DatasetPair gen_polynomial(std::size_t n_train, std::size_t n_test, std::uint64_t seed);

// Friedman #1 benchmark: d >= 5 uniform inputs, only the first five matter.
DatasetPair gen_friedman(std::size_t n_train, std::size_t n_test, int dim, double noise_sd,
                         std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  int repetition = 0;
};

// Reproducible random split of a table; standardization fitted on train only.
DatasetPair split_table(const Table& table, int target_column, const SplitSpec& spec,
                        std::vector<std::string>* warnings = nullptr);
DatasetPair load_csv(const std::filesystem::path& path, const std::string& target_column,
                     const SplitSpec& spec, std::vector<std::string>* warnings = nullptr);

struct TimeSeries {
  Vector time;
  Vector y;
  Matrix x;  // T x d regressors
};

TimeSeries load_time_series_csv(const std::filesystem::path& path, const std::string& time_column,
                                const std::string& target_column);
// Synthetic nowcasting series: AR(1) local trend plus a sparse nonlinear
// response to d regressors.
TimeSeries gen_bsts_series(std::size_t length, int dim, std::uint64_t seed);

}  // namespace mbnn
