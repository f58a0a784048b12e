#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sbe/task.hpp"

namespace sbe {

enum class ColumnKind { numeric, categorical, target };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view name);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

/// One column. Numeric and target columns use `numbers`; categorical columns
/// use `labels`, where an empty string marks a missing cell.
struct Column {
  ColumnSchema schema;
  std::vector<double> numbers;
  std::vector<std::string> labels;

  std::size_t size() const;
  friend bool operator==(const Column&, const Column&) = default;
};

/// Tabular data with exactly one target column.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Task task, std::vector<Column> columns);

  Task task() const { return task_; }
  std::size_t rows() const { return rows_; }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t i) const { return columns_.at(i); }
  std::size_t find(std::string_view name) const;  // throws when absent

  std::size_t target_index() const { return target_; }
  const std::vector<double>& target() const { return columns_[target_].numbers; }
  void set_target(std::vector<double> y);

  /// Every non-target column, in table order.
  std::vector<std::size_t> feature_indices() const;
  std::vector<ColumnSchema> feature_schema() const;

  Dataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void validate();

  Task task_ = Task::binary;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
  std::size_t target_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic data

enum class GeneratorKind { classification_blobs, hastie_quadratic, linear_regression };

std::string_view to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(std::string_view name);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::classification_blobs;
  std::size_t n_rows = 10000;
  std::size_t n_features = 10;
  std::size_t n_informative = 5;
  std::size_t n_categorical = 2;
  std::size_t min_bins = 10;
  std::size_t max_bins = 20;
  /// Columns to discretize. Empty picks the first n_categorical columns,
  /// which are informative for every generator kind.
  std::vector<std::size_t> categorical_columns;
  // classification_blobs
  double class_sep = 1.0;
  double flip_y = 0.01;
  std::size_t clusters_per_class = 2;
  // linear_regression
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// classification_blobs: isotropic unit Gaussian clusters centred on distinct
/// vertices of the hypercube [-class_sep, class_sep]^n_informative, classes
/// balanced, a flip_y fraction of labels redrawn at random, remaining columns
/// pure noise.
/// hastie_quadratic: standard normal features, label 1 iff sum of squares
/// exceeds the chi-squared(n_features) median.
/// linear_regression: y = w . x_informative + noise * N(0, 1), w ~ N(0, 1).
Dataset generate(const GeneratorSpec& spec);

/// Median of the chi-squared distribution; the hastie_quadratic threshold.
double chi_squared_median(std::size_t dof);

struct BinningResult {
  std::vector<std::string> labels;  // "b0" .. "b{n_bins-1}"
  std::vector<std::size_t> bins;    // bin index per value
  std::vector<double> edges;        // interior edges; bin = #edges <= x
  std::size_t n_bins = 0;           // bins actually produced
};

/// Quantile discretization with edges at the empirical i / n_bins quantiles.
/// Duplicate edges and empty bins are merged away; n_bins reports the count
/// actually produced (1 for a constant column).
BinningResult quantile_bin(std::span<const double> values, std::size_t n_bins);

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
  std::string target;
  Task task = Task::binary;
  std::vector<std::string> categorical;  // all other columns are numeric
};

Dataset parse_csv(std::string_view text, const CsvSchema& schema);
Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema);
std::string format_csv(const Dataset& data);
void write_csv(const Dataset& data, const std::filesystem::path& path);

CsvSchema schema_of(const Dataset& data);

/// Shortest decimal that parses back to the same double.
std::string format_number(double value);
/// RFC-4180 field quoting.
std::string quote_field(std::string_view field);
/// Splits CSV text into records; handles quoted commas, quotes and newlines.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);

/// Writes to a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace sbe
