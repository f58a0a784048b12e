#include "sbe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <system_error>
#include <unordered_set>

#include <boost/math/distributions/chi_squared.hpp>

#include "sbe/random.hpp"

namespace sbe {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::target: return "target";
  }
  return "unknown";
}

ColumnKind parse_column_kind(std::string_view name) {
  if (name == "numeric") return ColumnKind::numeric;
  if (name == "categorical") return ColumnKind::categorical;
  if (name == "target") return ColumnKind::target;
  throw std::invalid_argument("unknown column kind '" + std::string(name) + "'");
}

std::size_t Column::size() const {
  return schema.kind == ColumnKind::categorical ? labels.size() : numbers.size();
}

Dataset::Dataset(Task task, std::vector<Column> columns) : task_(task), columns_(std::move(columns)) {
  validate();
}

void Dataset::validate() {
  if (columns_.empty()) throw std::invalid_argument("dataset has no columns");
  std::unordered_set<std::string> names;
  std::size_t targets = 0;
  rows_ = columns_.front().size();
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& c = columns_[i];
    if (!names.insert(c.schema.name).second) {
      throw std::invalid_argument("duplicate column name '" + c.schema.name + "'");
    }
    if (c.size() != rows_) {
      throw std::invalid_argument("column '" + c.schema.name + "' has " + std::to_string(c.size()) +
                                  " values, expected " + std::to_string(rows_));
    }
    if (c.schema.kind == ColumnKind::categorical ? !c.numbers.empty() : !c.labels.empty()) {
      throw std::invalid_argument("column '" + c.schema.name + "' stores values of the wrong kind");
    }
    if (c.schema.kind == ColumnKind::target) {
      ++targets;
      target_ = i;
    }
  }
  if (targets != 1) throw std::invalid_argument("dataset needs exactly one target column");
  for (double y : target()) {
    if (!std::isfinite(y)) throw std::invalid_argument("target values must be finite");
    if (task_ == Task::binary && y != 0.0 && y != 1.0) {
      throw std::invalid_argument("binary target values must be 0 or 1");
    }
  }
}

std::size_t Dataset::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].schema.name == name) return i;
  }
  throw std::invalid_argument("no column named '" + std::string(name) + "'");
}

void Dataset::set_target(std::vector<double> y) {
  if (y.size() != rows_) throw std::invalid_argument("target length does not match row count");
  columns_[target_].numbers = std::move(y);
  validate();
}

std::vector<std::size_t> Dataset::feature_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i != target_) out.push_back(i);
  }
  return out;
}

std::vector<ColumnSchema> Dataset::feature_schema() const {
  std::vector<ColumnSchema> out;
  for (std::size_t i : feature_indices()) out.push_back(columns_[i].schema);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column out{c.schema, {}, {}};
    if (c.schema.kind == ColumnKind::categorical) {
      out.labels.reserve(rows.size());
      for (std::size_t r : rows) out.labels.push_back(c.labels.at(r));
    } else {
      out.numbers.reserve(rows.size());
      for (std::size_t r : rows) out.numbers.push_back(c.numbers.at(r));
    }
    cols.push_back(std::move(out));
  }
  return Dataset(task_, std::move(cols));
}

// ---------------------------------------------------------------------------
// Generators

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::classification_blobs: return "classification_blobs";
    case GeneratorKind::hastie_quadratic: return "hastie_quadratic";
    case GeneratorKind::linear_regression: return "linear_regression";
  }
  return "unknown";
}

GeneratorKind parse_generator_kind(std::string_view name) {
  if (name == "classification_blobs") return GeneratorKind::classification_blobs;
  if (name == "hastie_quadratic") return GeneratorKind::hastie_quadratic;
  if (name == "linear_regression") return GeneratorKind::linear_regression;
  throw std::invalid_argument("unknown generator kind '" + std::string(name) + "'");
}

void GeneratorSpec::validate() const {
  if (n_rows == 0) throw std::invalid_argument("generator needs at least one row");
  if (n_features == 0) throw std::invalid_argument("generator needs at least one feature");
  if (n_categorical > n_features) {
    throw std::invalid_argument("n_categorical exceeds n_features");
  }
  if (min_bins < 2 || min_bins > max_bins) {
    throw std::invalid_argument("bin range must satisfy 2 <= min_bins <= max_bins");
  }
  if (!categorical_columns.empty()) {
    if (categorical_columns.size() != n_categorical) {
      throw std::invalid_argument("categorical_columns must list exactly n_categorical columns");
    }
    std::set<std::size_t> seen;
    for (std::size_t c : categorical_columns) {
      if (c >= n_features) throw std::invalid_argument("categorical column index out of range");
      if (!seen.insert(c).second) throw std::invalid_argument("duplicate categorical column index");
    }
  }
  if (kind == GeneratorKind::classification_blobs || kind == GeneratorKind::linear_regression) {
    if (n_informative == 0 || n_informative > n_features) {
      throw std::invalid_argument("n_informative must be in [1, n_features]");
    }
  }
  if (kind == GeneratorKind::classification_blobs) {
    if (clusters_per_class == 0) throw std::invalid_argument("clusters_per_class must be positive");
    if (n_informative < 63 && (std::uint64_t{1} << n_informative) < 2 * clusters_per_class) {
      throw std::invalid_argument("2^n_informative must be at least 2 * clusters_per_class");
    }
    if (!(class_sep > 0.0)) throw std::invalid_argument("class_sep must be positive");
    if (!(flip_y >= 0.0 && flip_y <= 1.0)) throw std::invalid_argument("flip_y must be in [0, 1]");
  }
  if (kind == GeneratorKind::linear_regression && !(noise >= 0.0)) {
    throw std::invalid_argument("noise must be non-negative");
  }
}

double chi_squared_median(std::size_t dof) {
  if (dof == 0) throw std::invalid_argument("chi-squared needs positive degrees of freedom");
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(dof)), 0.5);
}

namespace {

// Stream purposes inside the generator.
enum : std::uint64_t { kFeatures = 0, kLabels = 1, kLayout = 2, kWeights = 3 };

std::vector<std::vector<double>> blobs(const GeneratorSpec& spec, std::vector<double>& y) {
  Stream layout(derive_stream(spec.seed, kLayout, 0, 0));
  const std::size_t n_clusters = 2 * spec.clusters_per_class;

  std::vector<std::vector<double>> centroids;
  std::set<std::vector<double>> used;
  while (centroids.size() < n_clusters) {
    std::vector<double> v(spec.n_informative);
    for (double& x : v) x = (layout.next_u64() >> 63) ? spec.class_sep : -spec.class_sep;
    if (used.insert(v).second) centroids.push_back(std::move(v));
  }

  // Balanced cluster assignment, then shuffled row order.
  std::vector<std::size_t> cluster(spec.n_rows);
  for (std::size_t i = 0; i < spec.n_rows; ++i) cluster[i] = i % n_clusters;
  for (std::size_t i = spec.n_rows; i > 1; --i) std::swap(cluster[i - 1], cluster[layout.below(i)]);

  std::vector<std::vector<double>> x(spec.n_features, std::vector<double>(spec.n_rows));
  Stream noise(derive_stream(spec.seed, kFeatures, 0, 0));
  Stream flips(derive_stream(spec.seed, kLabels, 0, 0));
  y.assign(spec.n_rows, 0.0);
  for (std::size_t i = 0; i < spec.n_rows; ++i) {
    const auto& centre = centroids[cluster[i]];
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      x[j][i] = (j < spec.n_informative ? centre[j] : 0.0) + noise.normal();
    }
    y[i] = static_cast<double>(cluster[i] % 2);
    const double u = flips.uniform();
    const double bit = static_cast<double>(flips.next_u64() >> 63);
    if (u < spec.flip_y) y[i] = bit;
  }
  return x;
}

std::vector<std::vector<double>> hastie(const GeneratorSpec& spec, std::vector<double>& y) {
  const double threshold = chi_squared_median(spec.n_features);
  std::vector<std::vector<double>> x(spec.n_features, std::vector<double>(spec.n_rows));
  Stream noise(derive_stream(spec.seed, kFeatures, 0, 0));
  y.assign(spec.n_rows, 0.0);
  for (std::size_t i = 0; i < spec.n_rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      x[j][i] = noise.normal();
      ss += x[j][i] * x[j][i];
    }
    y[i] = ss > threshold ? 1.0 : 0.0;
  }
  return x;
}

std::vector<std::vector<double>> linear(const GeneratorSpec& spec, std::vector<double>& y) {
  Stream weights(derive_stream(spec.seed, kWeights, 0, 0));
  std::vector<double> w(spec.n_informative);
  for (double& v : w) v = weights.normal();
  std::vector<std::vector<double>> x(spec.n_features, std::vector<double>(spec.n_rows));
  Stream noise(derive_stream(spec.seed, kFeatures, 0, 0));
  Stream eps(derive_stream(spec.seed, kLabels, 0, 0));
  y.assign(spec.n_rows, 0.0);
  for (std::size_t i = 0; i < spec.n_rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      x[j][i] = noise.normal();
      if (j < spec.n_informative) s += w[j] * x[j][i];
    }
    y[i] = s + spec.noise * eps.normal();
  }
  return x;
}

}  // namespace

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  Task task = Task::binary;
  switch (spec.kind) {
    case GeneratorKind::classification_blobs: x = blobs(spec, y); break;
    case GeneratorKind::hastie_quadratic: x = hastie(spec, y); break;
    case GeneratorKind::linear_regression:
      x = linear(spec, y);
      task = Task::regression;
      break;
  }

  std::vector<std::size_t> categorical = spec.categorical_columns;
  if (categorical.empty()) {
    categorical.resize(spec.n_categorical);
    std::iota(categorical.begin(), categorical.end(), std::size_t{0});
  }
  std::sort(categorical.begin(), categorical.end());

  Stream bin_counts(derive_stream(spec.seed, kLayout, 1, 0));
  std::vector<Column> columns;
  for (std::size_t j = 0; j < spec.n_features; ++j) {
    Column c;
    c.schema.name = "f" + std::to_string(j);
    if (std::binary_search(categorical.begin(), categorical.end(), j)) {
      const std::size_t bins = spec.min_bins + bin_counts.below(spec.max_bins - spec.min_bins + 1);
      c.schema.kind = ColumnKind::categorical;
      c.labels = quantile_bin(x[j], bins).labels;
    } else {
      c.schema.kind = ColumnKind::numeric;
      c.numbers = std::move(x[j]);
    }
    columns.push_back(std::move(c));
  }
  columns.push_back(Column{{"y", ColumnKind::target}, std::move(y), {}});
  return Dataset(task, std::move(columns));
}

BinningResult quantile_bin(std::span<const double> values, std::size_t n_bins) {
  if (n_bins < 2) throw std::invalid_argument("quantile binning needs at least 2 bins");
  if (values.empty()) throw std::invalid_argument("cannot bin an empty column");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("cannot bin non-finite values");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  // Linear-interpolation empirical quantiles.
  const double last = static_cast<double>(sorted.size() - 1);
  std::vector<double> edges;
  for (std::size_t i = 1; i < n_bins; ++i) {
    const double h = last * static_cast<double>(i) / static_cast<double>(n_bins);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double e = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }

  std::vector<std::size_t> raw(values.size());
  std::vector<std::size_t> counts(edges.size() + 1, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    raw[i] = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), values[i]) - edges.begin());
    ++counts[raw[i]];
  }

  // Drop empty bins, keeping order; the edge below an empty bin goes with it.
  std::vector<std::size_t> remap(counts.size());
  std::vector<double> kept_edges;
  std::size_t next = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    remap[b] = next;
    if (counts[b] > 0) {
      if (next > 0) kept_edges.push_back(edges[b - 1]);
      ++next;
    }
  }

  BinningResult out;
  out.n_bins = next;
  out.edges = std::move(kept_edges);
  out.bins.resize(values.size());
  out.labels.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.bins[i] = remap[raw[i]];
    out.labels[i] = "b" + std::to_string(out.bins[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, res.ptr);
}

std::string quote_field(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field += ch;
      }
      ++i;
      continue;
    }
    if (ch == '"' && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += ch;
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw std::invalid_argument("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

namespace {

double parse_double(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != last) {
    throw std::invalid_argument("line " + std::to_string(line) + ": non-numeric value '" + cell +
                                "' in numeric column '" + column + "'");
  }
  return v;
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvSchema& schema) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw std::invalid_argument("CSV is empty; a header row is required");
  const auto& header = records.front();

  auto position = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  if (position(schema.target) < 0) {
    throw std::invalid_argument("CSV header is missing or lacks the target column '" + schema.target + "'");
  }
  for (const auto& name : schema.categorical) {
    if (position(name) < 0) throw std::invalid_argument("unknown column '" + name + "' in schema");
  }

  std::vector<Column> columns(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    columns[j].schema.name = header[j];
    if (header[j] == schema.target) {
      columns[j].schema.kind = ColumnKind::target;
    } else if (std::find(schema.categorical.begin(), schema.categorical.end(), header[j]) !=
               schema.categorical.end()) {
      columns[j].schema.kind = ColumnKind::categorical;
    } else {
      columns[j].schema.kind = ColumnKind::numeric;
    }
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty() && header.size() > 1) continue;  // blank line
    if (rec.size() != header.size()) {
      throw std::invalid_argument("line " + std::to_string(r + 1) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(rec.size()));
    }
    for (std::size_t j = 0; j < rec.size(); ++j) {
      auto& c = columns[j];
      if (c.schema.kind == ColumnKind::categorical) {
        c.labels.push_back(rec[j]);
      } else {
        c.numbers.push_back(parse_double(rec[j], r + 1, c.schema.name));
      }
    }
  }
  return Dataset(schema.task, std::move(columns));
}

Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(read_file(path), schema);
}

std::string format_csv(const Dataset& data) {
  std::string out;
  const auto& cols = data.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (j) out += ',';
    out += quote_field(cols[j].schema.name);
  }
  out += '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j) out += ',';
      const auto& c = cols[j];
      out += c.schema.kind == ColumnKind::categorical ? quote_field(c.labels[r]) : format_number(c.numbers[r]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, format_csv(data));
}

CsvSchema schema_of(const Dataset& data) {
  CsvSchema s;
  s.task = data.task();
  for (const auto& c : data.columns()) {
    if (c.schema.kind == ColumnKind::target) s.target = c.schema.name;
    if (c.schema.kind == ColumnKind::categorical) s.categorical.push_back(c.schema.name);
  }
  return s;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sbe
