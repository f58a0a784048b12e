#include "sbe/baseline.hpp"

#include <cmath>
#include <stdexcept>

#include "sbe/random.hpp"

namespace sbe {

void TargetMeanOptions::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("noise_sigma must be finite and >= 0");
  }
}

TargetMeanEncoder TargetMeanEncoder::fit(const Dataset& data, const TargetMeanOptions& options) {
  options.validate();
  if (data.task() == Task::multiclass) {
    throw std::invalid_argument("target-mean baseline supports binary and regression targets only");
  }
  if (data.rows() == 0) throw std::invalid_argument("cannot fit an encoder on an empty dataset");

  TargetMeanEncoder enc;
  enc.task_ = data.task();
  enc.options_ = options;
  enc.schema_ = data.feature_schema();
  const auto& y = data.target();
  double total = 0.0;
  for (double v : y) total += v;
  enc.global_mean_ = total / static_cast<double>(y.size());

  for (std::size_t col : data.feature_indices()) {
    const Column& c = data.column(col);
    if (c.schema.kind != ColumnKind::categorical) continue;
    ColumnStats cs;
    cs.name = c.schema.name;
    for (std::size_t r = 0; r < c.labels.size(); ++r) {
      if (c.labels[r].empty()) continue;
      auto& s = cs.categories[c.labels[r]];
      s.sum += y[r];
      ++s.count;
    }
    enc.columns_.push_back(std::move(cs));
  }
  return enc;
}

double TargetMeanEncoder::category_mean(const std::string& column, const std::string& category) const {
  for (const auto& c : columns_) {
    if (c.name != column) continue;
    auto it = c.categories.find(category);
    if (it == c.categories.end()) return global_mean_;
    return it->second.sum / static_cast<double>(it->second.count);
  }
  throw std::invalid_argument("no categorical column named '" + column + "'");
}

EncodedDataset TargetMeanEncoder::fit_transform(const Dataset& train) const { return encode(train, true); }

EncodedDataset TargetMeanEncoder::transform(const Dataset& data) const { return encode(data, false); }

EncodedDataset TargetMeanEncoder::encode(const Dataset& data, bool training) const {
  if (data.feature_schema() != schema_) {
    throw std::invalid_argument("dataset columns do not match the encoder schema");
  }
  const std::size_t n = data.rows();
  const auto features = data.feature_indices();
  const auto& y = data.target();

  EncodedDataset out;
  out.task = task_;
  out.n_classes = task_ == Task::binary ? 2 : 0;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features.size()));
  out.origin_row.resize(n);
  out.draw_index.assign(n, 0);
  out.target = y;
  for (std::size_t i = 0; i < n; ++i) out.origin_row[i] = i;
  for (std::size_t j = 0; j < features.size(); ++j) {
    out.feature_names.push_back(schema_[j].name);
    out.origin_names.push_back(schema_[j].name);
    out.feature_origin.push_back(j);
  }

  std::size_t cat = 0;
  for (std::size_t j = 0; j < features.size(); ++j) {
    const Column& c = data.column(features[j]);
    const auto col = static_cast<Eigen::Index>(j);
    if (c.schema.kind != ColumnKind::categorical) {
      for (std::size_t r = 0; r < n; ++r) out.features(static_cast<Eigen::Index>(r), col) = c.numbers[r];
      continue;
    }
    const ColumnStats& cs = columns_[cat++];
    for (std::size_t r = 0; r < n; ++r) {
      double value = global_mean_;
      auto it = c.labels[r].empty() ? cs.categories.end() : cs.categories.find(c.labels[r]);
      if (it != cs.categories.end()) {
        const Stats& s = it->second;
        if (training && options_.leave_one_out) {
          if (s.count > 1) value = (s.sum - y[r]) / static_cast<double>(s.count - 1);
        } else {
          value = s.sum / static_cast<double>(s.count);
        }
      }
      if (training && options_.noise_sigma > 0.0) {
        Stream stream(derive_stream(options_.seed, j, r, 0));
        value *= 1.0 + options_.noise_sigma * stream.normal();
      }
      out.features(static_cast<Eigen::Index>(r), col) = value;
    }
  }
  return out;
}

}  // namespace sbe
