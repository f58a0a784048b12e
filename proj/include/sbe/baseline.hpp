#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbe/dataset.hpp"
#include "sbe/encoder.hpp"

namespace sbe {

/// Deterministic target-mean encoding, optionally leave-one-out with
/// multiplicative Gaussian noise at training time.
struct TargetMeanOptions {
  bool leave_one_out = false;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

class TargetMeanEncoder {
 public:
  /// Binary or regression targets only.
  static TargetMeanEncoder fit(const Dataset& data, const TargetMeanOptions& options = {});

  /// Encodes the training rows the encoder was fitted on. Leave-one-out
  /// removes each row's own target from its encoding; a category with a
  /// single row falls back to the global mean. Noise multiplies the encoding
  /// by (1 + N(0, sigma^2)).
  EncodedDataset fit_transform(const Dataset& train) const;

  /// Plain conditional means, no noise; unseen or missing categories get
  /// the global mean.
  EncodedDataset transform(const Dataset& data) const;

  double global_mean() const { return global_mean_; }
  /// Conditional mean of a category in a categorical column (by name).
  double category_mean(const std::string& column, const std::string& category) const;

 private:
  struct Stats {
    double sum = 0.0;
    std::size_t count = 0;
  };
  struct ColumnStats {
    std::string name;
    std::unordered_map<std::string, Stats> categories;
  };

  EncodedDataset encode(const Dataset& data, bool training) const;

  Task task_ = Task::binary;
  TargetMeanOptions options_;
  std::vector<ColumnSchema> schema_;
  std::vector<ColumnStats> columns_;
  double global_mean_ = 0.0;
};

}  // namespace sbe
