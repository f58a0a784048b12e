#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sbe/baseline.hpp"
#include "sbe/dataset.hpp"
#include "sbe/encoder.hpp"
#include "sbe/learner.hpp"

namespace sbe {

/// Either the sampling encoder or the target-mean baseline.
using EncoderChoice = std::variant<EncoderConfig, TargetMeanOptions>;

struct Pipeline {
  EncoderChoice encoder;
  LearnerSpec learner;
};

enum class Metric { accuracy, r2 };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

/// Fold id per row. Classification folds are stratified: each class is
/// shuffled and dealt round-robin, so every fold sees every class.
std::vector<std::size_t> make_folds(const Dataset& data, std::size_t folds, std::uint64_t seed);
std::vector<std::size_t> rows_outside(std::span<const std::size_t> fold_of, std::size_t fold);
std::vector<std::size_t> rows_inside(std::span<const std::size_t> fold_of, std::size_t fold);

struct FittedPipeline {
  std::variant<EncoderModel, TargetMeanEncoder> encoder;
  Model learner;
  Task task = Task::binary;
  /// Target label of each output column (classification).
  std::vector<double> class_labels;
  std::size_t k_draws = 1;
  EncodedDataset layout;  // training encoding, kept for importance reports
};

FittedPipeline fit_pipeline(const Pipeline& pipeline, const Dataset& train);

/// Classification: averaged class probabilities. Regression: one column.
Eigen::MatrixXd predict_pipeline(const FittedPipeline& fitted, const Dataset& data, std::uint64_t salt = 1);

/// Accuracy takes the argmax over averaged probabilities.
double score(Metric metric, const Eigen::MatrixXd& predictions, std::span<const double> truth,
             std::span<const double> class_labels);

struct CvResult {
  std::vector<double> fold_scores;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over folds
};

/// Fits encoder and learner on each training fold only and scores the
/// held-out fold. Per-fold seeds are derived from the pipeline seeds and the
/// fold index.
CvResult cross_validate(const Pipeline& pipeline, const Dataset& data, std::size_t folds, Metric metric,
                        std::uint64_t fold_seed);

/// The pipeline actually fitted for one fold (seeds specialized to it).
Pipeline fold_pipeline(const Pipeline& pipeline, std::size_t fold);

/// Encoder fitted for one fold, exactly as cross_validate fits it.
EncoderModel fit_fold_encoder(const Dataset& data, std::span<const std::size_t> fold_of, std::size_t fold,
                              const EncoderConfig& config);

/// Hyperparameters that sweeps vary one at a time.
enum class SweepParam { k_draws, gamma, mapping, noise_sigma };

SweepParam parse_sweep_param(std::string_view name);
std::string_view to_string(SweepParam p);
/// Column header used for the swept value in sweep reports.
std::string_view sweep_column(SweepParam p);

Pipeline with_param(const Pipeline& pipeline, SweepParam param, std::string_view value);

struct SweepRow {
  std::string value;
  CvResult result;
};

std::vector<SweepRow> sweep(const Pipeline& base, const Dataset& data, SweepParam param,
                            std::span<const std::string> values, std::size_t folds, Metric metric,
                            std::uint64_t fold_seed);

struct TuneResult {
  std::size_t best_index = 0;
  std::vector<CvResult> results;
};

/// Cross-validates every candidate; the best mean score wins, ties to the
/// earliest candidate.
TuneResult tune(std::span<const Pipeline> candidates, const Dataset& data, std::size_t folds, Metric metric,
                std::uint64_t fold_seed);

}  // namespace sbe
