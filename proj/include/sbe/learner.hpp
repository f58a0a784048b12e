#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sbe/encoder.hpp"
#include "sbe/forest.hpp"
#include "sbe/task.hpp"

namespace sbe {

/// Ridge regression solved through the normal equations; the intercept is
/// not penalized.
struct RidgeSpec {
  double lambda = 0.0;
};

/// Logistic (softmax for more than two classes) regression fitted by
/// full-batch gradient descent on standardized features. The loss is
/// averaged per row, so the penalty keeps its meaning when rows are
/// replicated K times.
struct LogisticSpec {
  double learning_rate = 0.5;
  std::size_t epochs = 2000;
  double lambda = 0.0;
};

using LearnerSpec = std::variant<RidgeSpec, LogisticSpec, ForestSpec>;

void validate(const LearnerSpec& spec);
std::string_view learner_name(const LearnerSpec& spec);

class RidgeModel {
 public:
  static RidgeModel train(const RidgeSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y);
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  /// Normalized |coefficient| * feature standard deviation.
  std::vector<double> importance() const;

  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  Eigen::VectorXd feature_scale;
};

class LogisticModel {
 public:
  static LogisticModel train(const LogisticSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y,
                             std::size_t n_classes);
  /// Class probabilities, rows x classes.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  /// Normalized |standardized coefficient|, summed over classes.
  std::vector<double> importance() const;

  std::size_t n_classes = 2;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  /// Standardized-scale weights: d x 1 for two classes, d x C otherwise.
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  std::size_t epochs_run = 0;
  double final_gradient_norm = 0.0;
};

using Model = std::variant<RidgeModel, LogisticModel, RandomForest>;

/// y holds 0/1 for binary, class positions for multiclass, values for
/// regression. Ridge needs a regression task, logistic a classification task.
Model train(const LearnerSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y, Task task,
            std::size_t n_classes);
Model train(const LearnerSpec& spec, const EncodedDataset& data);

Eigen::MatrixXd predict(const Model& model, const Eigen::MatrixXd& x);
std::size_t n_features(const Model& model);

/// Per-feature importance, non-negative and summing to 1 (all zeros if the
/// model never uses any feature).
std::vector<double> importance(const Model& model);

struct FeatureImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> per_feature;
  /// Encoded columns summed back onto the column they came from.
  std::vector<std::string> origin_names;
  std::vector<double> per_origin;
};

FeatureImportanceReport importance_report(const Model& model, const EncodedDataset& layout);

std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view text);

}  // namespace sbe
