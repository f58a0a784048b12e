#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sbe/task.hpp"

namespace sbe {

/// Beta(alpha, beta): alpha - 1 pseudo-successes, beta - 1 pseudo-failures.
struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

/// Dirichlet over the classes, in the model's class order.
struct DirichletParams {
  std::vector<double> alphas;

  friend bool operator==(const DirichletParams&, const DirichletParams&) = default;
};

/// Normal-Gamma over (mean, precision). nu is the pseudo-observation count of
/// the mean; alpha and beta are shape and rate of the precision.
struct NormalGammaParams {
  double mu0 = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  /// Samplable: every scale parameter strictly positive.
  bool proper() const { return nu > 0.0 && alpha > 0.0 && beta > 0.0; }

  friend bool operator==(const NormalGammaParams&, const NormalGammaParams&) = default;
};

using ConjugateParams = std::variant<BetaParams, DirichletParams, NormalGammaParams>;

Task task_of(const ConjugateParams& params);
bool is_proper(const ConjugateParams& params);

/// Sufficient statistics of a target sample. Used both for the whole
/// training set (the prior) and for the rows of one category.
///
/// binary:     n and sum_y (success count)
/// multiclass: n and class_counts (indexed by class position)
/// regression: n, mean and sum_sq_dev, accumulated with Welford updates
class TargetStats {
 public:
  TargetStats() = default;
  TargetStats(Task task, std::size_t n_classes = 0);

  void add(double y);
  void merge(const TargetStats& other);

  Task task() const { return task_; }
  std::size_t n() const { return n_; }
  double sum_y() const { return sum_y_; }
  const std::vector<double>& class_counts() const { return class_counts_; }
  double mean() const { return mean_; }
  double sum_sq_dev() const { return sum_sq_dev_; }

  /// Builds statistics directly; used by deserialization and tests.
  static TargetStats binary(std::size_t n, double successes);
  static TargetStats multiclass(std::vector<double> counts);
  static TargetStats regression(std::size_t n, double mean, double sum_sq_dev);

 private:
  Task task_ = Task::binary;
  std::size_t n_ = 0;
  double sum_y_ = 0.0;
  std::vector<double> class_counts_;
  double mean_ = 0.0;
  double sum_sq_dev_ = 0.0;
};

using TargetSummary = TargetStats;
using CategoryStats = TargetStats;

TargetStats summarize(Task task, std::span<const double> y, std::size_t n_classes = 0);

/// Prior from global target statistics, scaled down by gamma. gamma = 0 is
/// the uninformative prior.
ConjugateParams scaled_prior(const TargetSummary& summary, double gamma);

/// Conjugate update of prior with the statistics of one category.
ConjugateParams posterior_update(const ConjugateParams& prior, const CategoryStats& stats);

/// Lower bound applied to a regression posterior rate so a category with a
/// constant target under a flat prior can still be sampled.
double regression_rate_floor(double rate);

/// Beta: [p]. Dirichlet: class probabilities. Normal-Gamma: [E mu, E tau].
std::vector<double> posterior_mean(const ConjugateParams& params);

/// Covariance of the same parameter vector posterior_mean returns.
/// Normal-Gamma needs alpha > 1 (finite marginal variance of mu).
Eigen::MatrixXd posterior_covariance(const ConjugateParams& params);

}  // namespace sbe
