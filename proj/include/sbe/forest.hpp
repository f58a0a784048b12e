#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sbe/task.hpp"

namespace sbe {

struct ForestSpec {
  std::size_t n_trees = 100;
  std::size_t max_depth = 64;
  std::size_t min_leaf = 1;
  /// Candidate features per split; 0 means sqrt(d) for classification and
  /// d for regression.
  std::size_t features_per_split = 0;
  /// Split thresholds per feature are chosen among at most max_bins - 1
  /// quantile cut points of the training column (max_bins <= 256).
  std::size_t max_bins = 256;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// CART ensemble: Gini impurity for classification, squared error for
/// regression, bootstrap rows per tree and a random feature subset per split.
class RandomForest {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t value = 0;  // offset into Tree::values (leaves only)
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<double> values;
  };

  static RandomForest train(const ForestSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y,
                            Task task, std::size_t n_classes);

  /// Classification: averaged leaf class frequencies (rows x classes).
  /// Regression: averaged leaf means (rows x 1).
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;

  /// Mean decrease in impurity, normalized per tree, averaged over trees
  /// that split at least once, then normalized to sum to 1.
  const std::vector<double>& importance() const { return importance_; }

  Task task() const { return task_; }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_outputs() const { return n_outputs_; }
  const std::vector<Tree>& trees() const { return trees_; }

  static RandomForest from_parts(Task task, std::size_t n_features, std::size_t n_outputs,
                                 std::vector<Tree> trees, std::vector<double> importance);

 private:
  Task task_ = Task::binary;
  std::size_t n_features_ = 0;
  std::size_t n_outputs_ = 0;
  std::vector<Tree> trees_;
  std::vector<double> importance_;
};

}  // namespace sbe
