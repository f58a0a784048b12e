#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "sbe/conjugate.hpp"
#include "sbe/dataset.hpp"
#include "sbe/random.hpp"

namespace sbe {

/// Feature map applied to each posterior draw.
enum class Mapping { mean_only, mean_and_precision, polynomial2, weight_of_evidence };

/// How a category absent from training is encoded.
enum class UnseenPolicy { sample_from_prior, prior_mean };

/// `posterior_mean` replaces every draw by the posterior mean. This turns the
/// encoder into deterministic Bayesian target encoding.
enum class DrawMode { sample, posterior_mean };

std::string_view to_string(Mapping m);
std::string_view to_string(UnseenPolicy p);
std::string_view to_string(DrawMode m);
Mapping parse_mapping(std::string_view name);
UnseenPolicy parse_unseen_policy(std::string_view name);
DrawMode parse_draw_mode(std::string_view name);

struct EncoderConfig {
  double gamma = 0.0;
  std::size_t k_draws = 1;
  Mapping mapping = Mapping::mean_only;
  std::uint64_t seed = 0;
  UnseenPolicy unseen_policy = UnseenPolicy::sample_from_prior;
  DrawMode draw_mode = DrawMode::sample;

  void validate() const;
};

/// Dimension of the mapped feature vector for one categorical column.
std::size_t mapping_dimension(Mapping mapping, Task task, std::size_t n_classes);

/// Feature vector of one draw.
///
///   mean_only           binary [p]; multiclass [pi_1 .. pi_{m-1}]; regression [mu]
///   mean_and_precision  regression [mu, tau]; binary [p, alpha + beta];
///                       multiclass [pi_1 .. pi_{m-1}, sum(alpha)]
///   polynomial2         base components, their squares, then pairwise
///                       products (i < j). Base is [p], [pi_1 .. pi_{m-1}] or
///                       [mu, tau]
///   weight_of_evidence  binary only: [ln(p / (1 - p))], p clamped to
///                       [1e-12, 1 - 1e-12]
///
/// `posterior` supplies the draw-independent pseudo-count for the
/// mean_and_precision classification variants.
std::vector<double> apply_mapping(Mapping mapping, const PosteriorDraw& draw,
                                  const ConjugateParams& posterior);

/// Posteriors of one categorical column.
struct ColumnPosteriors {
  std::string name;
  std::vector<std::string> categories;  // first-appearance order
  std::vector<std::size_t> counts;      // training rows per category
  std::vector<ConjugateParams> posteriors;

  /// Index of a category, or -1 when unseen.
  std::ptrdiff_t lookup(const std::string& category) const;
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fitted sampling encoder.
class EncoderModel {
 public:
  Task task = Task::binary;
  EncoderConfig config;
  std::string target_name;
  TargetSummary summary;
  ConjugateParams prior;
  /// Multiclass only: target label of each class position.
  std::vector<double> class_labels;
  /// Every non-target column in table order.
  std::vector<ColumnSchema> schema;
  /// One entry per categorical column, in schema order.
  std::vector<ColumnPosteriors> columns;

  std::size_t n_classes() const;
  /// Class position of a target label (multiclass), or the value itself.
  double encode_target(double y) const;

  std::vector<std::string> feature_names() const;
  /// For each encoded feature, the index into `schema` it came from.
  std::vector<std::size_t> feature_origins() const;

  /// Parameters used for a category not seen in training: the prior, or
  /// for an improper regression prior, the repaired version described on
  /// UnseenPolicy.
  ConjugateParams unseen_params() const;

  /// Self-describing text document; see README for the key layout.
  std::string serialize() const;
  static EncoderModel deserialize(std::string_view text);
};

/// Fits the prior on the full target and a posterior per (column, category).
/// Empty categorical cells are ignored.
EncoderModel fit(const Dataset& data, const EncoderConfig& config);

/// K encoded copies of the data. Row k * N + n is copy k of origin row n.
struct EncodedDataset {
  Task task = Task::binary;
  std::size_t n_classes = 0;  // classification only
  Eigen::MatrixXd features;
  std::vector<std::string> feature_names;
  /// Index into origin_names for every feature column.
  std::vector<std::size_t> feature_origin;
  std::vector<std::string> origin_names;
  std::vector<std::size_t> origin_row;
  std::vector<std::size_t> draw_index;
  /// Binary 0/1, multiclass class position, regression value.
  std::vector<double> target;

  std::size_t rows() const { return origin_row.size(); }
};

/// Encodes draws [first_draw, first_draw + k_draws). The draw for (row n,
/// column m, copy k) comes from derive_stream(stream_seed(seed, salt), m, n, k).
EncodedDataset transform_draws(const EncoderModel& model, const Dataset& data, std::size_t first_draw,
                               std::size_t k_draws, std::uint64_t salt = 0);

EncodedDataset transform_augment(const EncoderModel& model, const Dataset& data, std::size_t k_draws,
                                 std::uint64_t salt = 0);

/// Master seed of one transform pass.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return mix64(seed + kGolden * (salt + 1));
}

/// Maps a feature matrix to per-row outputs: class probabilities for
/// classifiers, a single column for regressors.
using BatchPredictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Mean of the learner outputs over K encoded copies of each row.
Eigen::MatrixXd predict_average(const EncoderModel& model, const BatchPredictor& predict,
                                const Dataset& data, std::size_t k_draws, std::uint64_t salt = 1);

}  // namespace sbe
