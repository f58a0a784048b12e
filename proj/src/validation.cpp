#include "sbe/validation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sbe/random.hpp"

namespace sbe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double parse_number(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("'" + std::string(text) + "' is not a number");
  }
  return v;
}

std::size_t parse_count(std::string_view text) {
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("'" + std::string(text) + "' is not a non-negative integer");
  }
  return v;
}

}  // namespace

std::string_view to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "r2"; }

Metric parse_metric(std::string_view name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "r2") return Metric::r2;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

std::vector<std::size_t> make_folds(const Dataset& data, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  const std::size_t n = data.rows();
  if (n < folds) throw std::invalid_argument("fewer rows than folds");
  const auto& y = data.target();

  std::vector<std::vector<std::size_t>> groups;
  if (is_classification(data.task())) {
    std::vector<double> labels;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::find(labels.begin(), labels.end(), y[i]);
      if (it == labels.end()) {
        labels.push_back(y[i]);
        groups.emplace_back();
        it = labels.end() - 1;
      }
      groups[static_cast<std::size_t>(it - labels.begin())].push_back(i);
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].size() < folds) {
        throw std::invalid_argument("class with " + std::to_string(groups[g].size()) +
                                    " rows cannot be stratified over " + std::to_string(folds) + " folds");
      }
    }
  } else {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  std::vector<std::size_t> fold_of(n, 0);
  std::size_t dealt = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& rows = groups[g];
    Stream rng(derive_stream(seed, g, 0, 0));
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    for (std::size_t r : rows) fold_of[r] = dealt++ % folds;
  }
  return fold_of;
}

std::vector<std::size_t> rows_outside(std::span<const std::size_t> fold_of, std::size_t fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> rows_inside(std::span<const std::size_t> fold_of, std::size_t fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

FittedPipeline fit_pipeline(const Pipeline& pipeline, const Dataset& data) {
  validate(pipeline.learner);
  FittedPipeline fitted{EncoderModel{}, RidgeModel{}, data.task(), {}, 1, {}};
  std::visit(overloaded{
                 [&](const EncoderConfig& config) {
                   EncoderModel model = fit(data, config);
                   fitted.layout = transform_augment(model, data, config.k_draws, 0);
                   fitted.k_draws = config.k_draws;
                   if (data.task() == Task::multiclass) {
                     fitted.class_labels = model.class_labels;
                   }
                   fitted.encoder = std::move(model);
                 },
                 [&](const TargetMeanOptions& options) {
                   TargetMeanEncoder enc = TargetMeanEncoder::fit(data, options);
                   fitted.layout = enc.fit_transform(data);
                   fitted.encoder = std::move(enc);
                 },
             },
             pipeline.encoder);
  if (data.task() == Task::binary) fitted.class_labels = {0.0, 1.0};
  fitted.learner = train(pipeline.learner, fitted.layout);
  return fitted;
}

Eigen::MatrixXd predict_pipeline(const FittedPipeline& fitted, const Dataset& data, std::uint64_t salt) {
  const BatchPredictor learner = [&](const Eigen::MatrixXd& x) { return predict(fitted.learner, x); };
  return std::visit(overloaded{
                        [&](const EncoderModel& model) {
                          return predict_average(model, learner, data, fitted.k_draws, salt);
                        },
                        [&](const TargetMeanEncoder& enc) { return learner(enc.transform(data).features); },
                    },
                    fitted.encoder);
}

double score(Metric metric, const Eigen::MatrixXd& predictions, std::span<const double> truth,
             std::span<const double> class_labels) {
  const auto n = static_cast<std::size_t>(predictions.rows());
  if (n != truth.size() || n == 0) throw std::invalid_argument("prediction and target lengths differ");
  if (metric == Metric::accuracy) {
    if (static_cast<std::size_t>(predictions.cols()) != class_labels.size()) {
      throw std::invalid_argument("accuracy needs one probability column per class");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      predictions.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      if (class_labels[static_cast<std::size_t>(best)] == truth[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
  }
  if (predictions.cols() != 1) throw std::invalid_argument("r2 needs a single prediction column");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(n);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = truth[i] - predictions(static_cast<Eigen::Index>(i), 0);
    ss_res += e * e;
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

Pipeline fold_pipeline(const Pipeline& pipeline, std::size_t fold) {
  Pipeline p = pipeline;
  std::visit([&](auto& enc) { enc.seed = mix64(enc.seed + kGolden * (fold + 1)); }, p.encoder);
  if (auto* forest = std::get_if<ForestSpec>(&p.learner)) forest->seed = mix64(forest->seed + kGolden * (fold + 1));
  return p;
}

EncoderModel fit_fold_encoder(const Dataset& data, std::span<const std::size_t> fold_of, std::size_t fold,
                              const EncoderConfig& config) {
  const Pipeline p = fold_pipeline(Pipeline{config, RidgeSpec{}}, fold);
  const auto rows = rows_outside(fold_of, fold);
  return fit(data.subset(rows), std::get<EncoderConfig>(p.encoder));
}

CvResult cross_validate(const Pipeline& pipeline, const Dataset& data, std::size_t folds, Metric metric,
                        std::uint64_t fold_seed) {
  if (metric == Metric::accuracy && data.task() == Task::regression) {
    throw std::invalid_argument("accuracy needs a classification task");
  }
  if (metric == Metric::r2 && data.task() != Task::regression) {
    throw std::invalid_argument("r2 needs a regression task");
  }
  const auto fold_of = make_folds(data, folds, fold_seed);
  CvResult result;
  for (std::size_t f = 0; f < folds; ++f) {
    const Dataset train = data.subset(rows_outside(fold_of, f));
    const Dataset test = data.subset(rows_inside(fold_of, f));
    const FittedPipeline fitted = fit_pipeline(fold_pipeline(pipeline, f), train);
    const Eigen::MatrixXd pred = predict_pipeline(fitted, test, 1);
    result.fold_scores.push_back(score(metric, pred, test.target(), fitted.class_labels));
  }
  const double k = static_cast<double>(folds);
  result.mean = std::accumulate(result.fold_scores.begin(), result.fold_scores.end(), 0.0) / k;
  double ss = 0.0;
  for (double s : result.fold_scores) ss += (s - result.mean) * (s - result.mean);
  result.stddev = std::sqrt(ss / (k - 1.0));
  return result;
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "k_draws" || name == "k") return SweepParam::k_draws;
  if (name == "gamma") return SweepParam::gamma;
  if (name == "mapping") return SweepParam::mapping;
  if (name == "noise_sigma" || name == "sigma") return SweepParam::noise_sigma;
  throw std::invalid_argument("unknown sweep parameter '" + std::string(name) + "'");
}

std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::k_draws: return "k_draws";
    case SweepParam::gamma: return "gamma";
    case SweepParam::mapping: return "mapping";
    case SweepParam::noise_sigma: return "noise_sigma";
  }
  return "unknown";
}

std::string_view sweep_column(SweepParam p) {
  switch (p) {
    case SweepParam::k_draws: return "k";
    case SweepParam::gamma: return "gamma";
    case SweepParam::mapping: return "mapping";
    case SweepParam::noise_sigma: return "sigma";
  }
  return "value";
}

Pipeline with_param(const Pipeline& pipeline, SweepParam param, std::string_view value) {
  Pipeline p = pipeline;
  if (param == SweepParam::noise_sigma) {
    auto* opts = std::get_if<TargetMeanOptions>(&p.encoder);
    if (!opts) throw std::invalid_argument("noise_sigma applies to the target-mean baseline only");
    opts->noise_sigma = parse_number(value);
    opts->validate();
    return p;
  }
  auto* config = std::get_if<EncoderConfig>(&p.encoder);
  if (!config) throw std::invalid_argument(std::string(to_string(param)) + " applies to the sampling encoder only");
  switch (param) {
    case SweepParam::k_draws: config->k_draws = parse_count(value); break;
    case SweepParam::gamma: config->gamma = parse_number(value); break;
    case SweepParam::mapping: config->mapping = parse_mapping(value); break;
    case SweepParam::noise_sigma: break;
  }
  config->validate();
  return p;
}

std::vector<SweepRow> sweep(const Pipeline& base, const Dataset& data, SweepParam param,
                            std::span<const std::string> values, std::size_t folds, Metric metric,
                            std::uint64_t fold_seed) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    rows.push_back({v, cross_validate(with_param(base, param, v), data, folds, metric, fold_seed)});
  }
  return rows;
}

TuneResult tune(std::span<const Pipeline> candidates, const Dataset& data, std::size_t folds, Metric metric,
                std::uint64_t fold_seed) {
  if (candidates.empty()) throw std::invalid_argument("tuning needs at least one candidate");
  TuneResult out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.results.push_back(cross_validate(candidates[i], data, folds, metric, fold_seed));
    if (out.results[i].mean > out.results[out.best_index].mean) out.best_index = i;
  }
  return out;
}

}  // namespace sbe
