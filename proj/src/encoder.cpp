#include "sbe/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "sbe/parallel.hpp"

namespace sbe {

using json = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kWoeClamp = 1e-12;

std::vector<double> polynomial2(const std::vector<double>& base) {
  std::vector<double> out = base;
  for (double v : base) out.push_back(v * v);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (std::size_t j = i + 1; j < base.size(); ++j) out.push_back(base[i] * base[j]);
  }
  return out;
}

std::size_t polynomial2_dimension(std::size_t base) { return 2 * base + base * (base - 1) / 2; }

double pseudo_count(const ConjugateParams& posterior) {
  return std::visit(overloaded{
                        [](const BetaParams& p) { return p.alpha + p.beta; },
                        [](const DirichletParams& p) {
                          return std::accumulate(p.alphas.begin(), p.alphas.end(), 0.0);
                        },
                        [](const NormalGammaParams& p) { return p.nu; },
                    },
                    posterior);
}

}  // namespace

// ---------------------------------------------------------------------------
// Enum names

std::string_view to_string(Mapping m) {
  switch (m) {
    case Mapping::mean_only: return "mean_only";
    case Mapping::mean_and_precision: return "mean_and_precision";
    case Mapping::polynomial2: return "polynomial2";
    case Mapping::weight_of_evidence: return "weight_of_evidence";
  }
  return "unknown";
}

std::string_view to_string(UnseenPolicy p) {
  return p == UnseenPolicy::sample_from_prior ? "sample_from_prior" : "prior_mean";
}

std::string_view to_string(DrawMode m) { return m == DrawMode::sample ? "sample" : "posterior_mean"; }

Mapping parse_mapping(std::string_view name) {
  for (Mapping m : {Mapping::mean_only, Mapping::mean_and_precision, Mapping::polynomial2,
                    Mapping::weight_of_evidence}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown mapping '" + std::string(name) + "'");
}

UnseenPolicy parse_unseen_policy(std::string_view name) {
  if (name == "sample_from_prior") return UnseenPolicy::sample_from_prior;
  if (name == "prior_mean") return UnseenPolicy::prior_mean;
  throw std::invalid_argument("unknown unseen policy '" + std::string(name) + "'");
}

DrawMode parse_draw_mode(std::string_view name) {
  if (name == "sample") return DrawMode::sample;
  if (name == "posterior_mean") return DrawMode::posterior_mean;
  throw std::invalid_argument("unknown draw mode '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite and >= 0");
  if (k_draws < 1) throw std::invalid_argument("k_draws must be at least 1");
}

// ---------------------------------------------------------------------------
// Mapping

std::size_t mapping_dimension(Mapping mapping, Task task, std::size_t n_classes) {
  const std::size_t base = task == Task::binary ? 1 : task == Task::multiclass ? n_classes - 1 : 2;
  switch (mapping) {
    case Mapping::mean_only:
      return task == Task::regression ? 1 : base;
    case Mapping::mean_and_precision:
      return task == Task::regression ? 2 : base + 1;
    case Mapping::polynomial2:
      return polynomial2_dimension(base);
    case Mapping::weight_of_evidence:
      if (task != Task::binary) throw std::invalid_argument("weight_of_evidence needs a binary task");
      return 1;
  }
  throw std::logic_error("unreachable");
}

std::vector<double> apply_mapping(Mapping mapping, const PosteriorDraw& draw,
                                  const ConjugateParams& posterior) {
  if (mapping == Mapping::weight_of_evidence) {
    const auto* b = std::get_if<BetaDraw>(&draw);
    if (!b) throw std::invalid_argument("weight_of_evidence needs a binary task");
    const double p = std::clamp(b->p, kWoeClamp, 1.0 - kWoeClamp);
    return {std::log(p / (1.0 - p))};
  }
  return std::visit(
      overloaded{
          [&](const BetaDraw& b) -> std::vector<double> {
            switch (mapping) {
              case Mapping::mean_and_precision: return {b.p, pseudo_count(posterior)};
              case Mapping::polynomial2: return polynomial2({b.p});
              default: return {b.p};
            }
          },
          [&](const DirichletDraw& d) -> std::vector<double> {
            std::vector<double> base(d.probs.begin(), d.probs.end() - 1);
            switch (mapping) {
              case Mapping::mean_and_precision: base.push_back(pseudo_count(posterior)); return base;
              case Mapping::polynomial2: return polynomial2(base);
              default: return base;
            }
          },
          [&](const NormalGammaDraw& g) -> std::vector<double> {
            switch (mapping) {
              case Mapping::mean_and_precision: return {g.mu, g.tau};
              case Mapping::polynomial2: return polynomial2({g.mu, g.tau});
              default: return {g.mu};
            }
          },
      },
      draw);
}

namespace {

std::vector<std::string> mapping_names(Mapping mapping, Task task, std::size_t n_classes,
                                       const std::string& col) {
  std::vector<std::string> base;
  if (task == Task::binary) {
    base = {col + ".p"};
  } else if (task == Task::multiclass) {
    for (std::size_t c = 1; c < n_classes; ++c) base.push_back(col + ".pi" + std::to_string(c));
  } else {
    base = {col + ".mu", col + ".tau"};
  }
  switch (mapping) {
    case Mapping::mean_only:
      if (task == Task::regression) return {col + ".mu"};
      return base;
    case Mapping::mean_and_precision:
      if (task != Task::regression) base.push_back(col + ".count");
      return base;
    case Mapping::polynomial2: {
      std::vector<std::string> out = base;
      for (const auto& b : base) out.push_back(b + "^2");
      for (std::size_t i = 0; i < base.size(); ++i) {
        for (std::size_t j = i + 1; j < base.size(); ++j) out.push_back(base[i] + "*" + base[j]);
      }
      return out;
    }
    case Mapping::weight_of_evidence:
      return {col + ".woe"};
  }
  return base;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

std::ptrdiff_t ColumnPosteriors::lookup(const std::string& category) const {
  auto it = index_.find(category);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

void ColumnPosteriors::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < categories.size(); ++i) index_.emplace(categories[i], i);
}

std::size_t EncoderModel::n_classes() const {
  if (task == Task::multiclass) return class_labels.size();
  return task == Task::binary ? 2 : 0;
}

double EncoderModel::encode_target(double y) const {
  if (task != Task::multiclass) return y;
  auto it = std::find(class_labels.begin(), class_labels.end(), y);
  return it == class_labels.end() ? std::nan("") : static_cast<double>(it - class_labels.begin());
}

std::vector<std::string> EncoderModel::feature_names() const {
  std::vector<std::string> out;
  for (const auto& s : schema) {
    if (s.kind == ColumnKind::categorical) {
      auto names = mapping_names(config.mapping, task, n_classes(), s.name);
      out.insert(out.end(), names.begin(), names.end());
    } else {
      out.push_back(s.name);
    }
  }
  return out;
}

std::vector<std::size_t> EncoderModel::feature_origins() const {
  std::vector<std::size_t> out;
  const std::size_t q = mapping_dimension(config.mapping, task, n_classes());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const std::size_t width = schema[i].kind == ColumnKind::categorical ? q : 1;
    out.insert(out.end(), width, i);
  }
  return out;
}

ConjugateParams EncoderModel::unseen_params() const {
  const auto* ng = std::get_if<NormalGammaParams>(&prior);
  if (!ng || ng->proper()) return prior;
  // The flat prior on the mean cannot be sampled: use one pseudo-observation
  // for the mean and, when the precision prior is empty too, one
  // pseudo-observation at the global target variance.
  NormalGammaParams repaired = *ng;
  if (repaired.nu <= 0.0) repaired.nu = 1.0;
  if (repaired.alpha <= 0.0 || repaired.beta <= 0.0) {
    const double n = static_cast<double>(std::max<std::size_t>(summary.n(), 1));
    const double variance = summary.sum_sq_dev() / n;
    repaired.alpha = 0.5;
    repaired.beta = regression_rate_floor(variance / 2.0);
  }
  return repaired;
}

EncoderModel fit(const Dataset& data, const EncoderConfig& config) {
  config.validate();
  if (data.rows() == 0) throw std::invalid_argument("cannot fit an encoder on an empty dataset");

  EncoderModel model;
  model.task = data.task();
  model.config = config;
  model.schema = data.feature_schema();
  model.target_name = data.column(data.target_index()).schema.name;
  if (config.mapping == Mapping::weight_of_evidence && model.task != Task::binary) {
    throw std::invalid_argument("weight_of_evidence needs a binary task");
  }

  const auto& y = data.target();
  if (model.task == Task::multiclass) {
    for (double v : y) {
      if (std::find(model.class_labels.begin(), model.class_labels.end(), v) == model.class_labels.end()) {
        model.class_labels.push_back(v);
      }
    }
    if (model.class_labels.size() < 2) throw std::invalid_argument("multiclass target has fewer than 2 classes");
  }
  std::vector<double> encoded(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) encoded[i] = model.encode_target(y[i]);

  model.summary = summarize(model.task, encoded, model.task == Task::multiclass ? model.n_classes() : 0);
  model.prior = scaled_prior(model.summary, config.gamma);

  for (std::size_t col : data.feature_indices()) {
    const Column& c = data.column(col);
    if (c.schema.kind != ColumnKind::categorical) continue;
    ColumnPosteriors cp;
    cp.name = c.schema.name;
    std::vector<CategoryStats> stats;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < c.labels.size(); ++r) {
      const auto& label = c.labels[r];
      if (label.empty()) continue;
      auto [it, inserted] = index.emplace(label, cp.categories.size());
      if (inserted) {
        cp.categories.push_back(label);
        stats.emplace_back(model.task, model.task == Task::multiclass ? model.n_classes() : 0);
      }
      stats[it->second].add(encoded[r]);
    }
    if (cp.categories.empty()) {
      throw std::invalid_argument("categorical column '" + c.schema.name + "' has only missing values");
    }
    for (const auto& s : stats) {
      cp.counts.push_back(s.n());
      cp.posteriors.push_back(posterior_update(model.prior, s));
    }
    cp.rebuild_index();
    model.columns.push_back(std::move(cp));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Transform

namespace {

void check_schema(const EncoderModel& model, const Dataset& data) {
  const auto schema = data.feature_schema();
  if (schema != model.schema) {
    throw std::invalid_argument("dataset columns do not match the encoder schema");
  }
}

struct ColumnPlan {
  bool categorical = false;
  std::size_t data_index = 0;     // column in the dataset
  std::size_t schema_index = 0;   // stream coordinate
  std::size_t output_offset = 0;  // first feature column
  const ColumnPosteriors* posteriors = nullptr;
  // Precomputed features for deterministic encodings, per category, and for
  // the unseen value (last entry).
  std::vector<std::vector<double>> fixed;
};

}  // namespace

EncodedDataset transform_draws(const EncoderModel& model, const Dataset& data, std::size_t first_draw,
                               std::size_t k_draws, std::uint64_t salt) {
  check_schema(model, data);
  if (k_draws < 1) throw std::invalid_argument("k_draws must be at least 1");

  const std::size_t n = data.rows();
  const std::size_t q = mapping_dimension(model.config.mapping, model.task, model.n_classes());
  const bool mean_mode = model.config.draw_mode == DrawMode::posterior_mean;
  const ConjugateParams unseen = model.unseen_params();
  const std::uint64_t master = stream_seed(model.config.seed, salt);

  EncodedDataset out;
  out.task = model.task;
  out.n_classes = model.n_classes();
  out.feature_names = model.feature_names();
  for (const auto& s : model.schema) out.origin_names.push_back(s.name);
  out.feature_origin = model.feature_origins();

  std::vector<ColumnPlan> plan;
  const auto features = data.feature_indices();
  std::size_t offset = 0;
  std::size_t cat = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    ColumnPlan p;
    p.data_index = features[i];
    p.schema_index = i;
    p.output_offset = offset;
    p.categorical = model.schema[i].kind == ColumnKind::categorical;
    if (p.categorical) {
      p.posteriors = &model.columns[cat++];
      for (const auto& post : p.posteriors->posteriors) {
        p.fixed.push_back(mean_mode ? apply_mapping(model.config.mapping, mean_draw(post), post)
                                    : std::vector<double>{});
      }
      const bool fixed_unseen = mean_mode || model.config.unseen_policy == UnseenPolicy::prior_mean;
      p.fixed.push_back(fixed_unseen ? apply_mapping(model.config.mapping, mean_draw(unseen), unseen)
                                     : std::vector<double>{});
      offset += q;
    } else {
      offset += 1;
    }
    plan.push_back(std::move(p));
  }

  const std::size_t total = n * k_draws;
  out.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(offset));
  out.origin_row.resize(total);
  out.draw_index.resize(total);
  out.target.resize(total);
  const auto& y = data.target();

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const double target = model.encode_target(y[row]);
      for (std::size_t k = 0; k < k_draws; ++k) {
        const auto r = static_cast<Eigen::Index>(k * n + row);
        out.origin_row[static_cast<std::size_t>(r)] = row;
        out.draw_index[static_cast<std::size_t>(r)] = first_draw + k;
        out.target[static_cast<std::size_t>(r)] = target;
        for (const auto& p : plan) {
          const auto col = static_cast<Eigen::Index>(p.output_offset);
          if (!p.categorical) {
            out.features(r, col) = data.column(p.data_index).numbers[row];
            continue;
          }
          const std::ptrdiff_t idx = p.posteriors->lookup(data.column(p.data_index).labels[row]);
          const std::size_t slot = idx < 0 ? p.fixed.size() - 1 : static_cast<std::size_t>(idx);
          const std::vector<double>* values = &p.fixed[slot];
          std::vector<double> sampled;
          if (values->empty()) {
            const ConjugateParams& params = idx < 0 ? unseen : p.posteriors->posteriors[slot];
            const auto d = draw(params, derive_stream(master, p.schema_index, row, first_draw + k));
            sampled = apply_mapping(model.config.mapping, d, params);
            values = &sampled;
          }
          for (std::size_t j = 0; j < values->size(); ++j) {
            out.features(r, col + static_cast<Eigen::Index>(j)) = (*values)[j];
          }
        }
      }
    }
  });
  return out;
}

EncodedDataset transform_augment(const EncoderModel& model, const Dataset& data, std::size_t k_draws,
                                 std::uint64_t salt) {
  return transform_draws(model, data, 0, k_draws, salt);
}

Eigen::MatrixXd predict_average(const EncoderModel& model, const BatchPredictor& predict,
                                const Dataset& data, std::size_t k_draws, std::uint64_t salt) {
  if (k_draws < 1) throw std::invalid_argument("k_draws must be at least 1");
  Eigen::MatrixXd mean;
  for (std::size_t k = 0; k < k_draws; ++k) {
    const EncodedDataset copy = transform_draws(model, data, k, 1, salt);
    Eigen::MatrixXd out = predict(copy.features);
    if (out.rows() != copy.features.rows()) {
      throw std::invalid_argument("learner returned " + std::to_string(out.rows()) + " rows for " +
                                  std::to_string(copy.features.rows()) + " inputs");
    }
    if (k == 0) {
      mean = std::move(out);
      continue;
    }
    if (out.cols() != mean.cols()) throw std::invalid_argument("learner output width changed between copies");
    // Running mean keeps draw-independent outputs exact.
    mean += (out - mean) / static_cast<double>(k + 1);
  }
  return mean;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "sbe-encoder-model";

json params_to_json(const ConjugateParams& params) {
  return std::visit(overloaded{
                        [](const BetaParams& p) {
                          return json{{"family", "beta"}, {"alpha", p.alpha}, {"beta", p.beta}};
                        },
                        [](const DirichletParams& p) {
                          return json{{"family", "dirichlet"}, {"alphas", p.alphas}};
                        },
                        [](const NormalGammaParams& p) {
                          return json{{"family", "normal_gamma"}, {"mu0", p.mu0}, {"nu", p.nu},
                                      {"alpha", p.alpha}, {"beta", p.beta}};
                        },
                    },
                    params);
}

ConjugateParams params_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "beta") return BetaParams{j.at("alpha").get<double>(), j.at("beta").get<double>()};
  if (family == "dirichlet") return DirichletParams{j.at("alphas").get<std::vector<double>>()};
  if (family == "normal_gamma") {
    return NormalGammaParams{j.at("mu0").get<double>(), j.at("nu").get<double>(), j.at("alpha").get<double>(),
                             j.at("beta").get<double>()};
  }
  throw std::invalid_argument("unknown parameter family '" + family + "'");
}

json summary_to_json(const TargetSummary& s) {
  json j{{"n", s.n()}};
  switch (s.task()) {
    case Task::binary: j["sum_y"] = s.sum_y(); break;
    case Task::multiclass: j["class_counts"] = s.class_counts(); break;
    case Task::regression:
      j["mean"] = s.mean();
      j["sum_sq_dev"] = s.sum_sq_dev();
      break;
  }
  return j;
}

TargetSummary summary_from_json(Task task, const json& j) {
  const auto n = j.at("n").get<std::size_t>();
  switch (task) {
    case Task::binary: return TargetStats::binary(n, j.at("sum_y").get<double>());
    case Task::multiclass: return TargetStats::multiclass(j.at("class_counts").get<std::vector<double>>());
    case Task::regression:
      return TargetStats::regression(n, j.at("mean").get<double>(), j.at("sum_sq_dev").get<double>());
  }
  throw std::logic_error("unreachable");
}

}  // namespace

std::string EncoderModel::serialize() const {
  json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["task"] = to_string(task);
  j["gamma"] = config.gamma;
  j["k_draws"] = config.k_draws;
  j["mapping"] = to_string(config.mapping);
  j["unseen_policy"] = to_string(config.unseen_policy);
  j["draw_mode"] = to_string(config.draw_mode);
  j["seed"] = config.seed;
  j["target"] = target_name;
  j["class_order"] = class_labels;
  json schema_j = json::array();
  for (const auto& s : schema) schema_j.push_back({{"name", s.name}, {"kind", to_string(s.kind)}});
  j["schema"] = std::move(schema_j);
  j["summary"] = summary_to_json(summary);
  j["prior"] = params_to_json(prior);
  json cols = json::array();
  for (const auto& c : columns) {
    json cats = json::array();
    for (std::size_t i = 0; i < c.categories.size(); ++i) {
      cats.push_back({{"value", c.categories[i]}, {"count", c.counts[i]}, {"posterior", params_to_json(c.posteriors[i])}});
    }
    cols.push_back({{"name", c.name}, {"categories", std::move(cats)}});
  }
  j["columns"] = std::move(cols);
  return j.dump(2) + "\n";
}

EncoderModel EncoderModel::deserialize(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("encoder model is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormatName) throw std::invalid_argument("not an encoder model document");
    if (j.at("version").get<int>() != kFormatVersion) throw std::invalid_argument("unsupported encoder model version");
    EncoderModel m;
    m.task = parse_task(j.at("task").get<std::string>());
    m.config.gamma = j.at("gamma").get<double>();
    m.config.k_draws = j.at("k_draws").get<std::size_t>();
    m.config.mapping = parse_mapping(j.at("mapping").get<std::string>());
    m.config.unseen_policy = parse_unseen_policy(j.at("unseen_policy").get<std::string>());
    m.config.draw_mode = parse_draw_mode(j.at("draw_mode").get<std::string>());
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.target_name = j.at("target").get<std::string>();
    m.class_labels = j.at("class_order").get<std::vector<double>>();
    for (const auto& s : j.at("schema")) {
      m.schema.push_back({s.at("name").get<std::string>(), parse_column_kind(s.at("kind").get<std::string>())});
    }
    m.summary = summary_from_json(m.task, j.at("summary"));
    m.prior = params_from_json(j.at("prior"));
    for (const auto& c : j.at("columns")) {
      ColumnPosteriors cp;
      cp.name = c.at("name").get<std::string>();
      for (const auto& cat : c.at("categories")) {
        cp.categories.push_back(cat.at("value").get<std::string>());
        cp.counts.push_back(cat.at("count").get<std::size_t>());
        cp.posteriors.push_back(params_from_json(cat.at("posterior")));
      }
      cp.rebuild_index();
      m.columns.push_back(std::move(cp));
    }
    m.config.validate();
    return m;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed encoder model: ") + e.what());
  }
}

}  // namespace sbe
