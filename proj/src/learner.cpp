#include "sbe/learner.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

namespace sbe {

using json = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (total > 0.0) {
    for (double& x : v) x /= total;
  }
  return v;
}

Eigen::VectorXd column_sd(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  Eigen::VectorXd sd(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double ss = (x.col(j).array() - mean(j)).square().sum();
    sd(j) = x.rows() > 0 ? std::sqrt(ss / static_cast<double>(x.rows())) : 0.0;
  }
  return sd;
}

}  // namespace

void validate(const LearnerSpec& spec) {
  std::visit(overloaded{
                 [](const RidgeSpec& s) {
                   if (!(s.lambda >= 0.0)) throw std::invalid_argument("ridge lambda must be >= 0");
                 },
                 [](const LogisticSpec& s) {
                   if (!(s.lambda >= 0.0)) throw std::invalid_argument("logistic lambda must be >= 0");
                   if (!(s.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
                   if (s.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
                 },
                 [](const ForestSpec& s) { s.validate(); },
             },
             spec);
}

std::string_view learner_name(const LearnerSpec& spec) {
  return std::visit(overloaded{
                        [](const RidgeSpec&) { return std::string_view("ridge"); },
                        [](const LogisticSpec&) { return std::string_view("logistic"); },
                        [](const ForestSpec&) { return std::string_view("random_forest"); },
                    },
                    spec);
}

// ---------------------------------------------------------------------------
// Ridge

RidgeModel RidgeModel::train(const RidgeSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) {
    throw std::invalid_argument("ridge needs matching, non-empty features and target");
  }
  const Eigen::Map<const Eigen::VectorXd> target(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd mean = x.colwise().mean();
  const double y_mean = target.mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean.transpose();

  RidgeModel m;
  m.feature_scale = column_sd(x, mean);
  Eigen::MatrixXd gram = centred.transpose() * centred;
  gram.diagonal().array() += spec.lambda;
  const Eigen::VectorXd rhs = centred.transpose() * (target.array() - y_mean).matrix();

  if (gram.rows() > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.info() != Eigen::Success || largest == 0.0 || eig.eigenvalues().minCoeff() <= 1e-12 * largest) {
      throw std::runtime_error("singular normal equations (collinear or constant features); use lambda > 0");
    }
    m.coefficients = gram.ldlt().solve(rhs);
  } else {
    m.coefficients = Eigen::VectorXd(0);
  }
  m.intercept = y_mean - mean.dot(m.coefficients);
  return m;
}

Eigen::MatrixXd RidgeModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coefficients.size()) throw std::invalid_argument("ridge feature count mismatch");
  Eigen::MatrixXd out(x.rows(), 1);
  out.col(0) = (x * coefficients).array() + intercept;
  return out;
}

std::vector<double> RidgeModel::importance() const {
  std::vector<double> v(static_cast<std::size_t>(coefficients.size()));
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    v[static_cast<std::size_t>(j)] = std::abs(coefficients(j)) * feature_scale(j);
  }
  return normalized(std::move(v));
}

// ---------------------------------------------------------------------------
// Logistic

LogisticModel LogisticModel::train(const LogisticSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y,
                                   std::size_t n_classes) {
  const auto n = x.rows();
  if (static_cast<std::size_t>(n) != y.size() || n == 0) {
    throw std::invalid_argument("logistic regression needs matching, non-empty features and target");
  }
  if (n_classes < 2) throw std::invalid_argument("logistic regression needs at least 2 classes");
  const auto d = x.cols();
  const Eigen::Index outputs = n_classes == 2 ? 1 : static_cast<Eigen::Index>(n_classes);

  LogisticModel m;
  m.n_classes = n_classes;
  m.mean = x.colwise().mean();
  m.scale = column_sd(x, m.mean);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (m.scale(j) <= 0.0) m.scale(j) = 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - m.mean.transpose()).array().rowwise() / m.scale.transpose().array();

  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, outputs);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = y[static_cast<std::size_t>(i)];
    if (v < 0.0 || v >= static_cast<double>(n_classes) || v != std::floor(v)) {
      throw std::invalid_argument("class targets must be integer positions below n_classes");
    }
    if (outputs == 1) {
      target(i, 0) = v;
    } else {
      target(i, static_cast<Eigen::Index>(v)) = 1.0;
    }
  }

  m.weights = Eigen::MatrixXd::Zero(d, outputs);
  m.bias = Eigen::VectorXd::Zero(outputs);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    Eigen::MatrixXd scores = (z * m.weights).rowwise() + m.bias.transpose();
    if (outputs == 1) {
      scores = (1.0 + (-scores.array()).exp()).inverse().matrix();
    } else {
      const Eigen::VectorXd top = scores.rowwise().maxCoeff();
      scores = (scores.colwise() - top).array().exp().matrix();
      scores = scores.array().colwise() / scores.rowwise().sum().array();
    }
    const Eigen::MatrixXd residual = scores - target;
    const Eigen::MatrixXd grad_w = z.transpose() * residual * inv_n + spec.lambda * m.weights;
    const Eigen::VectorXd grad_b = residual.colwise().mean();
    m.final_gradient_norm = std::sqrt(grad_w.squaredNorm() + grad_b.squaredNorm());
    m.epochs_run = epoch + 1;
    if (m.final_gradient_norm < 1e-6) break;
    m.weights -= spec.learning_rate * grad_w;
    m.bias -= spec.learning_rate * grad_b;
  }
  return m;
}

Eigen::MatrixXd LogisticModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("logistic feature count mismatch");
  const Eigen::MatrixXd z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  Eigen::MatrixXd scores = (z * weights).rowwise() + bias.transpose();
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(n_classes));
  if (weights.cols() == 1) {
    const Eigen::ArrayXd p = (1.0 + (-scores.col(0).array()).exp()).inverse();
    out.col(0) = (1.0 - p).matrix();
    out.col(1) = p.matrix();
    return out;
  }
  const Eigen::VectorXd top = scores.rowwise().maxCoeff();
  out = (scores.colwise() - top).array().exp().matrix();
  out = out.array().colwise() / out.rowwise().sum().array();
  return out;
}

std::vector<double> LogisticModel::importance() const {
  std::vector<double> v(static_cast<std::size_t>(weights.rows()), 0.0);
  for (Eigen::Index j = 0; j < weights.rows(); ++j) v[static_cast<std::size_t>(j)] = weights.row(j).cwiseAbs().sum();
  return normalized(std::move(v));
}

// ---------------------------------------------------------------------------
// Dispatch

Model train(const LearnerSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y, Task task,
            std::size_t n_classes) {
  validate(spec);
  return std::visit(overloaded{
                        [&](const RidgeSpec& s) -> Model {
                          if (task != Task::regression) {
                            throw std::invalid_argument("ridge is a regression learner");
                          }
                          return RidgeModel::train(s, x, y);
                        },
                        [&](const LogisticSpec& s) -> Model {
                          if (task == Task::regression) {
                            throw std::invalid_argument("logistic regression needs a classification task");
                          }
                          return LogisticModel::train(s, x, y, n_classes);
                        },
                        [&](const ForestSpec& s) -> Model { return RandomForest::train(s, x, y, task, n_classes); },
                    },
                    spec);
}

Model train(const LearnerSpec& spec, const EncodedDataset& data) {
  return train(spec, data.features, data.target, data.task, data.n_classes);
}

Eigen::MatrixXd predict(const Model& model, const Eigen::MatrixXd& x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

std::size_t n_features(const Model& model) {
  return std::visit(overloaded{
                        [](const RidgeModel& m) { return static_cast<std::size_t>(m.coefficients.size()); },
                        [](const LogisticModel& m) { return static_cast<std::size_t>(m.mean.size()); },
                        [](const RandomForest& m) { return m.n_features(); },
                    },
                    model);
}

std::vector<double> importance(const Model& model) {
  return std::visit(overloaded{
                        [](const RidgeModel& m) { return m.importance(); },
                        [](const LogisticModel& m) { return m.importance(); },
                        [](const RandomForest& m) { return m.importance(); },
                    },
                    model);
}

FeatureImportanceReport importance_report(const Model& model, const EncodedDataset& layout) {
  FeatureImportanceReport r;
  r.per_feature = importance(model);
  if (r.per_feature.size() != layout.feature_names.size()) {
    throw std::invalid_argument("model and encoded layout disagree on the feature count");
  }
  r.feature_names = layout.feature_names;
  r.origin_names = layout.origin_names;
  r.per_origin.assign(layout.origin_names.size(), 0.0);
  for (std::size_t j = 0; j < r.per_feature.size(); ++j) r.per_origin[layout.feature_origin[j]] += r.per_feature[j];
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kLearnerFormat = "sbe-learner";
constexpr int kLearnerVersion = 1;

std::vector<double> to_vector(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

Eigen::MatrixXd to_matrix(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw std::invalid_argument("matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace

std::string serialize_model(const Model& model) {
  json j;
  j["format"] = kLearnerFormat;
  j["version"] = kLearnerVersion;
  std::visit(overloaded{
                 [&](const RidgeModel& m) {
                   j["kind"] = "ridge";
                   j["coefficients"] = to_vector(m.coefficients);
                   j["intercept"] = m.intercept;
                   j["feature_scale"] = to_vector(m.feature_scale);
                 },
                 [&](const LogisticModel& m) {
                   j["kind"] = "logistic";
                   j["n_classes"] = m.n_classes;
                   j["mean"] = to_vector(m.mean);
                   j["scale"] = to_vector(m.scale);
                   j["weight_columns"] = m.weights.cols();
                   j["weights"] = to_vector(m.weights);
                   j["bias"] = to_vector(m.bias);
                 },
                 [&](const RandomForest& m) {
                   j["kind"] = "random_forest";
                   j["task"] = to_string(m.task());
                   j["n_features"] = m.n_features();
                   j["n_outputs"] = m.n_outputs();
                   j["importance"] = m.importance();
                   json trees = json::array();
                   for (const auto& t : m.trees()) {
                     json feature = json::array(), threshold = json::array(), left = json::array(),
                          right = json::array(), value = json::array();
                     for (const auto& nd : t.nodes) {
                       feature.push_back(nd.feature);
                       threshold.push_back(nd.threshold);
                       left.push_back(nd.left);
                       right.push_back(nd.right);
                       value.push_back(nd.value);
                     }
                     trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left},
                                      {"right", right}, {"value", value}, {"values", t.values}});
                   }
                   j["trees"] = std::move(trees);
                 },
             },
             model);
  return j.dump() + "\n";
}

Model deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("learner model is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kLearnerFormat || j.at("version").get<int>() != kLearnerVersion) {
      throw std::invalid_argument("not a supported learner model document");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ridge") {
      RidgeModel m;
      const auto c = j.at("coefficients").get<std::vector<double>>();
      m.coefficients = to_matrix(c, static_cast<Eigen::Index>(c.size()), 1);
      m.intercept = j.at("intercept").get<double>();
      const auto s = j.at("feature_scale").get<std::vector<double>>();
      m.feature_scale = to_matrix(s, static_cast<Eigen::Index>(s.size()), 1);
      return m;
    }
    if (kind == "logistic") {
      LogisticModel m;
      m.n_classes = j.at("n_classes").get<std::size_t>();
      const auto mean = j.at("mean").get<std::vector<double>>();
      const auto d = static_cast<Eigen::Index>(mean.size());
      m.mean = to_matrix(mean, d, 1);
      m.scale = to_matrix(j.at("scale").get<std::vector<double>>(), d, 1);
      const auto cols = j.at("weight_columns").get<Eigen::Index>();
      m.weights = to_matrix(j.at("weights").get<std::vector<double>>(), d, cols);
      m.bias = to_matrix(j.at("bias").get<std::vector<double>>(), cols, 1);
      return m;
    }
    if (kind == "random_forest") {
      std::vector<RandomForest::Tree> trees;
      for (const auto& t : j.at("trees")) {
        RandomForest::Tree tree;
        const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<std::int32_t>>();
        const auto right = t.at("right").get<std::vector<std::int32_t>>();
        const auto value = t.at("value").get<std::vector<std::uint32_t>>();
        for (std::size_t i = 0; i < feature.size(); ++i) {
          tree.nodes.push_back({feature.at(i), threshold.at(i), left.at(i), right.at(i), value.at(i)});
        }
        tree.values = t.at("values").get<std::vector<double>>();
        trees.push_back(std::move(tree));
      }
      return RandomForest::from_parts(parse_task(j.at("task").get<std::string>()),
                                      j.at("n_features").get<std::size_t>(), j.at("n_outputs").get<std::size_t>(),
                                      std::move(trees), j.at("importance").get<std::vector<double>>());
    }
    throw std::invalid_argument("unknown learner kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed learner model: ") + e.what());
  }
}

}  // namespace sbe
