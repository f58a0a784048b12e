#include <doctest.h>

#include <numeric>

#include "sbe/learner.hpp"
#include "sbe/parallel.hpp"
#include "sbe/random.hpp"

using namespace sbe;

namespace {

double accuracy(const Eigen::MatrixXd& prob, const std::vector<double>& y) {
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < prob.rows(); ++r) {
    Eigen::Index best = 0;
    prob.row(r).maxCoeff(&best);
    hits += static_cast<double>(best) == y[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

// Column 0 decides the label (x0 > 0); column 1 is noise.
void signal_and_noise(std::size_t n, Eigen::MatrixXd& x, std::vector<double>& y, std::uint64_t seed) {
  x.resize(static_cast<Eigen::Index>(n), 2);
  y.resize(n);
  Stream s(derive_stream(seed, 0, 0, 0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = s.normal();
    x(r, 1) = s.normal();
    y[i] = x(r, 0) + 0.5 * s.normal() > 0;
  }
}

}  // namespace

TEST_CASE("ridge recovers an exact line") {
  Eigen::MatrixXd x(5, 1);
  x << 0, 1, 2, 3, 4;
  const std::vector<double> y{1, 3, 5, 7, 9};
  const auto m = RidgeModel::train(RidgeSpec{0.0}, x, y);
  CHECK(std::abs(m.coefficients(0) - 2.0) < 1e-9);
  CHECK(std::abs(m.intercept - 1.0) < 1e-9);
  const auto p = m.predict(x);
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(std::abs(p(r, 0) - y[static_cast<std::size_t>(r)]) < 1e-9);
}

TEST_CASE("ridge shrinks and reports singular systems") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8;
  const std::vector<double> y{1, 2, 3, 4};
  CHECK_THROWS_WITH_AS(RidgeModel::train(RidgeSpec{0.0}, x, y), doctest::Contains("lambda > 0"), std::runtime_error);
  const auto m = RidgeModel::train(RidgeSpec{1.0}, x, y);
  CHECK(std::isfinite(m.coefficients(0)));
  Eigen::MatrixXd x1(4, 1);
  x1 << 1, 2, 3, 4;
  CHECK(std::abs(RidgeModel::train(RidgeSpec{10.0}, x1, y).coefficients(0)) < 1.0);
  CHECK_THROWS(validate(RidgeSpec{-1.0}));
}

TEST_CASE("logistic separates two points") {
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  const std::vector<double> y{0, 1};
  const auto m = LogisticModel::train(LogisticSpec{}, x, y, 2);
  CHECK(accuracy(m.predict(x), y) == 1.0);
  CHECK(m.predict(x).cols() == 2);
}

TEST_CASE("logistic stops at the gradient tolerance") {
  Eigen::MatrixXd x;
  std::vector<double> y;
  signal_and_noise(400, x, y, 4);
  LogisticSpec spec;
  spec.lambda = 0.01;
  spec.epochs = 100000;
  const auto m = LogisticModel::train(spec, x, y, 2);
  CHECK(m.final_gradient_norm < 1e-6);
  CHECK(m.epochs_run < spec.epochs);
  CHECK(accuracy(m.predict(x), y) > 0.8);
  const auto imp = m.importance();
  CHECK(imp[0] > imp[1]);
}

TEST_CASE("softmax logistic on three classes") {
  Eigen::MatrixXd x(6, 1);
  x << -5, -4, 0, 0.5, 4, 5;
  const std::vector<double> y{0, 0, 1, 1, 2, 2};
  const auto m = LogisticModel::train(LogisticSpec{0.5, 5000, 0.0}, x, y, 3);
  const auto p = m.predict(x);
  CHECK(p.cols() == 3);
  for (Eigen::Index r = 0; r < 6; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0));
  CHECK(accuracy(p, y) == 1.0);
}

TEST_CASE("single split attributes everything to one feature") {
  Eigen::MatrixXd x(6, 2);
  x << 0, 5, 0, 1, 0, 3, 1, 2, 1, 4, 1, 0;
  const std::vector<double> y{0, 0, 0, 1, 1, 1};
  ForestSpec spec;
  spec.n_trees = 1;
  spec.max_depth = 1;
  spec.bootstrap = false;
  spec.features_per_split = 2;
  const auto f = RandomForest::train(spec, x, y, Task::binary, 2);
  CHECK(f.importance()[0] == 1.0);
  CHECK(f.importance()[1] == 0.0);
  CHECK(accuracy(f.predict(x), y) == 1.0);
}

TEST_CASE("forest importance ignores unused noise and sums to one") {
  Eigen::MatrixXd x(200, 3);
  std::vector<double> y(200);
  Stream s(derive_stream(2, 0, 0, 0));
  for (Eigen::Index r = 0; r < 200; ++r) {
    x(r, 0) = s.normal();
    x(r, 1) = s.normal();
    x(r, 2) = 7.0;  // constant, never split on
    y[static_cast<std::size_t>(r)] = x(r, 0) > 0;
  }
  ForestSpec spec;
  spec.n_trees = 20;
  spec.max_depth = 1;
  spec.features_per_split = 3;
  const auto f = RandomForest::train(spec, x, y, Task::binary, 2);
  const auto imp = f.importance();
  CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(imp[2] == 0.0);
  CHECK(imp[0] > 0.9);
}

TEST_CASE("duplicated features share importance") {
  Eigen::MatrixXd x;
  std::vector<double> y;
  signal_and_noise(1000, x, y, 8);
  Eigen::MatrixXd dup(x.rows(), 3);
  dup << x.col(0), x.col(0), x.col(1);
  ForestSpec spec;
  spec.n_trees = 200;
  spec.max_depth = 4;
  spec.seed = 3;
  for (std::size_t mtry : {std::size_t{0}, std::size_t{1}}) {
    spec.features_per_split = mtry == 0 ? 2 : 1;
    const auto single = RandomForest::train(spec, x, y, Task::binary, 2).importance();
    spec.features_per_split = mtry == 0 ? 3 : 1;
    const auto paired = RandomForest::train(spec, dup, y, Task::binary, 2).importance();
    CHECK(paired[0] + paired[1] == doctest::Approx(single[0]).epsilon(0.05));
  }
}

TEST_CASE("forest regression") {
  Eigen::MatrixXd x(100, 1);
  std::vector<double> y(100);
  for (Eigen::Index r = 0; r < 100; ++r) {
    x(r, 0) = static_cast<double>(r);
    y[static_cast<std::size_t>(r)] = r < 50 ? 1.0 : 3.0;
  }
  ForestSpec spec;
  spec.n_trees = 10;
  const auto f = RandomForest::train(spec, x, y, Task::regression, 0);
  const auto p = f.predict(x);
  CHECK(p.cols() == 1);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(99, 0) == doctest::Approx(3.0));
}

TEST_CASE("forest is independent of thread count") {
  Eigen::MatrixXd x;
  std::vector<double> y;
  signal_and_noise(500, x, y, 1);
  ForestSpec spec;
  spec.n_trees = 16;
  spec.seed = 5;
  set_max_threads(1);
  const auto a = RandomForest::train(spec, x, y, Task::binary, 2);
  set_max_threads(8);
  const auto b = RandomForest::train(spec, x, y, Task::binary, 2);
  set_max_threads(0);
  CHECK(a.predict(x) == b.predict(x));
  CHECK(a.importance() == b.importance());
}

TEST_CASE("task checks") {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  const std::vector<double> y{0, 1};
  CHECK_THROWS(train(RidgeSpec{}, x, y, Task::binary, 2));
  CHECK_THROWS(train(LogisticSpec{}, x, y, Task::regression, 0));
  ForestSpec bad;
  bad.n_trees = 0;
  CHECK_THROWS(validate(bad));
  bad = {};
  bad.max_depth = 0;
  CHECK_THROWS(validate(bad));
}

TEST_CASE("model serialization round trip") {
  Eigen::MatrixXd x;
  std::vector<double> y;
  signal_and_noise(200, x, y, 6);
  ForestSpec fs;
  fs.n_trees = 5;
  const std::vector<Model> models{train(RidgeSpec{0.1}, x, y, Task::regression, 0),
                                  train(LogisticSpec{}, x, y, Task::binary, 2),
                                  train(fs, x, y, Task::binary, 2)};
  for (const auto& m : models) {
    const auto text = serialize_model(m);
    const auto back = deserialize_model(text);
    CHECK(serialize_model(back) == text);
    CHECK(predict(back, x) == predict(m, x));
  }
  CHECK_THROWS(deserialize_model("{}"));
}

TEST_CASE("importance report groups encoded columns") {
  EncodedDataset layout;
  layout.feature_names = {"x", "c.mu", "c.tau"};
  layout.feature_origin = {0, 1, 1};
  layout.origin_names = {"x", "c"};
  Eigen::MatrixXd x(4, 3);
  x << 0, 1, 2, 1, 0, 3, 2, 2, 2, 3, 1, 0;
  const std::vector<double> y{1, 2, 3, 4};
  const auto model = train(RidgeSpec{0.5}, x, y, Task::regression, 0);
  const auto report = importance_report(model, layout);
  CHECK(report.per_origin.size() == 2);
  CHECK(report.per_origin[1] == doctest::Approx(report.per_feature[1] + report.per_feature[2]));
  CHECK(report.per_origin[0] + report.per_origin[1] == doctest::Approx(1.0).epsilon(1e-9));
}
