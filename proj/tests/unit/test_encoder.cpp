#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sbe/encoder.hpp"
#include "sbe/parallel.hpp"

using namespace sbe;
using test::categorical;
using test::numeric;
using test::target;

namespace {

Dataset binary_ab() {
  return test::one_column(Task::binary, {"a", "a", "a", "a", "a", "b", "b", "b", "b"}, {1, 1, 1, 0, 0, 0, 0, 0, 0});
}

EncoderConfig config(double gamma = 0.0, std::size_t k = 1, Mapping m = Mapping::mean_only, std::uint64_t seed = 1) {
  EncoderConfig c;
  c.gamma = gamma;
  c.k_draws = k;
  c.mapping = m;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("binary fit gives per-category Beta posteriors") {
  const auto model = fit(binary_ab(), config());
  REQUIRE(model.columns.size() == 1);
  const auto& col = model.columns[0];
  CHECK(col.categories == std::vector<std::string>{"a", "b"});
  CHECK(col.counts == std::vector<std::size_t>{5, 4});
  CHECK(std::get<BetaParams>(col.posteriors[0]) == BetaParams{4, 3});
  CHECK(std::get<BetaParams>(col.posteriors[1]) == BetaParams{1, 5});
  CHECK(std::get<BetaParams>(model.prior) == BetaParams{1, 1});
}

TEST_CASE("regression fit under the flat prior") {
  const auto data = test::one_column(Task::regression, {"a", "a", "b"}, {10, 12, 3});
  const auto model = fit(data, config());
  CHECK(std::get<NormalGammaParams>(model.columns[0].posteriors[0]) == NormalGammaParams{11, 2, 1, 1});
}

TEST_CASE("multiclass fit orders classes by first appearance") {
  const auto data = test::one_column(Task::multiclass, {"a", "a", "a", "b"}, {7, 3, 3, 5});
  const auto model = fit(data, config());
  CHECK(model.class_labels == std::vector<double>{7, 3, 5});
  CHECK(std::get<DirichletParams>(model.columns[0].posteriors[0]).alphas == std::vector<double>{2, 3, 1});
  CHECK(model.feature_names() == std::vector<std::string>{"c.pi1", "c.pi2"});
}

TEST_CASE("fit errors") {
  CHECK_THROWS(fit(test::one_column(Task::binary, {}, {}), config()));
  CHECK_THROWS(fit(test::one_column(Task::binary, {"", ""}, {0, 1}), config()));
  CHECK_THROWS(fit(test::one_column(Task::regression, {"a"}, {1}), config(0, 1, Mapping::weight_of_evidence)));
  CHECK_THROWS(config(-1).validate());
  CHECK_THROWS(config(0, 0).validate());
}

TEST_CASE("fitting twice gives identical documents") {
  CHECK(fit(binary_ab(), config(0.3)).serialize() == fit(binary_ab(), config(0.3)).serialize());
}

TEST_CASE("serialization round trip") {
  for (Task task : {Task::binary, Task::regression, Task::multiclass}) {
    const Dataset data(task, {numeric("x", {1, 2, 3, 4}), categorical("c", {"p", "q, r", "p", "\"s\""}),
                              target(task == Task::binary ? std::vector<double>{0, 1, 1, 0}
                                                          : std::vector<double>{0, 1, 2, 2})});
    auto cfg = config(0.25, 3, Mapping::polynomial2, 99);
    cfg.unseen_policy = UnseenPolicy::prior_mean;
    const auto model = fit(data, cfg);
    const auto text = model.serialize();
    const auto back = EncoderModel::deserialize(text);
    CHECK(back.serialize() == text);
    const auto a = transform_augment(model, data, 3);
    const auto b = transform_augment(back, data, 3);
    CHECK(a.features == b.features);
  }
  CHECK_THROWS(EncoderModel::deserialize("{\"format\": \"other\"}"));
  CHECK_THROWS(EncoderModel::deserialize("not json"));
}

TEST_CASE("augmentation shape") {
  const Dataset data(Task::binary, {numeric("x", {1, 2, 3, 4, 5}), categorical("c", {"a", "b", "a", "c", "b"}),
                                    target({0, 1, 1, 0, 1})});
  const auto enc = transform_augment(fit(data, config()), data, 3);
  CHECK(enc.rows() == 15);
  CHECK(enc.features.rows() == 15);
  CHECK(enc.features.cols() == 2);
  for (std::size_t r = 0; r < 15; ++r) {
    CHECK(enc.origin_row[r] == r % 5);
    CHECK(enc.draw_index[r] == r / 5);
    CHECK(enc.features(static_cast<Eigen::Index>(r), 0) == data.column(0).numbers[r % 5]);
    CHECK(enc.target[r] == data.target()[r % 5]);
  }
  CHECK(enc.feature_names == std::vector<std::string>{"x", "c.p"});
  CHECK(enc.origin_names == std::vector<std::string>{"x", "c"});
}

TEST_CASE("mean mode is classic Bayesian target encoding") {
  auto cfg = config(0.5);
  cfg.draw_mode = DrawMode::posterior_mean;
  const auto data = binary_ab();
  const auto model = fit(data, cfg);
  const auto one = transform_augment(model, data, 1);
  const auto four = transform_augment(model, data, 4);
  // prior Beta(1 + 0.5*3, 1 + 0.5*6) = Beta(2.5, 4); a: (3, 2) -> (5.5, 6)
  CHECK(one.features(0, 0) == doctest::Approx(5.5 / 11.5).epsilon(1e-15));
  CHECK(one.features(5, 0) == doctest::Approx(2.5 / 10.5).epsilon(1e-15));
  for (Eigen::Index r = 0; r < four.features.rows(); ++r) CHECK(four.features(r, 0) == one.features(r % 9, 0));
}

TEST_CASE("unseen categories") {
  const auto data = binary_ab();
  auto cfg = config();
  cfg.unseen_policy = UnseenPolicy::prior_mean;
  const auto model = fit(data, cfg);
  const auto test_data = test::one_column(Task::binary, {"zzz", ""}, {0, 1});
  const auto enc = transform_augment(model, test_data, 2);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(enc.features(r, 0) == 0.5);

  const auto sampled = transform_augment(fit(data, config()), test_data, 50);
  double lo = 1, hi = 0;
  for (Eigen::Index r = 0; r < sampled.features.rows(); ++r) {
    lo = std::min(lo, sampled.features(r, 0));
    hi = std::max(hi, sampled.features(r, 0));
  }
  CHECK(hi - lo > 0.3);
}

TEST_CASE("unseen regression categories repair the flat prior") {
  const auto data = test::one_column(Task::regression, {"a", "a", "b", "b"}, {1, 3, 5, 7});
  auto cfg = config(0.0, 1, Mapping::mean_and_precision);
  cfg.unseen_policy = UnseenPolicy::prior_mean;
  const auto model = fit(data, cfg);
  const auto enc = transform_augment(model, test::one_column(Task::regression, {"new"}, {0}), 1);
  // global mean 4, population variance 5
  CHECK(enc.features(0, 0) == 4.0);
  CHECK(enc.features(0, 1) == doctest::Approx(1.0 / 5.0).epsilon(1e-14));

  const auto sampled = transform_augment(fit(data, config()), test::one_column(Task::regression, {"new"}, {0}), 20);
  for (Eigen::Index r = 0; r < 20; ++r) CHECK(std::isfinite(sampled.features(r, 0)));
}

TEST_CASE("schema mismatch is rejected") {
  const auto model = fit(binary_ab(), config());
  const Dataset other(Task::binary, {categorical("d", {"a"}), target({1})});
  CHECK_THROWS(transform_augment(model, other, 1));
}

TEST_CASE("mappings") {
  const BetaParams beta{4, 3};
  CHECK(apply_mapping(Mapping::mean_only, BetaDraw{0.25}, beta) == std::vector<double>{0.25});
  CHECK(apply_mapping(Mapping::weight_of_evidence, BetaDraw{0.5}, beta) == std::vector<double>{0.0});
  CHECK(std::isfinite(apply_mapping(Mapping::weight_of_evidence, BetaDraw{1.0}, beta)[0]));
  CHECK(apply_mapping(Mapping::weight_of_evidence, BetaDraw{0.0}, beta)[0] == doctest::Approx(std::log(1e-12)));
  CHECK(apply_mapping(Mapping::mean_and_precision, BetaDraw{0.25}, beta) == std::vector<double>{0.25, 7});
  CHECK(apply_mapping(Mapping::polynomial2, BetaDraw{0.5}, beta) == std::vector<double>{0.5, 0.25});
  const NormalGammaParams ng{0, 1, 1, 1};
  CHECK(apply_mapping(Mapping::polynomial2, NormalGammaDraw{2, 0.5}, ng) == std::vector<double>{2, 0.5, 4, 0.25, 1});
  CHECK(apply_mapping(Mapping::mean_and_precision, NormalGammaDraw{2, 0.5}, ng) == std::vector<double>{2, 0.5});
  CHECK(apply_mapping(Mapping::mean_only, NormalGammaDraw{2, 0.5}, ng) == std::vector<double>{2});
  const DirichletParams dir{{1, 2, 3}};
  CHECK(apply_mapping(Mapping::mean_only, DirichletDraw{{0.2, 0.3, 0.5}}, dir) == std::vector<double>{0.2, 0.3});
  CHECK(apply_mapping(Mapping::mean_and_precision, DirichletDraw{{0.2, 0.3, 0.5}}, dir) ==
        std::vector<double>{0.2, 0.3, 6});
  CHECK(apply_mapping(Mapping::polynomial2, DirichletDraw{{0.2, 0.3, 0.5}}, dir) ==
        std::vector<double>{0.2, 0.3, 0.2 * 0.2, 0.3 * 0.3, 0.2 * 0.3});
  CHECK_THROWS(apply_mapping(Mapping::weight_of_evidence, NormalGammaDraw{2, 0.5}, ng));
  CHECK(mapping_dimension(Mapping::polynomial2, Task::multiclass, 4) == 9);
  CHECK(mapping_dimension(Mapping::mean_and_precision, Task::regression, 0) == 2);
}

TEST_CASE("predict_average") {
  const auto data = binary_ab();
  const auto model = fit(data, config(0, 1, Mapping::mean_only, 5));
  const BatchPredictor constant = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd::Constant(x.rows(), 1, 0.37); };
  for (std::size_t k : {1, 3, 10}) {
    const auto out = predict_average(model, constant, data, k);
    for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(out(r, 0) == 0.37);
  }

  const BatchPredictor identity = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(x.col(0)); };
  const auto single = predict_average(model, identity, data, 1, 3);
  const auto pass = transform_draws(model, data, 0, 1, 3);
  CHECK(single == pass.features.col(0));

  const std::size_t k = 10000;
  const auto avg = predict_average(model, identity, data, k);
  const auto m = oracle::beta_moments(4, 3);
  CHECK(std::abs(avg(0, 0) - 4.0 / 7.0) < 4 * m.se_mean(k));
  const auto mb = oracle::beta_moments(1, 5);
  CHECK(std::abs(avg(6, 0) - 1.0 / 6.0) < 4 * mb.se_mean(k));

  const BatchPredictor bad = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd::Zero(x.rows() + 1, 1); };
  CHECK_THROWS(predict_average(model, bad, data, 2));
}

TEST_CASE("rare categories are encoded with spread, not their target") {
  const auto data = test::one_column(Task::binary, {"solo", "x", "x"}, {1, 0, 1});
  const auto model = fit(data, config(0, 1, Mapping::mean_only, 2));
  const auto post = std::get<BetaParams>(model.columns[0].posteriors[0]);
  CHECK(post == BetaParams{2, 1});
  const auto single = test::one_column(Task::binary, {"solo"}, {1});
  const auto enc = transform_augment(model, single, 10000);
  std::vector<double> x(enc.features.data(), enc.features.data() + enc.features.size());
  const auto s = oracle::sample_moments(x);
  const auto m = oracle::beta_moments(2, 1);
  CHECK(m.variance() == doctest::Approx(1.0 / 18.0));
  CHECK(std::abs(s.variance - m.variance()) < 4 * m.se_variance(10000));
  CHECK(std::none_of(x.begin(), x.end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("frequent categories are sharper") {
  std::vector<std::string> cats;
  std::vector<double> y;
  for (int i = 0; i < 4; ++i) { cats.push_back("small"); y.push_back(i % 2); }
  for (int i = 0; i < 40; ++i) { cats.push_back("large"); y.push_back(i % 2); }
  const auto model = fit(test::one_column(Task::binary, cats, y), config());
  const auto var = [](const ConjugateParams& p) { return posterior_covariance(p)(0, 0); };
  CHECK(var(model.columns[0].posteriors[0]) > var(model.columns[0].posteriors[1]));
}

TEST_CASE("transform is independent of thread count") {
  std::vector<std::string> cats;
  std::vector<double> y, x;
  for (int i = 0; i < 500; ++i) {
    cats.push_back("c" + std::to_string(i % 13));
    y.push_back(i % 3 == 0);
    x.push_back(i * 0.5);
  }
  const Dataset data(Task::binary, {numeric("x", x), categorical("c", cats), target(y)});
  const auto model = fit(data, config(0.1, 1, Mapping::polynomial2, 77));
  set_max_threads(1);
  const auto a = transform_augment(model, data, 5);
  set_max_threads(8);
  const auto b = transform_augment(model, data, 5);
  set_max_threads(0);
  CHECK(a.features == b.features);
}

TEST_CASE("multiclass encodings stay on the simplex") {
  const auto model = fit(test::one_column(Task::multiclass, {"a", "b", "a"}, {0, 1, 2}), config());
  const auto enc = transform_augment(model, test::one_column(Task::multiclass, {"a", "b", "a"}, {0, 1, 2}), 100);
  for (Eigen::Index r = 0; r < enc.features.rows(); ++r) {
    CHECK(enc.features(r, 0) >= 0);
    CHECK(enc.features(r, 0) + enc.features(r, 1) <= 1 + 1e-12);
  }
}
