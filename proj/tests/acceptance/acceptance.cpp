// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ids...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Cholesky>

#include "oracles.hpp"
#include "sbe/diagnostics.hpp"
#include "sbe/validation.hpp"

using namespace sbe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// ---------------------------------------------------------------------------
// Desk-scale reproductions

constexpr std::size_t kRows = 10000;
constexpr std::size_t kFolds = 5;
constexpr std::size_t kTrees = 50;

Dataset dataset(GeneratorKind kind, std::uint64_t seed) {
  GeneratorSpec g;
  g.kind = kind;
  g.n_rows = kRows;
  g.seed = 1000 + seed;
  return generate(g);
}

ForestSpec forest(std::uint64_t seed) {
  ForestSpec f;
  f.n_trees = kTrees;
  f.seed = seed;
  return f;
}

std::vector<Pipeline> sampling_grid(std::uint64_t seed) {
  std::vector<Pipeline> out;
  for (Mapping mapping : {Mapping::mean_only, Mapping::mean_and_precision}) {
    for (double gamma : {0.0, 1.0}) {
      EncoderConfig e;
      e.gamma = gamma;
      e.k_draws = 2;
      e.mapping = mapping;
      e.seed = seed;
      out.push_back({e, forest(seed)});
    }
  }
  return out;
}

std::vector<Pipeline> loo_grid(std::uint64_t seed) {
  std::vector<Pipeline> out;
  for (double sigma : {0.025, 0.05, 0.1, 0.2}) {
    TargetMeanOptions o;
    o.leave_one_out = true;
    o.noise_sigma = sigma;
    o.seed = seed;
    out.push_back({o, forest(seed)});
  }
  return out;
}

double tuned(const std::vector<Pipeline>& grid, const Dataset& data, std::uint64_t seed) {
  const auto t = tune(grid, data, kFolds, Metric::accuracy, seed);
  return t.results[t.best_index].mean;
}

Outcome direction(GeneratorKind kind) {
  std::vector<double> s, b;
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = dataset(kind, seed);
    s.push_back(tuned(sampling_grid(seed), data, seed));
    b.push_back(tuned(loo_grid(seed), data, seed));
    wins += s.back() > b.back();
    per_seed += fmt(" %+.4f", s.back() - b.back());
  }
  const double ms = mean_of(s), mb = mean_of(b);
  return {ms >= mb - 0.003 && wins >= 6,
          fmt("sampling %.4f vs loo %.4f, wins %d/10, per-seed diff%s", ms, mb, wins, per_seed.c_str())};
}

Outcome k_plateau() {
  const std::vector<std::size_t> ks{1, 2, 4, 8, 16};
  std::map<std::size_t, double> acc;
  for (std::size_t k : ks) {
    EncoderConfig e;
    e.k_draws = k;
    acc[k] = cross_validate({e, forest(0)}, dataset(GeneratorKind::classification_blobs, 0), kFolds,
                            Metric::accuracy, 0)
                 .mean;
  }
  std::string row;
  for (std::size_t k : ks) row += fmt(" K=%zu:%.4f", k, acc[k]);
  const bool pass = std::abs(acc[2] - acc[16]) <= 0.005 && acc[1] <= acc[16] + 0.005;
  return {pass, "accuracy" + row};
}

Outcome gamma_sweep() {
  const std::vector<double> gammas{0, 0.01, 0.1, 0.5, 1, 10, 100};
  std::vector<double> acc(gammas.size(), 0.0);
  constexpr int kSeeds = 5;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto data = dataset(GeneratorKind::classification_blobs, seed);
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      EncoderConfig e;
      e.gamma = gammas[i];
      e.k_draws = 2;
      e.seed = seed;
      acc[i] += cross_validate({e, forest(seed)}, data, kFolds, Metric::accuracy, seed).mean / kSeeds;
    }
  }
  double lo = 1, hi = 0;
  std::string row;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (gammas[i] <= 1) {
      lo = std::min(lo, acc[i]);
      hi = std::max(hi, acc[i]);
    }
    row += fmt(" g=%g:%.4f", gammas[i], acc[i]);
  }
  const double drop = acc.front() - acc.back();
  return {hi - lo < 0.01 && drop > 0.005,
          fmt("spread over gamma<=1 %.4f, drop at 100 %.4f;", hi - lo, drop) + row};
}

double categorical_importance(const FittedPipeline& fitted, const Dataset& data) {
  const auto report = importance_report(fitted.learner, fitted.layout);
  double total = 0;
  for (std::size_t i = 0; i < report.origin_names.size(); ++i) {
    const auto& col = data.column(data.find(report.origin_names[i]));
    if (col.schema.kind == ColumnKind::categorical) total += report.per_origin[i];
  }
  return total;
}

Outcome importance_shift() {
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = dataset(GeneratorKind::classification_blobs, seed);
    EncoderConfig e;
    e.k_draws = 2;
    e.seed = seed;
    const double sampled = categorical_importance(fit_pipeline({e, forest(seed)}, data), data);
    const double plain = categorical_importance(fit_pipeline({TargetMeanOptions{}, forest(seed)}, data), data);
    wins += sampled < plain;
    per_seed += fmt(" %.3f/%.3f", sampled, plain);
  }
  return {wins >= 8, fmt("sampling < target mean on %d/10 seeds (sampling/target mean:%s)", wins, per_seed.c_str())};
}

// ---------------------------------------------------------------------------
// Property checks

Outcome conjugate_examples() {
  int failed = 0, total = 0;
  auto expect = [&](bool ok) {
    ++total;
    failed += !ok;
  };
  auto close = [](double a, double b) { return a == b || std::abs(a - b) < 1e-12 * std::abs(b); };
  const auto regression = summarize(Task::regression, std::vector<double>{1, 2, 3, 4});

  expect(std::get<BetaParams>(scaled_prior(TargetStats::binary(10, 6), 0.0)) == BetaParams{1, 1});
  expect(std::get<BetaParams>(scaled_prior(TargetStats::binary(10, 6), 0.5)) == BetaParams{4, 3});
  expect(std::get<NormalGammaParams>(scaled_prior(regression, 1.0)) == NormalGammaParams{2.5, 0, 2, 2.5});

  expect(std::get<BetaParams>(posterior_update(BetaParams{1, 1}, TargetStats::binary(5, 3))) == BetaParams{4, 3});
  expect(std::get<DirichletParams>(posterior_update(DirichletParams{{1, 1, 1}}, TargetStats::multiclass({2, 0, 5})))
             .alphas == std::vector<double>{3, 1, 6});
  const auto ng = std::get<NormalGammaParams>(posterior_update(
      NormalGammaParams{2.5, 0, 2, 2.5}, summarize(Task::regression, std::vector<double>{10, 12})));
  expect(close(ng.mu0, 11) && ng.nu == 2 && ng.alpha == 3 && close(ng.beta, 3.5));

  expect(posterior_mean(BetaParams{1, 1})[0] == 0.5);
  expect(posterior_mean(BetaParams{4, 3})[0] == 4.0 / 7.0);
  const auto d = posterior_mean(DirichletParams{{3, 1, 6}});
  expect(close(d[0], 0.3) && close(d[1], 0.1) && close(d[2], 0.6));

  return {failed == 0, fmt("%d/%d examples exact", total - failed, total)};
}

struct MomentCheck {
  std::string name;
  oracle::RawMoments truth;
  std::function<double(Stream&)> sample;
};

Outcome sampler_moments() {
  constexpr std::size_t kDraws = 100000;
  constexpr std::size_t kKsDraws = 10000;
  constexpr int kSeeds = 20;
  std::vector<MomentCheck> checks;
  for (auto [a, b] : std::vector<std::pair<double, double>>{{1, 1}, {2, 5}, {0.5, 0.5}, {50, 150}, {0.2, 3}}) {
    checks.push_back({fmt("Beta(%g,%g)", a, b), oracle::beta_moments(a, b),
                      [a, b](Stream& s) { return std::get<BetaDraw>(draw(BetaParams{a, b}, s)).p; }});
  }
  for (double a : {0.1, 0.3, 1.0, 2.5, 30.0}) {
    checks.push_back({fmt("Gamma(%g)", a), oracle::gamma_moments(a), [a](Stream& s) { return s.gamma(a); }});
  }
  const std::vector<std::vector<double>> dirichlets{{1, 1, 1}, {0.5, 2, 5}, {10, 0.3, 4, 7}};
  for (const auto& alphas : dirichlets) {
    const double total = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    for (std::size_t c = 0; c < alphas.size(); ++c) {
      checks.push_back({fmt("Dirichlet%zu[%zu]", alphas.size(), c), oracle::beta_moments(alphas[c], total - alphas[c]),
                        [alphas, c](Stream& s) { return std::get<DirichletDraw>(draw(DirichletParams{alphas}, s)).probs[c]; }});
    }
  }

  int failures = 0, tests = 0;
  std::string first_failure;
  for (int seed = 0; seed < kSeeds; ++seed) {
    for (std::size_t i = 0; i < checks.size(); ++i) {
      Stream s(derive_stream(seed, 77, i, 0));
      std::vector<double> x(kDraws);
      for (auto& v : x) v = checks[i].sample(s);
      const auto m = oracle::sample_moments(x);
      const auto& t = checks[i].truth;
      const bool mean_ok = std::abs(m.mean - t.mean()) < 4 * t.se_mean(kDraws);
      const bool var_ok = std::abs(m.variance - t.variance()) < 4 * t.se_variance(kDraws);
      tests += 2;
      failures += !mean_ok + !var_ok;
      if ((!mean_ok || !var_ok) && first_failure.empty()) first_failure = fmt(" first: %s seed %d", checks[i].name.c_str(), seed);
    }
    Stream s(derive_stream(seed, 78, 0, 0));
    std::vector<double> x(kKsDraws);
    for (auto& v : x) v = std::get<BetaDraw>(draw(BetaParams{2, 5}, s)).p;
    const double d = oracle::ks_statistic(x, [](double v) { return oracle::beta_cdf(v, 2, 5); });
    ++tests;
    if (d >= oracle::ks_critical_001(kKsDraws)) {
      ++failures;
      if (first_failure.empty()) first_failure = fmt(" first: KS seed %d (D=%.4f)", seed, d);
    }
  }
  return {failures == 0, fmt("%d failures in %d tests over %d seeds%s", failures, tests, kSeeds, first_failure.c_str())};
}

Dataset random_dataset(std::mt19937_64& rng, std::size_t n) {
  static const Task tasks[] = {Task::binary, Task::multiclass, Task::regression};
  const Task task = tasks[rng() % 3];
  std::vector<Column> cols;
  const std::size_t n_cat = 1 + rng() % 3;
  for (std::size_t c = 0; c < n_cat; ++c) {
    std::vector<std::string> v(n);
    const std::size_t levels = 1 + rng() % 12;
    for (auto& s : v) s = rng() % 20 == 0 ? "" : "v" + std::to_string(rng() % levels);
    cols.push_back({{"c" + std::to_string(c), ColumnKind::categorical}, {}, std::move(v)});
  }
  std::vector<double> num(n), y(n);
  std::normal_distribution<double> normal;
  for (auto& v : num) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = task == Task::regression ? normal(rng) : static_cast<double>(i % (task == Task::binary ? 2 : 3));
  }
  cols.push_back({{"x", ColumnKind::numeric}, std::move(num), {}});
  cols.push_back({{"y", ColumnKind::target}, std::move(y), {}});
  return Dataset(task, std::move(cols));
}

Outcome augmentation_fuzz() {
  std::mt19937_64 rng(20240);
  int failures = 0;
  std::string first;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng() % 198;
    const std::size_t k = 1 + rng() % 10;
    const auto data = random_dataset(rng, n);
    EncoderConfig cfg;
    cfg.seed = rng();
    cfg.gamma = (rng() % 3) * 0.5;
    const auto enc = transform_augment(fit(data, cfg), data, k);
    bool ok = enc.features.rows() == static_cast<Eigen::Index>(k * n) && enc.origin_row.size() == k * n &&
              enc.target.size() == k * n;
    std::vector<std::size_t> seen(n, 0);
    for (std::size_t r = 0; ok && r < enc.origin_row.size(); ++r) {
      const std::size_t o = enc.origin_row[r];
      ok = o < n && o == r % n && enc.draw_index[r] == r / n && enc.target[r] == data.target()[o];
      if (ok) ++seen[o];
    }
    for (std::size_t c : seen) ok = ok && c == k;
    if (!ok) {
      ++failures;
      if (first.empty()) first = fmt(", first at N=%zu K=%zu", n, k);
    }
  }
  return {failures == 0, fmt("%d/100 shapes violated the invariant%s", failures, first.c_str())};
}

Outcome decomposition() {
  GeneratorSpec g;
  g.kind = GeneratorKind::linear_regression;
  g.n_rows = 400;
  g.seed = 31;
  const auto data = generate(g);
  const auto fitted = [&](std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.seed = seed;
    const auto model = fit(data, cfg);
    RidgeSpec ridge;
    ridge.lambda = 1e-6;
    const auto learner = train(ridge, transform_augment(model, data, 2));
    return std::make_pair(model, BatchPredictor([learner](const Eigen::MatrixXd& x) { return predict(learner, x); }));
  };

  const auto [model, f] = fitted(0);
  const auto fixed = mse_decompose(model, f, data, 10000);
  const double rel = std::abs(fixed.residual) / fixed.mse_total;
  int decreasing = 0;
  std::string pairs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto [m, p] = fitted(seed);
    const double small = std::abs(mse_decompose(m, p, data, 100).residual);
    const double large = std::abs(mse_decompose(m, p, data, 10000).residual);
    decreasing += large < small;
    pairs += fmt(" %.2e->%.2e", small, large);
  }
  return {rel < 0.01 && decreasing == 5,
          fmt("residual/total %.2e at 1e4 draws (reg %.4f of %.4f); decreasing on %d/5:%s", rel, fixed.reg,
              fixed.mse_total, decreasing, pairs.c_str())};
}

Outcome laplace() {
  const DirichletParams post{{120, 200, 280}};
  Eigen::MatrixXd a(3, 3);
  a << 2.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 3.0;
  const auto e = laplace_predict(
      [&](std::span<const double> t) {
        const Eigen::Map<const Eigen::VectorXd> v(t.data(), static_cast<Eigen::Index>(t.size()));
        return v.dot(a * v);
      },
      post);
  const Eigen::Map<const Eigen::VectorXd> theta(e.theta_hat.data(), 3);
  const double exact = theta.dot(a * theta) + (a * e.covariance).trace();
  const double closed_err = std::abs(e.prediction - exact);

  const Eigen::MatrixXd l = (e.covariance + 1e-14 * Eigen::MatrixXd::Identity(3, 3)).llt().matrixL();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  constexpr std::size_t kDraws = 1000000;
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < kDraws; ++i) {
    const Eigen::Vector3d t = theta + l * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    const double v = t.dot(a * t);
    sum += v;
    sum_sq += v * v;
  }
  const double mc = sum / kDraws;
  const double se = std::sqrt((sum_sq / kDraws - mc * mc) / kDraws);
  const double mc_z = std::abs(e.prediction - mc) / se;

  const auto b = laplace_predict([](std::span<const double> t) { return t[0] * t[0]; }, BetaParams{50, 150});
  const double second_moment = 50.0 * 51.0 / (200.0 * 201.0);
  const double beta_err = std::abs(b.prediction - second_moment);

  return {closed_err < 1e-10 && mc_z < 4 && beta_err < 1e-4,
          fmt("closed form error %.2e, Monte Carlo %.2f SE, Beta(50,150) p^2 error %.2e", closed_err, mc_z, beta_err)};
}

std::string slurp(const std::filesystem::path& p) { return read_file(p); }

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / fmt("sbe_acceptance_%d", static_cast<int>(::getpid()));
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> steps{
      {"gen-data", "--rows 3000 --out data.csv"},
      {"fit", "--data {}/data.csv --gamma 0.5 --out encoder.json"},
      {"transform", "--data {}/data.csv --model {}/encoder.json --k 3 --out transform.csv"},
      {"evaluate", "--data {}/data.csv --k 2 --trees 20 --out cv.csv"},
      {"sweep", "--data {}/data.csv --param k --values 1,2,4 --trees 10 --out sweep.csv"},
      {"importance", "--data {}/data.csv --k 2 --trees 20 --out importance.csv"},
  };
  const std::vector<std::string> outputs{"data.csv", "encoder.json", "transform.csv", "cv.csv", "sweep.csv",
                                         "importance.csv"};
  for (int threads : {1, 8}) {
    const fs::path dir = root / std::to_string(threads);
    fs::create_directories(dir);
    for (const auto& [cmd, args] : steps) {
      std::string a = args;
      for (std::size_t pos; (pos = a.find("{}")) != std::string::npos;) a.replace(pos, 2, dir.string());
      const std::string line = fmt("\"%s\" --seed 11 --threads %d --output-dir \"%s\" %s %s > /dev/null 2>&1",
                                   SBE_CLI_PATH, threads, dir.c_str(), cmd.c_str(), a.c_str());
      if (std::system(line.c_str()) != 0) return {false, "command failed: " + line};
    }
  }
  int same = 0;
  std::string differ;
  for (const auto& name : outputs) {
    if (slurp(root / "1" / name) == slurp(root / "8" / name)) {
      ++same;
    } else {
      differ += " " + name;
    }
  }
  fs::remove_all(root);
  return {same == static_cast<int>(outputs.size()),
          fmt("%d/%zu outputs byte-identical across 1 and 8 threads", same, outputs.size()) +
              (differ.empty() ? "" : "; differ:" + differ)};
}

Outcome leakage_canary() {
  int checked = 0, changed = 0;
  for (GeneratorKind kind : {GeneratorKind::classification_blobs, GeneratorKind::linear_regression}) {
    GeneratorSpec g;
    g.kind = kind;
    g.n_rows = 2000;
    g.seed = 5;
    const auto data = generate(g);
    const auto folds = make_folds(data, kFolds, 9);
    for (double gamma : {0.0, 0.5}) {
      EncoderConfig cfg;
      cfg.gamma = gamma;
      cfg.seed = 3;
      for (std::size_t f = 0; f < kFolds; ++f) {
        const auto before = fit_fold_encoder(data, folds, f, cfg).serialize();
        auto mutated = data;
        auto y = mutated.target();
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (folds[i] == f) y[i] = data.task() == Task::regression ? y[i] * -3.0 + 100.0 : 1.0 - y[i];
        }
        mutated.set_target(y);
        ++checked;
        changed += fit_fold_encoder(mutated, folds, f, cfg).serialize() != before;
      }
    }
  }
  return {changed == 0, fmt("%d/%d fold encoders changed after mutating held-out targets", changed, checked)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "encoder comparison on classification_blobs", [] { return direction(GeneratorKind::classification_blobs); }},
      {2, "encoder comparison on hastie_quadratic", [] { return direction(GeneratorKind::hastie_quadratic); }},
      {3, "accuracy plateau in K", k_plateau},
      {4, "prior scale insensitivity then degradation", gamma_sweep},
      {5, "categorical importance shift", importance_shift},
      {6, "conjugate update examples", conjugate_examples},
      {7, "sampler moments and KS", sampler_moments},
      {8, "augmentation layout", augmentation_fuzz},
      {9, "loss decomposition identity", decomposition},
      {10, "large-sample correction", laplace},
      {11, "thread-count determinism", determinism},
      {12, "leakage canary", leakage_canary},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
