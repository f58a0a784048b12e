#include "sbe/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sbe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_task(const TargetStats& stats, Task expected) {
  if (stats.task() != expected) {
    throw std::invalid_argument("category statistics are for task '" +
                                std::string(to_string(stats.task())) + "', prior is for '" +
                                std::string(to_string(expected)) + "'");
  }
}

}  // namespace

Task task_of(const ConjugateParams& params) {
  return std::visit(overloaded{
                        [](const BetaParams&) { return Task::binary; },
                        [](const DirichletParams&) { return Task::multiclass; },
                        [](const NormalGammaParams&) { return Task::regression; },
                    },
                    params);
}

bool is_proper(const ConjugateParams& params) {
  return std::visit(
      overloaded{
          [](const BetaParams& p) { return p.alpha > 0.0 && p.beta > 0.0; },
          [](const DirichletParams& p) {
            return !p.alphas.empty() &&
                   std::all_of(p.alphas.begin(), p.alphas.end(), [](double a) { return a > 0.0; });
          },
          [](const NormalGammaParams& p) { return p.proper(); },
      },
      params);
}

TargetStats::TargetStats(Task task, std::size_t n_classes) : task_(task) {
  if (task == Task::multiclass) {
    if (n_classes < 2) throw std::invalid_argument("multiclass statistics need at least 2 classes");
    class_counts_.assign(n_classes, 0.0);
  }
}

void TargetStats::add(double y) {
  switch (task_) {
    case Task::binary:
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("binary target must be 0 or 1");
      ++n_;
      sum_y_ += y;
      break;
    case Task::multiclass: {
      if (y < 0.0 || y != std::floor(y) || y >= static_cast<double>(class_counts_.size())) {
        throw std::invalid_argument("class index out of range");
      }
      ++n_;
      class_counts_[static_cast<std::size_t>(y)] += 1.0;
      break;
    }
    case Task::regression: {
      if (!std::isfinite(y)) throw std::invalid_argument("regression target must be finite");
      ++n_;
      const double delta = y - mean_;
      mean_ += delta / static_cast<double>(n_);
      sum_sq_dev_ += delta * (y - mean_);
      break;
    }
  }
}

void TargetStats::merge(const TargetStats& other) {
  require_task(other, task_);
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  switch (task_) {
    case Task::binary:
      sum_y_ += other.sum_y_;
      break;
    case Task::multiclass:
      if (other.class_counts_.size() != class_counts_.size()) {
        throw std::invalid_argument("class count mismatch in merge");
      }
      for (std::size_t c = 0; c < class_counts_.size(); ++c) class_counts_[c] += other.class_counts_[c];
      break;
    case Task::regression: {
      const double na = static_cast<double>(n_);
      const double nb = static_cast<double>(other.n_);
      const double delta = other.mean_ - mean_;
      const double total = na + nb;
      mean_ += delta * nb / total;
      sum_sq_dev_ += other.sum_sq_dev_ + delta * delta * na * nb / total;
      break;
    }
  }
  n_ += other.n_;
}

TargetStats TargetStats::binary(std::size_t n, double successes) {
  if (successes < 0.0 || successes > static_cast<double>(n)) {
    throw std::invalid_argument("success count out of range");
  }
  TargetStats s(Task::binary);
  s.n_ = n;
  s.sum_y_ = successes;
  return s;
}

TargetStats TargetStats::multiclass(std::vector<double> counts) {
  TargetStats s(Task::multiclass, counts.size());
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw std::invalid_argument("negative class count");
    total += c;
  }
  s.class_counts_ = std::move(counts);
  s.n_ = static_cast<std::size_t>(total);
  return s;
}

TargetStats TargetStats::regression(std::size_t n, double mean, double sum_sq_dev) {
  if (sum_sq_dev < 0.0) throw std::invalid_argument("negative sum of squared deviations");
  TargetStats s(Task::regression);
  s.n_ = n;
  s.mean_ = mean;
  s.sum_sq_dev_ = sum_sq_dev;
  return s;
}

TargetStats summarize(Task task, std::span<const double> y, std::size_t n_classes) {
  TargetStats stats(task, n_classes);
  for (double v : y) stats.add(v);
  return stats;
}

ConjugateParams scaled_prior(const TargetSummary& summary, double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("prior scaling factor must be finite and non-negative");
  }
  const double n = static_cast<double>(summary.n());
  switch (summary.task()) {
    case Task::binary:
      return BetaParams{1.0 + gamma * summary.sum_y(), 1.0 + gamma * (n - summary.sum_y())};
    case Task::multiclass: {
      DirichletParams p;
      p.alphas.reserve(summary.class_counts().size());
      for (double c : summary.class_counts()) p.alphas.push_back(1.0 + gamma * c);
      return p;
    }
    case Task::regression:
      return NormalGammaParams{summary.mean(), 0.0, gamma * n / 2.0,
                               gamma / 2.0 * summary.sum_sq_dev()};
  }
  throw std::logic_error("unreachable");
}

double regression_rate_floor(double rate) {
  const double floor = 1e-9 * std::max(1.0, rate);
  return std::max(rate, floor);
}

ConjugateParams posterior_update(const ConjugateParams& prior, const CategoryStats& stats) {
  return std::visit(
      overloaded{
          [&](const BetaParams& p) -> ConjugateParams {
            require_task(stats, Task::binary);
            const double successes = stats.sum_y();
            const double failures = static_cast<double>(stats.n()) - successes;
            return BetaParams{p.alpha + successes, p.beta + failures};
          },
          [&](const DirichletParams& p) -> ConjugateParams {
            require_task(stats, Task::multiclass);
            if (stats.class_counts().size() != p.alphas.size()) {
              throw std::invalid_argument("class count mismatch between prior and statistics");
            }
            DirichletParams out = p;
            for (std::size_t c = 0; c < out.alphas.size(); ++c) out.alphas[c] += stats.class_counts()[c];
            return out;
          },
          [&](const NormalGammaParams& p) -> ConjugateParams {
            require_task(stats, Task::regression);
            if (stats.n() == 0) {
              if (p.nu == 0.0) throw std::invalid_argument("empty category under a flat prior on the mean");
              return p;
            }
            const double n = static_cast<double>(stats.n());
            const double ybar = stats.mean();
            const double nu = p.nu + n;
            const double mu = (p.nu * p.mu0 + n * ybar) / nu;
            const double alpha = p.alpha + n / 2.0;
            const double dev = ybar - p.mu0;
            const double cross = (n * p.nu / nu) * dev * dev / 2.0;
            const double rate = p.beta + stats.sum_sq_dev() / 2.0 + cross;
            return NormalGammaParams{mu, nu, alpha, regression_rate_floor(rate)};
          },
      },
      prior);
}

std::vector<double> posterior_mean(const ConjugateParams& params) {
  if (!is_proper(params)) throw std::domain_error("posterior is not proper; moments undefined");
  return std::visit(overloaded{
                        [](const BetaParams& p) {
                          return std::vector<double>{p.alpha / (p.alpha + p.beta)};
                        },
                        [](const DirichletParams& p) {
                          const double total = std::accumulate(p.alphas.begin(), p.alphas.end(), 0.0);
                          std::vector<double> out;
                          out.reserve(p.alphas.size());
                          for (double a : p.alphas) out.push_back(a / total);
                          return out;
                        },
                        [](const NormalGammaParams& p) {
                          return std::vector<double>{p.mu0, p.alpha / p.beta};
                        },
                    },
                    params);
}

Eigen::MatrixXd posterior_covariance(const ConjugateParams& params) {
  if (!is_proper(params)) throw std::domain_error("posterior is not proper; moments undefined");
  return std::visit(
      overloaded{
          [](const BetaParams& p) {
            const double s = p.alpha + p.beta;
            Eigen::MatrixXd c(1, 1);
            c(0, 0) = p.alpha * p.beta / (s * s * (s + 1.0));
            return c;
          },
          [](const DirichletParams& p) {
            const auto m = static_cast<Eigen::Index>(p.alphas.size());
            const double a0 = std::accumulate(p.alphas.begin(), p.alphas.end(), 0.0);
            const double denom = a0 * a0 * (a0 + 1.0);
            Eigen::MatrixXd c(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
              for (Eigen::Index j = 0; j < m; ++j) {
                const double ai = p.alphas[static_cast<std::size_t>(i)];
                const double aj = p.alphas[static_cast<std::size_t>(j)];
                c(i, j) = ((i == j ? ai * a0 : 0.0) - ai * aj) / denom;
              }
            }
            return c;
          },
          [](const NormalGammaParams& p) {
            if (p.alpha <= 1.0) {
              throw std::domain_error("marginal variance of the mean needs shape > 1");
            }
            Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
            c(0, 0) = p.beta / (p.nu * (p.alpha - 1.0));
            c(1, 1) = p.alpha / (p.beta * p.beta);
            return c;
          },
      },
      params);
}

}  // namespace sbe
