#include "sbe/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sbe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Normalizes log-Gamma variates onto the simplex.
std::vector<double> normalize_logs(const std::vector<double>& logs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logs) top = std::max(top, v);
  std::vector<double> out(logs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    out[i] = std::exp(logs[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

double Stream::uniform() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Stream::log_gamma_variate(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::domain_error("gamma shape must be positive and finite");
  }
  if (shape < 1.0) {
    // Shape boost: G(a) = G(a + 1) * U^(1/a).
    const double boosted = log_gamma_variate(shape + 1.0);
    return boosted + std::log(uniform()) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
  }
}

double Stream::gamma(double shape) { return std::exp(log_gamma_variate(shape)); }

std::size_t Stream::below(std::size_t n) noexcept {
  // Multiply-high mapping; bias is below 2^-64 * n, irrelevant at desk scale.
  const auto wide = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

PosteriorDraw draw(const ConjugateParams& params, Stream& stream) {
  if (!is_proper(params)) throw std::domain_error("cannot sample from an improper distribution");
  return std::visit(
      overloaded{
          [&](const BetaParams& p) -> PosteriorDraw {
            const double la = stream.log_gamma_variate(p.alpha);
            const double lb = stream.log_gamma_variate(p.beta);
            // p = Ga / (Ga + Gb) = 1 / (1 + exp(lb - la))
            return BetaDraw{1.0 / (1.0 + std::exp(lb - la))};
          },
          [&](const DirichletParams& p) -> PosteriorDraw {
            std::vector<double> logs;
            logs.reserve(p.alphas.size());
            for (double a : p.alphas) logs.push_back(stream.log_gamma_variate(a));
            return DirichletDraw{normalize_logs(logs)};
          },
          [&](const NormalGammaParams& p) -> PosteriorDraw {
            const double tau = stream.gamma(p.alpha) / p.beta;
            const double mu = p.mu0 + stream.normal() / std::sqrt(p.nu * tau);
            return NormalGammaDraw{mu, tau};
          },
      },
      params);
}

PosteriorDraw draw(const ConjugateParams& params, StreamKey key) {
  Stream stream(key);
  return draw(params, stream);
}

PosteriorDraw mean_draw(const ConjugateParams& params) {
  const auto m = posterior_mean(params);
  return draw_from_theta(task_of(params), m);
}

PosteriorDraw draw_from_theta(Task task, std::span<const double> theta) {
  switch (task) {
    case Task::binary:
      if (theta.size() != 1) throw std::invalid_argument("binary parameter vector has one component");
      return BetaDraw{theta[0]};
    case Task::multiclass:
      return DirichletDraw{std::vector<double>(theta.begin(), theta.end())};
    case Task::regression:
      if (theta.size() != 2) throw std::invalid_argument("regression parameter vector is (mu, tau)");
      return NormalGammaDraw{theta[0], theta[1]};
  }
  throw std::logic_error("unreachable");
}

std::vector<double> theta_of(const PosteriorDraw& d) {
  return std::visit(overloaded{
                        [](const BetaDraw& b) { return std::vector<double>{b.p}; },
                        [](const DirichletDraw& b) { return b.probs; },
                        [](const NormalGammaDraw& b) { return std::vector<double>{b.mu, b.tau}; },
                    },
                    d);
}

}  // namespace sbe
