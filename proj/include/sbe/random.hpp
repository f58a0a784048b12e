#pragma once

// Reproducible random variates.
//
// Every random quantity in the library comes from a Stream addressed by a
// 64-bit key. Keys are derived from a master seed and integer coordinates,
// so a draw depends only on (seed, coordinates), never on iteration order or
// thread count.
//
// Bit-exact definitions:
//
//   mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              return z ^ (z >> 31)
//   G = 0x9E3779B97F4A7C15
//
//   derive_stream(seed, a, b, c):
//              h = mix64(seed + G)
//              h = mix64(h + G * (a + 1))
//              h = mix64(h + G * (b + 1))
//              h = mix64(h + G * (c + 1))
//
//   Stream(key), i-th 64-bit output (i = 1, 2, ...):  mix64(key + G * i)
//   uniform():  ((u64 >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
//   normal():   Box-Muller on two uniforms, cosine branch only
//   gamma(a):   Marsaglia-Tsang squeeze for a >= 1; for a < 1,
//               gamma(a + 1) * uniform()^(1/a), computed in log space

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sbe/conjugate.hpp"

namespace sbe {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Key of one independent random stream (the seed context of a draw).
struct StreamKey {
  std::uint64_t value = 0;

  friend bool operator==(StreamKey, StreamKey) = default;
};

constexpr StreamKey derive_stream(std::uint64_t master_seed, std::uint64_t column,
                                  std::uint64_t index, std::uint64_t draw) noexcept {
  std::uint64_t h = mix64(master_seed + kGolden);
  h = mix64(h + kGolden * (column + 1));
  h = mix64(h + kGolden * (index + 1));
  h = mix64(h + kGolden * (draw + 1));
  return StreamKey{h};
}

/// Counter-based generator: output i is a pure function of (key, i).
class Stream {
 public:
  explicit Stream(StreamKey key) : key_(key.value) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ + kGolden * ++counter_); }
  double uniform() noexcept;
  double normal() noexcept;
  /// Gamma with the given shape and unit rate.
  double gamma(double shape);
  /// log of a unit-rate Gamma variate; finite even when the variate underflows.
  double log_gamma_variate(double shape);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) noexcept;

  std::uint64_t consumed() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct BetaDraw {
  double p = 0.0;
};
struct DirichletDraw {
  std::vector<double> probs;
};
struct NormalGammaDraw {
  double mu = 0.0;
  double tau = 0.0;
};

/// One realization of the posterior parameters.
using PosteriorDraw = std::variant<BetaDraw, DirichletDraw, NormalGammaDraw>;

/// Draws from a proper conjugate distribution. Beta and Dirichlet use
/// normalized Gamma variates; Normal-Gamma draws tau ~ Gamma(alpha, rate beta)
/// then mu ~ Normal(mu0, 1 / (nu * tau)).
PosteriorDraw draw(const ConjugateParams& params, Stream& stream);
PosteriorDraw draw(const ConjugateParams& params, StreamKey key);

/// Deterministic stand-in for a draw: the posterior mean as a point mass.
PosteriorDraw mean_draw(const ConjugateParams& params);

/// Rebuilds a draw from the flat parameter vector that posterior_mean uses.
PosteriorDraw draw_from_theta(Task task, std::span<const double> theta);

/// Flat parameter vector of a draw, in posterior_mean order.
std::vector<double> theta_of(const PosteriorDraw& d);

}  // namespace sbe
