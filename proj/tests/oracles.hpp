#pragma once
// Independent reference computations for tests. Nothing here calls the
// library's own numerics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Beta CDF for integer-ish shapes >= 1 by direct integration of the density.
inline double beta_cdf(double x, double a, double b) {
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  auto pdf = [&](double t) {
    if (t <= 0 || t >= 1) return 0.0;
    return std::exp(log_norm + (a - 1) * std::log(t) + (b - 1) * std::log1p(-t));
  };
  return simpson(pdf, 0.0, x, 400);
}

/// Raw moments E[X^k], k = 0..4.
struct RawMoments {
  double m[5];
  double mean() const { return m[1]; }
  double variance() const { return m[2] - m[1] * m[1]; }
  double fourth_central() const {
    const double mu = m[1];
    return m[4] - 4 * mu * m[3] + 6 * mu * mu * m[2] - 3 * mu * mu * mu * mu;
  }
  /// Standard errors of the sample mean and sample variance.
  double se_mean(double n) const { return std::sqrt(variance() / n); }
  double se_variance(double n) const {
    const double v = variance();
    return std::sqrt((fourth_central() - v * v) / n);
  }
};

inline RawMoments beta_moments(double a, double b) {
  RawMoments r{{1, 0, 0, 0, 0}};
  for (int k = 1; k <= 4; ++k) r.m[k] = r.m[k - 1] * (a + k - 1) / (a + b + k - 1);
  return r;
}

/// Gamma(shape a, rate 1).
inline RawMoments gamma_moments(double a) {
  RawMoments r{{1, 0, 0, 0, 0}};
  for (int k = 1; k <= 4; ++k) r.m[k] = r.m[k - 1] * (a + k - 1);
  return r;
}

struct SampleMoments {
  double mean = 0;
  double variance = 0;
};

inline SampleMoments sample_moments(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  const double m = s / x.size();
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, ss / (x.size() - 1)};
}

/// One-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic KS critical value at the 0.1% level.
inline double ks_critical_001(double n) { return 1.9495 / std::sqrt(n); }

/// Regularized lower incomplete gamma P(a, x) by its power series.
inline double gamma_p(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < 1000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Chi-squared median by bisection on the CDF.
inline double chi_squared_median(int dof) {
  double lo = 0, hi = 10.0 * dof + 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gamma_p(dof / 2.0, mid / 2.0) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
