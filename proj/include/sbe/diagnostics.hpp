#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbe/conjugate.hpp"
#include "sbe/dataset.hpp"
#include "sbe/encoder.hpp"

namespace sbe {

/// Split of the expected squared error of a sampled-encoding model into the
/// error of its draw-averaged prediction and the spread of the draws around
/// that average.
///
///   mse_total = (1/N) sum_n mean_d (y_n - f_nd)^2
///   mse0      = (1/N) sum_n (y_n - yhat_n)^2
///   reg       = (1/N) sum_n mean_d (f_nd - yhat_n)^2
///
/// yhat_n is the mean over an independent set of draws, so the residual
/// mse_total - mse0 - reg is pure Monte Carlo error and shrinks like
/// 1 / sqrt(draws).
struct DecompositionReport {
  double mse_total = 0.0;
  double mse0 = 0.0;
  double reg = 0.0;
  double residual = 0.0;
  std::size_t draws = 0;
  std::size_t rows = 0;
};

/// Regression only, draws >= 2. `predict` must return one column.
DecompositionReport mse_decompose(const EncoderModel& model, const BatchPredictor& predict, const Dataset& data,
                                  std::size_t draws, std::uint64_t salt = 7);

/// Second-order estimate of the posterior expectation of a smooth function
/// of the posterior parameters:
///   prediction = f(theta_hat) + 0.5 * tr(H C)
struct LaplaceEstimate {
  std::vector<double> theta_hat;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd hessian;
  double plugin = 0.0;
  double correction = 0.0;
  double prediction = 0.0;
};

using ThetaFunction = std::function<double(std::span<const double>)>;

/// Hessian by central differences with step max(1e-4, 1e-4 |theta_i|).
/// Throws std::domain_error if f is not finite at any probed point.
Eigen::MatrixXd finite_difference_hessian(const ThetaFunction& f, std::span<const double> theta);

/// theta_hat is the posterior mean and C the exact posterior covariance of
/// the same parameter vector (see posterior_mean / posterior_covariance).
LaplaceEstimate laplace_predict(const ThetaFunction& f, const ConjugateParams& posterior);
LaplaceEstimate laplace_predict(const ThetaFunction& f, std::span<const double> theta_hat,
                                const Eigen::MatrixXd& covariance);

/// Per-category spread of sampled encodings next to the spread that
/// multiplicative Gaussian noise (1 + N(0, sigma^2)) would add to the same
/// category's mean.
struct NoiseComparisonRow {
  std::string category;
  std::size_t count = 0;
  double posterior_mean = 0.0;
  double draw_sd = 0.0;    // empirical, over `draws` posterior samples
  double closed_sd = 0.0;  // Beta posterior standard deviation
  double noise_sd = 0.0;   // sigma * posterior_mean
};

/// Binary models only; one row per training category of `column`.
std::vector<NoiseComparisonRow> compare_noise_injection(const EncoderModel& model, const std::string& column,
                                                        double sigma, std::size_t draws, std::uint64_t salt = 11);

std::string format_decomposition_csv(const DecompositionReport& report);
std::string format_laplace_csv(std::span<const std::string> labels, std::span<const LaplaceEstimate> estimates,
                               std::span<const double> reference);
std::string format_noise_csv(const std::string& column, std::span<const NoiseComparisonRow> rows);

}  // namespace sbe
