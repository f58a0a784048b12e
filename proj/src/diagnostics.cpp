#include "sbe/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sbe/random.hpp"

namespace sbe {

namespace {

// Upper bound on encoded rows materialized at once.
constexpr std::size_t kChunkRows = 1 << 18;

// Running per-row statistics over draws.
struct RowAccumulator {
  std::vector<double> mean;
  std::vector<double> sum_sq_err;  // sum over draws of (y - f)^2
  std::vector<double> sum_sq_dev;  // sum over draws of (f - ref)^2
};

template <class Visit>
void for_each_draw_chunk(const EncoderModel& model, const BatchPredictor& predict, const Dataset& data,
                         std::size_t draws, std::uint64_t salt, Visit&& visit) {
  const std::size_t n = data.rows();
  const std::size_t chunk = std::max<std::size_t>(1, kChunkRows / std::max<std::size_t>(n, 1));
  for (std::size_t first = 0; first < draws; first += chunk) {
    const std::size_t k = std::min(chunk, draws - first);
    const EncodedDataset enc = transform_draws(model, data, first, k, salt);
    const Eigen::MatrixXd out = predict(enc.features);
    if (out.cols() != 1 || static_cast<std::size_t>(out.rows()) != n * k) {
      throw std::invalid_argument("decomposition needs one prediction per encoded row");
    }
    for (std::size_t d = 0; d < k; ++d) {
      for (std::size_t i = 0; i < n; ++i) visit(first + d, i, out(static_cast<Eigen::Index>(d * n + i), 0));
    }
  }
}

void check_finite(double v) {
  if (!std::isfinite(v)) throw std::domain_error("model output is not finite near theta_hat");
}

}  // namespace

DecompositionReport mse_decompose(const EncoderModel& model, const BatchPredictor& predict, const Dataset& data,
                                  std::size_t draws, std::uint64_t salt) {
  if (model.task != Task::regression) throw std::invalid_argument("decomposition needs a regression model");
  if (draws < 2) throw std::invalid_argument("decomposition needs at least 2 draws");
  const std::size_t n = data.rows();
  if (n == 0) throw std::invalid_argument("decomposition needs at least one row");
  const auto& y = data.target();

  // Point estimate from its own draw set.
  std::vector<double> yhat(n, 0.0);
  for_each_draw_chunk(model, predict, data, draws, mix64(salt), [&](std::size_t d, std::size_t i, double f) {
    yhat[i] += (f - yhat[i]) / static_cast<double>(d + 1);
  });

  std::vector<double> err(n, 0.0);
  std::vector<double> dev(n, 0.0);
  for_each_draw_chunk(model, predict, data, draws, salt, [&](std::size_t d, std::size_t i, double f) {
    const double k = static_cast<double>(d + 1);
    err[i] += ((y[i] - f) * (y[i] - f) - err[i]) / k;
    dev[i] += ((f - yhat[i]) * (f - yhat[i]) - dev[i]) / k;
  });

  DecompositionReport r;
  r.draws = draws;
  r.rows = n;
  for (std::size_t i = 0; i < n; ++i) {
    r.mse_total += err[i];
    r.mse0 += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    r.reg += dev[i];
  }
  const double dn = static_cast<double>(n);
  r.mse_total /= dn;
  r.mse0 /= dn;
  r.reg /= dn;
  r.residual = r.mse_total - r.mse0 - r.reg;
  return r;
}

Eigen::MatrixXd finite_difference_hessian(const ThetaFunction& f, std::span<const double> theta) {
  const auto d = static_cast<Eigen::Index>(theta.size());
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> h(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) h[i] = std::max(1e-4, 1e-4 * std::abs(theta[i]));

  auto eval = [&]() {
    const double v = f(x);
    check_finite(v);
    return v;
  };
  const double f0 = eval();
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    x[ui] = theta[ui] + h[ui];
    const double fp = eval();
    x[ui] = theta[ui] - h[ui];
    const double fm = eval();
    x[ui] = theta[ui];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[ui] * h[ui]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      double s = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          x[ui] = theta[ui] + si * h[ui];
          x[uj] = theta[uj] + sj * h[uj];
          s += si * sj * eval();
        }
      }
      x[ui] = theta[ui];
      x[uj] = theta[uj];
      hess(i, j) = hess(j, i) = s / (4.0 * h[ui] * h[uj]);
    }
  }
  return hess;
}

LaplaceEstimate laplace_predict(const ThetaFunction& f, std::span<const double> theta_hat,
                                const Eigen::MatrixXd& covariance) {
  const auto d = static_cast<Eigen::Index>(theta_hat.size());
  if (covariance.rows() != d || covariance.cols() != d) {
    throw std::invalid_argument("covariance shape does not match theta");
  }
  LaplaceEstimate e;
  e.theta_hat.assign(theta_hat.begin(), theta_hat.end());
  e.covariance = covariance;
  e.plugin = f(theta_hat);
  check_finite(e.plugin);
  e.hessian = finite_difference_hessian(f, theta_hat);
  e.correction = 0.5 * (e.hessian * covariance).trace();
  e.prediction = e.plugin + e.correction;
  return e;
}

LaplaceEstimate laplace_predict(const ThetaFunction& f, const ConjugateParams& posterior) {
  const auto theta = posterior_mean(posterior);
  return laplace_predict(f, theta, posterior_covariance(posterior));
}

std::vector<NoiseComparisonRow> compare_noise_injection(const EncoderModel& model, const std::string& column,
                                                        double sigma, std::size_t draws, std::uint64_t salt) {
  if (model.task != Task::binary) throw std::invalid_argument("noise comparison needs a binary model");
  if (sigma < 0.0 || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and >= 0");
  if (draws < 2) throw std::invalid_argument("noise comparison needs at least 2 draws");
  const auto it = std::find_if(model.columns.begin(), model.columns.end(),
                               [&](const ColumnPosteriors& c) { return c.name == column; });
  if (it == model.columns.end()) throw std::invalid_argument("no categorical column '" + column + "'");
  const auto col = static_cast<std::size_t>(it - model.columns.begin());

  std::vector<NoiseComparisonRow> rows;
  for (std::size_t c = 0; c < it->categories.size(); ++c) {
    const auto& post = std::get<BetaParams>(it->posteriors[c]);
    NoiseComparisonRow row;
    row.category = it->categories[c];
    row.count = it->counts[c];
    const double s = post.alpha + post.beta;
    row.posterior_mean = post.alpha / s;
    row.closed_sd = std::sqrt(post.alpha * post.beta / (s * s * (s + 1.0)));
    row.noise_sd = sigma * row.posterior_mean;
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      const double p = std::get<BetaDraw>(draw(it->posteriors[c], derive_stream(stream_seed(model.config.seed, salt), col, c, d))).p;
      const double delta = p - mean;
      mean += delta / static_cast<double>(d + 1);
      m2 += delta * (p - mean);
    }
    row.draw_sd = std::sqrt(m2 / static_cast<double>(draws - 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_decomposition_csv(const DecompositionReport& r) {
  std::ostringstream out;
  out << "draws,rows,mse_total,mse0,reg,residual\n";
  out << r.draws << ',' << r.rows << ',' << format_number(r.mse_total) << ',' << format_number(r.mse0) << ','
      << format_number(r.reg) << ',' << format_number(r.residual) << '\n';
  return out.str();
}

std::string format_laplace_csv(std::span<const std::string> labels, std::span<const LaplaceEstimate> estimates,
                               std::span<const double> reference) {
  if (labels.size() != estimates.size() || reference.size() != estimates.size()) {
    throw std::invalid_argument("laplace report columns differ in length");
  }
  std::ostringstream out;
  out << "case,plugin,correction,laplace,reference,abs_error\n";
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    out << quote_field(labels[i]) << ',' << format_number(e.plugin) << ',' << format_number(e.correction) << ','
        << format_number(e.prediction) << ',' << format_number(reference[i]) << ','
        << format_number(std::abs(e.prediction - reference[i])) << '\n';
  }
  return out.str();
}

std::string format_noise_csv(const std::string& column, std::span<const NoiseComparisonRow> rows) {
  std::ostringstream out;
  out << "column,category,count,posterior_mean,draw_sd,closed_sd,noise_sd\n";
  for (const auto& r : rows) {
    out << quote_field(column) << ',' << quote_field(r.category) << ',' << r.count << ','
        << format_number(r.posterior_mean) << ',' << format_number(r.draw_sd) << ','
        << format_number(r.closed_sd) << ',' << format_number(r.noise_sd) << '\n';
  }
  return out.str();
}

}  // namespace sbe
