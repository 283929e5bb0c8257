#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mebart/matrix.hpp"

namespace mebart {

double mse(std::span<const double> pred, std::span<const double> truth);

/// Composite Simpson approximation of the integral of (f_true - f_est)^2 over
/// [lo, hi]; n_grid must be odd and >= 3.
double ise(const std::function<double(double)>& f_est, const std::function<double(double)>& f_true, double lo,
           double hi, std::size_t n_grid = 1001);

/// Same rule on values already evaluated at n_grid equally spaced points.
double simpson(std::span<const double> values, double lo, double hi);

/// E|S - y| - 0.5 E|S - S'| over all k^2 ordered pairs of draws.
double crps_samples(std::span<const double> samples, double observed);

/// Fraction of columns whose truth lies inside the pointwise [2.5%, 97.5%]
/// quantile interval of the draws (rows). Needs at least 40 draws.
double coverage95(const Matrix<double>& draws, std::span<const double> truth);

/// Linear-interpolation sample quantile (sorted input).
double sorted_quantile(std::span<const double> sorted, double prob);

struct XRmse {
  double raw = 0.0;
  double scaled = 0.0;
};
XRmse x_rmse(const Matrix<double>& x_hat, const Matrix<double>& x_true, double sigma_e);

/// sigma_x^2 / (sigma_x^2 + sigma_e^2).
double reliability_ratio(double sigma_x, double sigma_e);

/// One row per (scenario, method, replicate); absent entries are NaN in CSV.
struct MetricReport {
  std::string scenario;
  std::string method;
  int replicate = 0;
  double sigma_e = 0.0;

  bool has_mse_noisy = false, has_mse_true_x = false, has_ise = false, has_coverage95 = false;
  bool has_x_rmse = false, has_crps_y = false, has_crps_sigma = false, has_sigma_mean = false;
  double mse_noisy = 0.0;
  double mse_true_x = 0.0;
  double ise = 0.0;
  double coverage95 = 0.0;
  double x_rmse = 0.0;
  double x_rmse_scaled = 0.0;
  double crps_y = 0.0;
  double crps_sigma = 0.0;
  double sigma_mean = 0.0;

  /// Metric names and values in CSV column order; absent metrics omitted.
  std::vector<std::pair<std::string, double>> present() const;
  static const std::vector<std::string>& metric_names();
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace mebart
